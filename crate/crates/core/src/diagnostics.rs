//! Optimality and rate metrics.
//!
//! The main quantity is the full proximal gradient at unit coefficient,
//!
//! ```text
//! ĝ(x) = argmin_d { ∇f(x)ᵀd + ½‖d‖² + Ψ(x + d) },
//! ```
//!
//! which vanishes exactly at prox-stationary points.

use crate::error::{Error, Result};
use crate::linalg::norm_sq;
use crate::solver::{CompositeProblem, RunTrace};

/// `ĝ(x)` given `∇f(x)`.
pub fn prox_gradient_from_grad(problem: &CompositeProblem, x: &[f64], grad: &[f64]) -> Vec<f64> {
    let partition = problem.oracle.partition();
    let mut out = Vec::with_capacity(x.len());
    for i in 0..partition.num_blocks() {
        let r = partition.range(i);
        let d = problem
            .reg
            .prox_block(&x[r.clone()], &grad[r], 1.0)
            .expect("θ = 1 and matching block lengths");
        out.extend(d);
    }
    out
}

pub fn full_prox_gradient(problem: &CompositeProblem, x: &[f64]) -> Vec<f64> {
    let grad = problem.oracle.grad_at(x);
    prox_gradient_from_grad(problem, x, &grad)
}

/// `dist(−∇f(x), ∂Ψ(x))` for convex `Ψ`.
pub fn kkt_residual_from_grad(problem: &CompositeProblem, x: &[f64], grad: &[f64]) -> Result<f64> {
    let partition = problem.oracle.partition();
    let mut sq = 0.0;
    for i in 0..partition.num_blocks() {
        let r = partition.range(i);
        sq += problem
            .reg
            .subgradient_residual_sq_block(&x[r.clone()], &grad[r])?;
    }
    Ok(sq.sqrt())
}

pub fn kkt_residual(problem: &CompositeProblem, x: &[f64]) -> Result<f64> {
    let grad = problem.oracle.grad_at(x);
    kkt_residual_from_grad(problem, x, &grad)
}

/// Constant `(c/2)[1 + 1/α_low + sqrt(1 − 2/c + 1/α_low²)]` bounding
/// `‖ĝ‖ / ‖d̄‖` for convex `Ψ`, where `d̄` is the composed blockwise step.
pub fn proportionality_constant(c: f64, alpha_low: f64) -> f64 {
    let root = (1.0 - 2.0 / c + 1.0 / (alpha_low * alpha_low)).sqrt();
    0.5 * c * (1.0 + 1.0 / alpha_low + root)
}

/// Least-squares slope of `log min_{t ≤ k} ‖ĝ^t‖²` against `log k`.
///
/// `samples` are `(k, ‖ĝ^k‖)` pairs in increasing `k`. Samples with `k = 0`
/// and the first `memory + 1` positive-`k` samples are dropped; at least 20
/// must remain.
pub fn rate_trend(samples: &[(usize, f64)], memory: usize) -> Result<f64> {
    let mut running = f64::INFINITY;
    let mut points = Vec::new();
    for &(k, pg) in samples {
        running = running.min(pg * pg);
        if k > 0 {
            points.push((k as f64, running.max(f64::MIN_POSITIVE)));
        }
    }
    let points: Vec<(f64, f64)> = points.into_iter().skip(memory + 1).collect();
    if points.len() < 20 {
        return Err(Error::DiagnosticUnavailable(format!(
            "rate fit needs 20 samples after the first {} , got {}",
            memory + 1,
            points.len()
        )));
    }
    let n = points.len() as f64;
    let (sx, sy) = points
        .iter()
        .fold((0.0, 0.0), |(sx, sy), &(k, v)| (sx + k.ln(), sy + v.ln()));
    let (mx, my) = (sx / n, sy / n);
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for &(k, v) in &points {
        let dx = k.ln() - mx;
        sxy += dx * (v.ln() - my);
        sxx += dx * dx;
    }
    if sxx == 0.0 {
        return Err(Error::DiagnosticUnavailable(
            "all samples at the same k".into(),
        ));
    }
    Ok(sxy / sxx)
}

/// Snapshot of the optimality metrics at one iterate.
#[derive(Debug, Clone, PartialEq)]
pub struct DiagnosticReport {
    pub pg_norm: f64,
    pub gap: Option<f64>,
    pub kkt_residual: Option<f64>,
    pub min_pg_sq_so_far: f64,
    pub epoch: f64,
}

/// Accumulates reports and keeps the running minimum of `‖ĝ‖²`.
#[derive(Debug, Clone)]
pub struct DiagnosticTracker {
    f_star: Option<f64>,
    min_pg_sq: f64,
    reports: Vec<DiagnosticReport>,
}

impl DiagnosticTracker {
    pub fn new(f_star: Option<f64>) -> Self {
        Self {
            f_star,
            min_pg_sq: f64::INFINITY,
            reports: Vec::new(),
        }
    }

    pub fn observe(
        &mut self,
        problem: &CompositeProblem,
        x: &[f64],
        epoch: f64,
    ) -> &DiagnosticReport {
        let grad = problem.oracle.grad_at(x);
        let g_hat = prox_gradient_from_grad(problem, x, &grad);
        let pg_sq = norm_sq(&g_hat);
        self.min_pg_sq = self.min_pg_sq.min(pg_sq);
        let kkt = if problem.reg.is_convex() {
            kkt_residual_from_grad(problem, x, &grad).ok()
        } else {
            None
        };
        let report = DiagnosticReport {
            pg_norm: pg_sq.sqrt(),
            gap: self.f_star.map(|fs| problem.objective(x) - fs),
            kkt_residual: kkt,
            min_pg_sq_so_far: self.min_pg_sq,
            epoch,
        };
        self.reports.push(report);
        self.reports.last().unwrap()
    }

    pub fn reports(&self) -> &[DiagnosticReport] {
        &self.reports
    }
}

/// Rate exponent of a solver trace; see [`rate_trend`].
pub fn trace_rate(trace: &RunTrace, memory: usize) -> Result<f64> {
    rate_trend(&trace.pg_samples(), memory)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::block::BlockPartition;
    use crate::linalg::Matrix;
    use crate::oracle::SmoothOracle;
    use crate::regularizers::Regularizer;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn problem(reg: Regularizer) -> CompositeProblem {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let data: Vec<f64> = (0..15 * 6).map(|_| rng.random_range(-1.0..1.0)).collect();
        let b: Vec<f64> = (0..15).map(|_| rng.random_range(-1.0..1.0)).collect();
        let oracle = SmoothOracle::least_squares(
            Matrix::from_col_major(15, 6, data).unwrap(),
            b,
            BlockPartition::uniform(6, 2).unwrap(),
        )
        .unwrap();
        CompositeProblem::new(oracle, reg).unwrap()
    }

    #[test]
    fn unconstrained_prox_gradient_is_negative_gradient() {
        let p = problem(Regularizer::Zero);
        let x = vec![0.1, -0.2, 0.3, 0.0, 1.0, -1.0];
        let g = p.oracle.grad_at(&x);
        let gh = full_prox_gradient(&p, &x);
        for (a, b) in gh.iter().zip(&g) {
            assert!((a + b).abs() < 1e-15);
        }
        let kkt = kkt_residual(&p, &x).unwrap();
        assert!((kkt - norm_sq(&g).sqrt()).abs() < 1e-14);
    }

    #[test]
    fn zero_is_stationary_without_gradient() {
        // b = 0 gives ∇f(0) = 0
        let a = Matrix::from_rows(&[vec![1.0, 2.0], vec![0.5, -1.0]]).unwrap();
        let oracle =
            SmoothOracle::least_squares(a, vec![0.0, 0.0], BlockPartition::uniform(2, 1).unwrap())
                .unwrap();
        let p = CompositeProblem::new(oracle, Regularizer::L1(0.5)).unwrap();
        assert!(full_prox_gradient(&p, &[0.0, 0.0])
            .iter()
            .all(|&v| v == 0.0));
        assert_eq!(kkt_residual(&p, &[0.0, 0.0]).unwrap(), 0.0);
    }

    #[test]
    fn box_interior_residual_is_gradient_norm() {
        let p = problem(Regularizer::Box { lo: -5.0, hi: 5.0 });
        let x = vec![0.5; 6];
        let g = p.oracle.grad_at(&x);
        assert!((kkt_residual(&p, &x).unwrap() - norm_sq(&g).sqrt()).abs() < 1e-14);
    }

    #[test]
    fn l0_has_no_kkt_residual() {
        let p = problem(Regularizer::L0(0.1));
        assert!(matches!(
            kkt_residual(&p, &[0.0; 6]),
            Err(Error::Unsupported(_))
        ));
    }

    #[test]
    fn rate_of_exact_power_law() {
        let samples: Vec<(usize, f64)> = (1..=100)
            .map(|t| (t * 10, (1.0 / (t * 10) as f64).sqrt()))
            .collect();
        let rho = rate_trend(&samples, 0).unwrap();
        assert!((rho + 1.0).abs() < 0.01, "{rho}");
    }

    #[test]
    fn rate_of_constant_sequence() {
        let samples: Vec<(usize, f64)> = (1..=50).map(|t| (t, 0.3)).collect();
        assert_eq!(rate_trend(&samples, 10).unwrap(), 0.0);
    }

    #[test]
    fn rate_needs_enough_samples() {
        let samples: Vec<(usize, f64)> = (1..=25).map(|t| (t, 1.0 / t as f64)).collect();
        assert!(rate_trend(&samples, 0).is_ok());
        assert!(matches!(
            rate_trend(&samples, 10),
            Err(Error::DiagnosticUnavailable(_))
        ));
    }

    #[test]
    fn tracker_running_min_is_nonincreasing() {
        let p = problem(Regularizer::L1(0.2));
        let mut t = DiagnosticTracker::new(None);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for e in 0..20 {
            let x: Vec<f64> = (0..6).map(|_| rng.random_range(-1.0..1.0)).collect();
            t.observe(&p, &x, e as f64);
        }
        for w in t.reports().windows(2) {
            assert!(w[1].min_pg_sq_so_far <= w[0].min_pg_sq_so_far);
        }
    }

    #[test]
    fn proportionality_constant_is_finite() {
        let c = proportionality_constant(1e8, 1e-8);
        assert!(c.is_finite() && c > 0.0);
        // c = 2, α_low = 1: ½·2·[1 + 1 + sqrt(1 − 1 + 1)] = 3
        assert!((proportionality_constant(2.0, 1.0) - 3.0).abs() < 1e-15);
    }
}
