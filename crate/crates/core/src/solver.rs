//! Randomized block proximal gradient methods.
//!
//! One outer iteration picks a block `i` with probability `p_i`, chooses an
//! initial coefficient `θ⁰ ∈ [α_low, α_high]` and solves the block
//! subproblem with `θ = θ⁰ η^j`, `j = 0, 1, …`, until the nonmonotone
//! sufficient decrease test
//!
//! ```text
//! F(x + d) ≤ max_{[k−M]⁺ ≤ t ≤ k} F(x^t) − (σ/2)‖d‖²
//! ```
//!
//! holds. Every accepted `θ` stays below `c = max{α_high, η (L_max + σ)}`,
//! so the inner loop is capped and exhausting the cap is reported as a
//! numerical failure.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use crate::block::{BlockSampler, ObjectiveWindow, SolverParams};
use crate::diagnostics;
use crate::error::{Error, LineSearchFailure, Result};
use crate::linalg::norm_sq;
use crate::oracle::{OracleState, SmoothOracle};
use crate::regularizers::Regularizer;
use crate::trace::TraceRecord;

/// `F = f + Ψ`.
#[derive(Debug, Clone)]
pub struct CompositeProblem {
    pub oracle: SmoothOracle,
    pub reg: Regularizer,
}

impl CompositeProblem {
    pub fn new(oracle: SmoothOracle, reg: Regularizer) -> Result<Self> {
        reg.validate()?;
        Ok(Self { oracle, reg })
    }

    pub fn dim(&self) -> usize {
        self.oracle.dim()
    }

    pub fn num_blocks(&self) -> usize {
        self.oracle.partition().num_blocks()
    }

    /// `Ψ_i(x_i)` with a length check against the partition.
    pub fn value_block(&self, i: usize, x_i: &[f64]) -> Result<f64> {
        let n_i = self.oracle.partition().size(i);
        if x_i.len() != n_i {
            return Err(Error::Dimension {
                expected: n_i,
                got: x_i.len(),
            });
        }
        Ok(self.reg.value_block(x_i))
    }

    pub fn prox_block(&self, i: usize, x_i: &[f64], g_i: &[f64], theta: f64) -> Result<Vec<f64>> {
        let n_i = self.oracle.partition().size(i);
        if x_i.len() != n_i {
            return Err(Error::Dimension {
                expected: n_i,
                got: x_i.len(),
            });
        }
        self.reg.prox_block(x_i, g_i, theta)
    }

    pub fn reg_value(&self, x: &[f64]) -> f64 {
        self.oracle
            .partition()
            .blocks(x)
            .map(|b| self.reg.value_block(b))
            .sum()
    }

    /// `F(x)` recomputed from scratch.
    pub fn objective(&self, x: &[f64]) -> f64 {
        self.oracle.value_at(x) + self.reg_value(x)
    }
}

/// Which member of the family to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    /// Nonmonotone line search with memory `SolverParams::window`. With
    /// `bb_init` the initial coefficient is the spectral estimate, otherwise
    /// the last accepted coefficient of the block.
    Rnbpg { bb_init: bool },
    /// Constant coefficient `θ = L_i`, unconditional step.
    RbcdFixed,
    /// Monotone backtracking (`M = 0`) warm-started from the last accepted
    /// coefficient of the block; every block starts at `α_low`.
    RbcdLs,
}

impl Method {
    pub const RNBPG: Method = Method::Rnbpg { bb_init: true };

    pub fn name(&self) -> &'static str {
        match self {
            Method::Rnbpg { bb_init: true } => "rnbpg",
            Method::Rnbpg { bb_init: false } => "rnbpg_nobb",
            Method::RbcdFixed => "rbcd",
            Method::RbcdLs => "rbcd_ls",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "rnbpg" => Ok(Method::RNBPG),
            "rnbpg_nobb" => Ok(Method::Rnbpg { bb_init: false }),
            "rbcd" => Ok(Method::RbcdFixed),
            "rbcd_ls" => Ok(Method::RbcdLs),
            other => Err(Error::Parameter(format!("unknown method {other:?}"))),
        }
    }
}

/// `F_trial ≤ window_max − (σ/2)‖d‖²`, non-strict.
pub fn accept(f_trial: f64, window_max: f64, sigma: f64, step_norm_sq: f64) -> bool {
    f_trial <= window_max - 0.5 * sigma * step_norm_sq
}

#[derive(Debug, Clone)]
pub struct SolverState {
    pub oracle: OracleState,
    pub window: ObjectiveWindow,
    pub sampler: BlockSampler,
    /// Iterations performed.
    pub k: usize,
    /// Coordinates touched so far; `coords / N` is the epoch count.
    pub coords: usize,
    /// `F(x^k)`.
    pub objective: f64,
    psi_blocks: Vec<f64>,
    theta_memory: Vec<f64>,
}

impl SolverState {
    pub fn x(&self) -> &[f64] {
        self.oracle.x()
    }

    pub fn epoch(&self) -> f64 {
        self.coords as f64 / self.oracle.x().len() as f64
    }
}

/// Result of one block subproblem solve.
#[derive(Debug, Clone)]
pub struct TrialStep {
    pub theta: f64,
    pub d: Vec<f64>,
    pub f_trial: f64,
    pub step_norm_sq: f64,
    psi_new: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    MaxIters,
    MaxEpochs,
    GapReached,
    Stationary,
}

#[derive(Debug, Clone)]
pub struct RunTrace {
    pub records: Vec<TraceRecord>,
    pub x: Vec<f64>,
    pub stop: StopReason,
}

impl RunTrace {
    /// First record whose gap is at most `gap_tol`.
    pub fn first_hit(&self, gap_tol: f64) -> Option<&TraceRecord> {
        self.records
            .iter()
            .find(|r| r.gap.is_some_and(|g| g <= gap_tol))
    }

    pub fn last(&self) -> &TraceRecord {
        self.records
            .last()
            .expect("trace always has the initial record")
    }

    /// `(k, ‖ĝ^k‖)` for every record that carries a diagnostic.
    pub fn pg_samples(&self) -> Vec<(usize, f64)> {
        self.records
            .iter()
            .filter_map(|r| r.pg_norm.map(|p| (r.k, p)))
            .collect()
    }
}

/// A configured solver over a borrowed problem.
#[derive(Debug)]
pub struct Solver<'a> {
    problem: &'a CompositeProblem,
    method: Method,
    params: SolverParams,
    lipschitz: Vec<f64>,
    l_max: f64,
    inner_cap: usize,
    probs: Vec<f64>,
    diag_period: usize,
}

impl<'a> Solver<'a> {
    pub fn new(
        problem: &'a CompositeProblem,
        method: Method,
        params: SolverParams,
    ) -> Result<Self> {
        params.validate()?;
        let n = problem.num_blocks();
        let probs = params.probs.probabilities(n)?;
        let lipschitz = problem.oracle.lipschitz_constants();
        let l_max = lipschitz.iter().copied().fold(0.0, f64::max);
        let inner_cap = params.inner_cap(l_max);
        let diag_period = params.diagnostic_period.unwrap_or_else(|| {
            let partition = problem.oracle.partition();
            (partition.total() / partition.max_size()).max(1)
        });
        Ok(Self {
            problem,
            method,
            params,
            lipschitz,
            l_max,
            inner_cap,
            probs,
            diag_period,
        })
    }

    pub fn problem(&self) -> &CompositeProblem {
        self.problem
    }

    pub fn method(&self) -> Method {
        self.method
    }

    pub fn params(&self) -> &SolverParams {
        &self.params
    }

    pub fn lipschitz(&self) -> &[f64] {
        &self.lipschitz
    }

    pub fn l_max(&self) -> f64 {
        self.l_max
    }

    /// `c = max{α_high, η (L_max + σ)}`.
    pub fn theta_cap(&self) -> f64 {
        self.params.theta_cap(self.l_max)
    }

    /// `⌈log_η(c / α_low)⌉ + 1`.
    pub fn trial_bound(&self) -> usize {
        self.params.trial_bound(self.l_max)
    }

    pub fn inner_cap(&self) -> usize {
        self.inner_cap
    }

    pub fn diagnostic_period(&self) -> usize {
        self.diag_period
    }

    /// Nonmonotone memory actually used by the method.
    pub fn memory(&self) -> usize {
        match self.method {
            Method::Rnbpg { .. } => self.params.window,
            Method::RbcdFixed | Method::RbcdLs => 0,
        }
    }

    fn clamp_alpha(&self, v: f64) -> f64 {
        v.clamp(self.params.alpha_low, self.params.alpha_high)
    }

    pub fn init(&self, x0: Vec<f64>) -> Result<SolverState> {
        if !self.problem.reg.contains(&x0) {
            return Err(Error::Parameter("starting point is outside dom(Ψ)".into()));
        }
        let oracle = self.problem.oracle.init_state(x0)?;
        let partition = self.problem.oracle.partition();
        let psi_blocks: Vec<f64> = partition
            .blocks(oracle.x())
            .map(|b| self.problem.reg.value_block(b))
            .collect();
        let objective = self.problem.oracle.value(&oracle) + psi_blocks.iter().sum::<f64>();
        if !objective.is_finite() {
            return Err(Error::Divergence {
                k: 0,
                value: objective,
            });
        }
        let mut window = ObjectiveWindow::new(self.memory());
        window.push(objective);
        let theta_memory = match self.method {
            Method::RbcdLs => vec![self.params.alpha_low; self.lipschitz.len()],
            _ => self
                .lipschitz
                .iter()
                .map(|&l| self.clamp_alpha(l))
                .collect(),
        };
        Ok(SolverState {
            oracle,
            window,
            sampler: BlockSampler::new(&self.probs, self.params.seed)?,
            k: 0,
            coords: 0,
            objective,
            psi_blocks,
            theta_memory,
        })
    }

    /// Spectral estimate `‖A_:,i u‖² / ‖u‖²` where `u` is the block prox step
    /// at `θ = L_i`, clamped to `[α_low, α_high]`; falls back to
    /// `clamp(L_i)` when `u = 0`.
    pub fn bb_init(&self, state: &SolverState, i: usize, grad_i: &[f64]) -> Result<f64> {
        let l_i = self.lipschitz[i];
        let x_i = self.problem.oracle.partition().block(state.x(), i);
        let u = self.problem.prox_block(i, x_i, grad_i, l_i)?;
        let u_sq = norm_sq(&u);
        if u_sq > 0.0 {
            let ratio = self.problem.oracle.block_curvature(i, &u) / u_sq;
            Ok(self.clamp_alpha(ratio))
        } else {
            Ok(self.clamp_alpha(l_i))
        }
    }

    /// Solve the block subproblem at coefficient `theta` and evaluate the
    /// trial objective, touching only block `i`.
    pub fn try_step(
        &self,
        state: &SolverState,
        i: usize,
        grad_i: &[f64],
        theta: f64,
    ) -> Result<TrialStep> {
        let x_i = self.problem.oracle.partition().block(state.x(), i);
        let d = self.problem.prox_block(i, x_i, grad_i, theta)?;
        let z: Vec<f64> = x_i.iter().zip(&d).map(|(a, b)| a + b).collect();
        let psi_new = self.problem.reg.value_block(&z);
        let delta_f = self.problem.oracle.trial_delta(i, &d, grad_i);
        let f_trial = state.objective + delta_f + (psi_new - state.psi_blocks[i]);
        Ok(TrialStep {
            theta,
            step_norm_sq: norm_sq(&d),
            d,
            f_trial,
            psi_new,
        })
    }

    fn initial_theta(&self, state: &SolverState, i: usize, grad_i: &[f64]) -> Result<f64> {
        match self.method {
            Method::Rnbpg { bb_init: true } => self.bb_init(state, i, grad_i),
            _ => Ok(state.theta_memory[i]),
        }
    }

    /// Inner loop for block `i` at the current iterate. Returns the accepted
    /// trial and the number of subproblems solved.
    fn line_search(
        &self,
        state: &SolverState,
        i: usize,
        grad_i: &[f64],
    ) -> Result<(TrialStep, usize)> {
        if self.method == Method::RbcdFixed {
            return Ok((self.try_step(state, i, grad_i, self.lipschitz[i])?, 1));
        }
        let theta0 = self.initial_theta(state, i, grad_i)?;
        let threshold = state.window.max()?;
        let mut thetas = Vec::new();
        let mut values = Vec::new();
        for j in 0..self.inner_cap {
            let theta = theta0 * self.params.eta.powi(j as i32);
            let trial = self.try_step(state, i, grad_i, theta)?;
            if accept(
                trial.f_trial,
                threshold,
                self.params.sigma,
                trial.step_norm_sq,
            ) {
                return Ok((trial, j + 1));
            }
            thetas.push(theta);
            values.push(trial.f_trial);
        }
        Err(Error::LineSearchFailure(Box::new(LineSearchFailure {
            k: state.k,
            block: i,
            thetas,
            trial_values: values,
            window: state.window.to_vec(),
        })))
    }

    /// One outer iteration: sample, line search, commit, record.
    pub fn iterate(&self, state: &mut SolverState) -> Result<TraceRecord> {
        let i = state.sampler.sample();
        let grad_i = self.problem.oracle.partial_grad(&state.oracle, i);
        let (trial, inner_trials) = self.line_search(state, i, &grad_i)?;

        let refreshed = self
            .problem
            .oracle
            .commit_step(&mut state.oracle, i, &trial.d)?;
        state.psi_blocks[i] = trial.psi_new;
        state.objective = if refreshed {
            self.problem.oracle.value(&state.oracle) + state.psi_blocks.iter().sum::<f64>()
        } else {
            trial.f_trial
        };
        state.k += 1;
        state.coords += self.problem.oracle.partition().size(i);
        if !state.objective.is_finite() {
            return Err(Error::Divergence {
                k: state.k,
                value: state.objective,
            });
        }
        state.window.push(state.objective);
        if self.method != Method::RbcdFixed {
            state.theta_memory[i] = trial.theta;
        }

        Ok(TraceRecord {
            k: state.k,
            epoch: state.epoch(),
            block: Some(i),
            theta: trial.theta,
            inner_trials,
            f_value: state.objective,
            gap: self.params.f_star.map(|fs| state.objective - fs),
            step_norm_sq: trial.step_norm_sq,
            pg_norm: None,
            kkt_residual: None,
            elapsed: 0.0,
        })
    }

    fn attach_diagnostics(&self, state: &SolverState, record: &mut TraceRecord) {
        let grad = self.problem.oracle.full_grad(&state.oracle);
        let g_hat = diagnostics::prox_gradient_from_grad(self.problem, state.x(), &grad);
        record.pg_norm = Some(norm_sq(&g_hat).sqrt());
        if self.problem.reg.is_convex() {
            record.kkt_residual =
                diagnostics::kkt_residual_from_grad(self.problem, state.x(), &grad).ok();
        }
    }

    /// Run from `x0` (zero when `None`) until a stopping rule fires, calling
    /// `on_record` for every record including the initial one.
    pub fn run<F>(&self, x0: Option<Vec<f64>>, mut on_record: F) -> Result<RunTrace>
    where
        F: FnMut(&TraceRecord),
    {
        let start = Instant::now();
        let x0 = x0.unwrap_or_else(|| vec![0.0; self.problem.dim()]);
        let mut state = self.init(x0)?;

        let mut initial = TraceRecord {
            k: 0,
            epoch: 0.0,
            block: None,
            theta: 0.0,
            inner_trials: 0,
            f_value: state.objective,
            gap: self.params.f_star.map(|fs| state.objective - fs),
            step_norm_sq: 0.0,
            pg_norm: None,
            kkt_residual: None,
            elapsed: 0.0,
        };
        self.attach_diagnostics(&state, &mut initial);
        on_record(&initial);
        let mut records = vec![initial];

        let stop = loop {
            let last = records.last().unwrap();
            if last.gap.is_some_and(|g| g <= self.params.gap_tol) {
                break StopReason::GapReached;
            }
            if last.pg_norm.is_some_and(|p| p <= self.params.tol) {
                break StopReason::Stationary;
            }
            if state.k >= self.params.max_iters {
                break StopReason::MaxIters;
            }
            if self.params.max_epochs.is_some_and(|e| state.epoch() >= e) {
                break StopReason::MaxEpochs;
            }
            let mut record = self.iterate(&mut state)?;
            if state.k % self.diag_period == 0 {
                self.attach_diagnostics(&state, &mut record);
            }
            record.elapsed = start.elapsed().as_secs_f64();
            on_record(&record);
            records.push(record);
        };

        Ok(RunTrace {
            records,
            x: state.x().to_vec(),
            stop,
        })
    }

    /// Accepted blockwise steps for every block at the current iterate,
    /// without committing any of them: the composed step `d̄ = Σ_i d^{k,i}`
    /// and the coefficients `θ_{k,i}`. Costs one line search per block.
    pub fn composed_step(&self, state: &SolverState) -> Result<(Vec<f64>, Vec<f64>)> {
        let partition = self.problem.oracle.partition();
        let mut d_bar = vec![0.0; self.problem.dim()];
        let mut thetas = Vec::with_capacity(partition.num_blocks());
        for i in 0..partition.num_blocks() {
            let grad_i = self.problem.oracle.partial_grad(&state.oracle, i);
            let (trial, _) = self.line_search(state, i, &grad_i)?;
            partition.block_mut(&mut d_bar, i).copy_from_slice(&trial.d);
            thetas.push(trial.theta);
        }
        Ok((d_bar, thetas))
    }
}
