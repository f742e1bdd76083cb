//! Synthetic ℓ1-least-squares instances with a certified optimum, and the
//! `BPXI` binary instance format.
//!
//! # Generator
//!
//! For `(m, N, s, λ, seed)`, with a ChaCha8 stream seeded by `seed`:
//!
//! 1. draw `B ∈ ℝ^{m×N}` with entries uniform on `[−1, 1]`, row by row;
//! 2. draw `y*` uniformly on the unit sphere of `ℝ^m`;
//! 3. set `v = Bᵀy*` and take the `s` largest `|v_j|` as the support;
//! 4. draw `u_j ~ U[0, 1]` for every `j`; scale support columns by `λ/|v_j|`,
//!    off-support columns with `|v_j| > λ` by `λ u_j/|v_j|`, and leave the
//!    rest unchanged;
//! 5. draw `x*_j = ξ_j sign(v_j)` with `ξ_j ~ U[0.1, 1]` on the support;
//! 6. set `b = A x* + y*`.
//!
//! Then `Aᵀ(Ax* − b) = −Aᵀy*` equals `−λ sign(x*_j)` on the support and is
//! bounded by `λ` elsewhere, which certifies optimality of `x*`. The
//! certificate is checked before the instance is returned.
//!
//! # BPXI layout (little endian)
//!
//! | field | type |
//! |---|---|
//! | magic `"BPXI"` | 4 bytes |
//! | version (`1`) | u32 |
//! | m, N | u32, u32 |
//! | A, row-major | m·N × f64 |
//! | b | m × f64 |
//! | λ | f64 |
//! | optimum flag (0/1) | u32 |
//! | x*, F* (flag = 1 only) | N × f64, f64 |

use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::block::BlockPartition;
use crate::error::{Error, Result};
use crate::linalg::{norm, Matrix};
use crate::oracle::SmoothOracle;
use crate::regularizers::Regularizer;
use crate::solver::CompositeProblem;

pub const BPXI_MAGIC: &[u8; 4] = b"BPXI";
pub const BPXI_VERSION: u32 = 1;

/// Tolerance of the KKT certificate.
pub const CERTIFICATE_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct KnownOptimum {
    pub x: Vec<f64>,
    pub value: f64,
}

/// `min ½‖Ax − b‖² + λ‖x‖₁`, optionally with a known optimum.
#[derive(Debug, Clone, PartialEq)]
pub struct LassoInstance {
    pub a: Matrix,
    pub b: Vec<f64>,
    pub lambda: f64,
    pub optimum: Option<KnownOptimum>,
}

impl LassoInstance {
    pub fn rows(&self) -> usize {
        self.a.rows()
    }

    pub fn cols(&self) -> usize {
        self.a.cols()
    }

    pub fn f_star(&self) -> Option<f64> {
        self.optimum.as_ref().map(|o| o.value)
    }

    pub fn sparsity(&self) -> Option<usize> {
        self.optimum
            .as_ref()
            .map(|o| o.x.iter().filter(|&&v| v != 0.0).count())
    }

    pub fn objective(&self, x: &[f64]) -> f64 {
        let mut r = self.a.matvec(x);
        r.iter_mut().zip(&self.b).for_each(|(ri, bi)| *ri -= bi);
        0.5 * r.iter().map(|v| v * v).sum::<f64>()
            + self.lambda * x.iter().map(|v| v.abs()).sum::<f64>()
    }

    /// Largest violation of the ℓ1 optimality conditions at `x`: on nonzeros
    /// `|∇_j f + λ sign(x_j)|`, elsewhere `max(0, |∇_j f| − λ)`.
    pub fn kkt_violation(&self, x: &[f64]) -> f64 {
        let mut r = self.a.matvec(x);
        r.iter_mut().zip(&self.b).for_each(|(ri, bi)| *ri -= bi);
        let grad = self.a.tr_matvec(&r);
        grad.iter()
            .zip(x)
            .map(|(&g, &xj)| {
                if xj != 0.0 {
                    (g + self.lambda * xj.signum()).abs()
                } else {
                    (g.abs() - self.lambda).max(0.0)
                }
            })
            .fold(0.0, f64::max)
    }

    /// Certificate check for the stored optimum; returns the KKT violation.
    pub fn verify(&self) -> Result<f64> {
        let opt = self
            .optimum
            .as_ref()
            .ok_or_else(|| Error::Generator("instance carries no optimum".into()))?;
        let violation = self.kkt_violation(&opt.x);
        if !(violation <= CERTIFICATE_TOL) {
            return Err(Error::Generator(format!("KKT violation {violation:e}")));
        }
        let recomputed = self.objective(&opt.x);
        if (recomputed - opt.value).abs() > 1e-10 * recomputed.abs().max(1.0) {
            return Err(Error::Generator(format!(
                "stored F* {} differs from recomputed {recomputed}",
                opt.value
            )));
        }
        Ok(violation)
    }

    /// The composite problem with uniform blocks of `block_size`.
    pub fn problem(&self, block_size: usize) -> Result<CompositeProblem> {
        let partition = BlockPartition::uniform(self.cols(), block_size)?;
        let oracle = SmoothOracle::least_squares(self.a.clone(), self.b.clone(), partition)?;
        CompositeProblem::new(oracle, Regularizer::L1(self.lambda))
    }
}

/// Generate an instance; see the module docs for the construction.
pub fn generate_lasso(
    m: usize,
    n: usize,
    sparsity: usize,
    lambda: f64,
    seed: u64,
) -> Result<LassoInstance> {
    check_shape(m, n, sparsity, lambda)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut row_major = Vec::with_capacity(m * n);
    for _ in 0..m * n {
        row_major.push(rng.random_range(-1.0..=1.0));
    }
    let b_mat = Matrix::from_row_major(m, n, &row_major)?;
    let mut y: Vec<f64> = (0..m).map(|_| rng.sample(StandardNormal)).collect();
    let ny = norm(&y);
    y.iter_mut().for_each(|v| *v /= ny);
    build_from_parts(b_mat, y, sparsity, lambda, &mut rng)
}

fn check_shape(m: usize, n: usize, sparsity: usize, lambda: f64) -> Result<()> {
    if m == 0 || n == 0 {
        return Err(Error::Parameter(format!("need m, N >= 1, got {m} and {n}")));
    }
    if sparsity == 0 || sparsity > m.min(n) {
        return Err(Error::Parameter(format!(
            "sparsity {sparsity} must lie in 1..={}",
            m.min(n)
        )));
    }
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(Error::Parameter(format!(
            "lambda = {lambda} must be positive"
        )));
    }
    Ok(())
}

/// Steps 3–6 of the construction from a given matrix `B` and unit vector `y*`.
pub(crate) fn build_from_parts(
    mut a: Matrix,
    y_star: Vec<f64>,
    sparsity: usize,
    lambda: f64,
    rng: &mut ChaCha8Rng,
) -> Result<LassoInstance> {
    let (m, n) = (a.rows(), a.cols());
    check_shape(m, n, sparsity, lambda)?;
    let v = a.tr_matvec(&y_star);

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| v[j].abs().total_cmp(&v[i].abs()).then(i.cmp(&j)));
    let mut on_support = vec![false; n];
    for &j in &order[..sparsity] {
        on_support[j] = true;
    }

    let u: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..1.0)).collect();
    for j in 0..n {
        let vj = v[j].abs();
        let scale = if on_support[j] {
            if vj == 0.0 {
                return Err(Error::Generator(format!(
                    "support column {j} is orthogonal to y*"
                )));
            }
            lambda / vj
        } else if vj > lambda {
            lambda * u[j] / vj
        } else {
            1.0
        };
        if scale != 1.0 {
            a.col_mut(j).iter_mut().for_each(|e| *e *= scale);
        }
    }

    let mut x_star = vec![0.0; n];
    for j in 0..n {
        if on_support[j] {
            let xi: f64 = rng.random_range(0.1..=1.0);
            x_star[j] = xi * v[j].signum();
        }
    }
    let mut b = a.matvec(&x_star);
    b.iter_mut().zip(&y_star).for_each(|(bi, yi)| *bi += yi);

    let mut inst = LassoInstance {
        a,
        b,
        lambda,
        optimum: None,
    };
    let value = inst.objective(&x_star);
    inst.optimum = Some(KnownOptimum { x: x_star, value });
    inst.verify()?;
    Ok(inst)
}

/// Serialize to BPXI bytes.
pub fn to_bytes(inst: &LassoInstance) -> Vec<u8> {
    let (m, n) = (inst.rows(), inst.cols());
    let mut out = Vec::with_capacity(24 + 8 * (m * n + m + n + 2));
    out.extend_from_slice(BPXI_MAGIC);
    out.extend_from_slice(&BPXI_VERSION.to_le_bytes());
    out.extend_from_slice(&(m as u32).to_le_bytes());
    out.extend_from_slice(&(n as u32).to_le_bytes());
    for v in inst.a.to_row_major() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    for v in &inst.b {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out.extend_from_slice(&inst.lambda.to_le_bytes());
    match &inst.optimum {
        Some(opt) => {
            out.extend_from_slice(&1u32.to_le_bytes());
            for v in &opt.x {
                out.extend_from_slice(&v.to_le_bytes());
            }
            out.extend_from_slice(&opt.value.to_le_bytes());
        }
        None => out.extend_from_slice(&0u32.to_le_bytes()),
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, len: usize, what: &str) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < len {
            return Err(Error::Format {
                offset: self.pos,
                msg: format!("truncated while reading {what}"),
            });
        }
        let s = &self.bytes[self.pos..self.pos + len];
        self.pos += len;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn f64s(&mut self, count: usize, what: &str) -> Result<Vec<f64>> {
        let raw = self.take(count * 8, what)?;
        Ok(raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }
}

/// Parse BPXI bytes.
pub fn from_bytes(bytes: &[u8]) -> Result<LassoInstance> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4, "magic")? != BPXI_MAGIC {
        return Err(Error::Format {
            offset: 0,
            msg: "bad magic, expected \"BPXI\"".into(),
        });
    }
    let version = r.u32("version")?;
    if version != BPXI_VERSION {
        return Err(Error::UnsupportedVersion(version));
    }
    let m = r.u32("m")? as usize;
    let n = r.u32("N")? as usize;
    let a = Matrix::from_row_major(m, n, &r.f64s(m * n, "A")?)?;
    let b = r.f64s(m, "b")?;
    let lambda = r.f64s(1, "lambda")?[0];
    let flag_at = r.pos;
    let optimum = match r.u32("optimum flag")? {
        0 => None,
        1 => {
            let x = r.f64s(n, "x*")?;
            let value = r.f64s(1, "F*")?[0];
            Some(KnownOptimum { x, value })
        }
        other => {
            return Err(Error::Format {
                offset: flag_at,
                msg: format!("optimum flag must be 0 or 1, got {other}"),
            })
        }
    };
    if r.pos != bytes.len() {
        return Err(Error::Format {
            offset: r.pos,
            msg: format!("{} trailing bytes", bytes.len() - r.pos),
        });
    }
    Ok(LassoInstance {
        a,
        b,
        lambda,
        optimum,
    })
}

pub fn save_instance(inst: &LassoInstance, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, to_bytes(inst))?;
    Ok(())
}

pub fn load_instance(path: impl AsRef<Path>) -> Result<LassoInstance> {
    from_bytes(&fs::read(path)?)
}

/// Load a small hand-made instance: one CSV row per matrix row with `b` as
/// the last column. Lines starting with `#` are skipped.
pub fn load_csv(path: impl AsRef<Path>, lambda: f64) -> Result<LassoInstance> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_path(path)?;
    let mut rows = Vec::new();
    let mut b = Vec::new();
    for (line, rec) in reader.records().enumerate() {
        let rec = rec?;
        let vals: Vec<f64> = rec
            .iter()
            .map(|f| {
                f.parse::<f64>().map_err(|_| Error::Config {
                    line: line + 1,
                    msg: format!("not a number: {f:?}"),
                })
            })
            .collect::<Result<_>>()?;
        if vals.len() < 2 {
            return Err(Error::Config {
                line: line + 1,
                msg: "need at least one matrix column and b".into(),
            });
        }
        let (row, last) = vals.split_at(vals.len() - 1);
        rows.push(row.to_vec());
        b.push(last[0]);
    }
    if rows.is_empty() {
        return Err(Error::Config {
            line: 0,
            msg: "empty CSV instance".into(),
        });
    }
    Ok(LassoInstance {
        a: Matrix::from_rows(&rows)?,
        b,
        lambda,
        optimum: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_distr::StandardNormal;

    #[test]
    fn certificate_holds_on_small_instances() {
        for (m, n, s) in [(5, 8, 2), (10, 10, 10), (20, 7, 3), (1, 1, 1)] {
            let inst = generate_lasso(m, n, s, 1.0, 3).unwrap();
            assert!(inst.verify().unwrap() <= CERTIFICATE_TOL);
            assert_eq!(inst.sparsity(), Some(s));
        }
    }

    #[test]
    fn full_scale_instance() {
        let inst = generate_lasso(1000, 2000, 200, 1.0, 7).unwrap();
        assert_eq!((inst.rows(), inst.cols()), (1000, 2000));
        assert_eq!(inst.sparsity(), Some(200));
    }

    #[test]
    fn orthogonal_square_gives_dense_certified_optimum() {
        // Householder reflector: orthogonal and symmetric
        let n = 6;
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let w: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
        let ww: f64 = w.iter().map(|v| v * v).sum();
        let mut h = Matrix::identity(n);
        for r in 0..n {
            for c in 0..n {
                h[(r, c)] -= 2.0 * w[r] * w[c] / ww;
            }
        }
        let mut y: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
        let ny = norm(&y);
        y.iter_mut().for_each(|v| *v /= ny);
        let inst = build_from_parts(h, y, n, 0.5, &mut rng).unwrap();
        assert_eq!(inst.sparsity(), Some(n));
        assert!(inst.verify().unwrap() <= CERTIFICATE_TOL);
    }

    #[test]
    fn perturbations_increase_objective() {
        let inst = generate_lasso(30, 50, 6, 1.0, 1).unwrap();
        let opt = inst.optimum.as_ref().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for _ in 0..100 {
            let dir: Vec<f64> = (0..50).map(|_| rng.sample(StandardNormal)).collect();
            let nd = norm(&dir);
            let x: Vec<f64> = opt
                .x
                .iter()
                .zip(&dir)
                .map(|(a, d)| a + 0.01 * d / nd)
                .collect();
            assert!(inst.objective(&x) > opt.value);
        }
    }

    #[test]
    fn deterministic_generation() {
        let a = generate_lasso(12, 20, 4, 1.0, 5).unwrap();
        let b = generate_lasso(12, 20, 4, 1.0, 5).unwrap();
        assert_eq!(to_bytes(&a), to_bytes(&b));
        let c = generate_lasso(12, 20, 4, 1.0, 6).unwrap();
        assert_ne!(to_bytes(&a), to_bytes(&c));
    }

    #[test]
    fn lambda_scaling_doubles_support_correlations() {
        let seed = 8;
        let one = generate_lasso(15, 25, 5, 1.0, seed).unwrap();
        let two = generate_lasso(15, 25, 5, 2.0, seed).unwrap();
        // Aᵀy* with y* = b − Ax*
        let y_of = |inst: &LassoInstance| {
            let ax = inst.a.matvec(&inst.optimum.as_ref().unwrap().x);
            inst.b
                .iter()
                .zip(&ax)
                .map(|(b, a)| b - a)
                .collect::<Vec<_>>()
        };
        let c1 = one.a.tr_matvec(&y_of(&one));
        let c2 = two.a.tr_matvec(&y_of(&two));
        let x1 = &one.optimum.as_ref().unwrap().x;
        let x2 = &two.optimum.as_ref().unwrap().x;
        for j in 0..25 {
            assert_eq!(x1[j] != 0.0, x2[j] != 0.0);
            if x1[j] != 0.0 {
                assert!(
                    (c2[j] - 2.0 * c1[j]).abs() < 1e-10,
                    "{j}: {} vs {}",
                    c2[j],
                    c1[j]
                );
            }
        }
    }

    #[test]
    fn invalid_shapes() {
        assert!(generate_lasso(0, 5, 1, 1.0, 0).is_err());
        assert!(generate_lasso(5, 5, 0, 1.0, 0).is_err());
        assert!(generate_lasso(5, 8, 6, 1.0, 0).is_err());
        assert!(generate_lasso(5, 8, 2, 0.0, 0).is_err());
    }

    #[test]
    fn bpxi_round_trip_is_bit_exact() {
        let inst = generate_lasso(7, 9, 3, 0.7, 2).unwrap();
        let bytes = to_bytes(&inst);
        let back = from_bytes(&bytes).unwrap();
        assert_eq!(back, inst);
        assert_eq!(to_bytes(&back), bytes);

        let mut bare = inst.clone();
        bare.optimum = None;
        assert_eq!(from_bytes(&to_bytes(&bare)).unwrap(), bare);
    }

    #[test]
    fn bpxi_errors() {
        let bytes = to_bytes(&generate_lasso(4, 5, 2, 1.0, 2).unwrap());
        for cut in [0, 3, 10, 20, bytes.len() - 1] {
            match from_bytes(&bytes[..cut]) {
                Err(Error::Format { offset, .. }) => assert!(offset <= cut),
                other => panic!("cut {cut}: {other:?}"),
            }
        }
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(
            from_bytes(&bad),
            Err(Error::Format { offset: 0, .. })
        ));
        let mut v2 = bytes.clone();
        v2[4..8].copy_from_slice(&2u32.to_le_bytes());
        assert!(matches!(from_bytes(&v2), Err(Error::UnsupportedVersion(2))));
        let mut trailing = bytes;
        trailing.push(0);
        assert!(matches!(from_bytes(&trailing), Err(Error::Format { .. })));
    }

    #[test]
    fn csv_loader() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("tiny.csv");
        fs::write(&path, "# a1, a2, b\n1, 0, 1\n0, 2, 1\n").unwrap();
        let inst = load_csv(&path, 0.5).unwrap();
        assert_eq!(
            inst.a,
            Matrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 2.0]]).unwrap()
        );
        assert_eq!(inst.b, vec![1.0, 1.0]);
        assert!(inst.optimum.is_none());
        fs::write(&path, "1, 0, 1\n0, x, 1\n").unwrap();
        assert!(load_csv(&path, 0.5).is_err());
    }
}
