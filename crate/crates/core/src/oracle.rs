//! Smooth parts `f` with cheap block partial gradients.
//!
//! Both oracles keep a cached linear image of the iterate (`r = Ax − b` for
//! least squares, `q = Qx` for quadratics) so that block gradients, trial
//! values and commits cost `O(m N_i)` instead of a full pass.

use crate::block::BlockPartition;
use crate::error::{Error, Result};
use crate::linalg::{
    axpy, block_apply, block_apply_tr, block_spectral_norm_sq, dot, norm_sq, Matrix,
};

/// Exact residual recompute every this many commits.
pub const DEFAULT_REFRESH_PERIOD: usize = 1000;

/// Floor for the block Lipschitz constant of an all-zero column block.
pub const LIPSCHITZ_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone)]
pub enum SmoothKind {
    /// `f(x) = ½‖Ax − b‖²`.
    LeastSquares { a: Matrix, b: Vec<f64> },
    /// `f(x) = ½ xᵀQx + cᵀx` with `Q` symmetric positive semidefinite.
    Quadratic { q: Matrix, c: Vec<f64> },
}

#[derive(Debug, Clone)]
pub struct SmoothOracle {
    kind: SmoothKind,
    partition: BlockPartition,
}

/// Iterate plus the cached linear image used for incremental updates.
#[derive(Debug, Clone)]
pub struct OracleState {
    x: Vec<f64>,
    cache: Vec<f64>,
    refresh_counter: usize,
    refresh_period: usize,
}

impl OracleState {
    pub fn x(&self) -> &[f64] {
        &self.x
    }

    /// `Ax − b` for least squares, `Qx` for quadratics.
    pub fn cache(&self) -> &[f64] {
        &self.cache
    }

    pub fn refresh_counter(&self) -> usize {
        self.refresh_counter
    }

    pub fn set_refresh_period(&mut self, period: usize) {
        self.refresh_period = period.max(1);
    }
}

impl SmoothOracle {
    pub fn least_squares(a: Matrix, b: Vec<f64>, partition: BlockPartition) -> Result<Self> {
        if a.rows() != b.len() {
            return Err(Error::Dimension {
                expected: a.rows(),
                got: b.len(),
            });
        }
        if a.cols() != partition.total() {
            return Err(Error::Dimension {
                expected: partition.total(),
                got: a.cols(),
            });
        }
        Ok(Self {
            kind: SmoothKind::LeastSquares { a, b },
            partition,
        })
    }

    pub fn quadratic(q: Matrix, c: Vec<f64>, partition: BlockPartition) -> Result<Self> {
        let n = partition.total();
        if q.rows() != n || q.cols() != n {
            return Err(Error::Dimension {
                expected: n,
                got: q.rows().max(q.cols()),
            });
        }
        if c.len() != n {
            return Err(Error::Dimension {
                expected: n,
                got: c.len(),
            });
        }
        match q.asymmetry() {
            Some(a) if a <= 1e-12 => {}
            _ => return Err(Error::Parameter("quadratic term is not symmetric".into())),
        }
        Ok(Self {
            kind: SmoothKind::Quadratic { q, c },
            partition,
        })
    }

    pub fn kind(&self) -> &SmoothKind {
        &self.kind
    }

    pub fn partition(&self) -> &BlockPartition {
        &self.partition
    }

    /// Same data under a different block partition.
    pub fn with_partition(&self, partition: BlockPartition) -> Result<Self> {
        if partition.total() != self.partition.total() {
            return Err(Error::Dimension {
                expected: self.partition.total(),
                got: partition.total(),
            });
        }
        Ok(Self {
            kind: self.kind.clone(),
            partition,
        })
    }

    pub fn dim(&self) -> usize {
        self.partition.total()
    }

    fn exact_cache(&self, x: &[f64]) -> Vec<f64> {
        match &self.kind {
            SmoothKind::LeastSquares { a, b } => {
                let mut r = a.matvec(x);
                r.iter_mut().zip(b).for_each(|(ri, bi)| *ri -= bi);
                r
            }
            SmoothKind::Quadratic { q, .. } => q.matvec(x),
        }
    }

    pub fn init_state(&self, x0: Vec<f64>) -> Result<OracleState> {
        if x0.len() != self.dim() {
            return Err(Error::Dimension {
                expected: self.dim(),
                got: x0.len(),
            });
        }
        let cache = self.exact_cache(&x0);
        Ok(OracleState {
            x: x0,
            cache,
            refresh_counter: 0,
            refresh_period: DEFAULT_REFRESH_PERIOD,
        })
    }

    /// `f(x)` from the cache.
    pub fn value(&self, state: &OracleState) -> f64 {
        match &self.kind {
            SmoothKind::LeastSquares { .. } => 0.5 * norm_sq(&state.cache),
            SmoothKind::Quadratic { c, .. } => 0.5 * dot(&state.x, &state.cache) + dot(c, &state.x),
        }
    }

    /// `f(x)` recomputed from scratch.
    pub fn value_at(&self, x: &[f64]) -> f64 {
        let cache = self.exact_cache(x);
        match &self.kind {
            SmoothKind::LeastSquares { .. } => 0.5 * norm_sq(&cache),
            SmoothKind::Quadratic { c, .. } => 0.5 * dot(x, &cache) + dot(c, x),
        }
    }

    /// `∇f(x)` recomputed from scratch.
    pub fn grad_at(&self, x: &[f64]) -> Vec<f64> {
        let cache = self.exact_cache(x);
        self.grad_from_cache(&cache)
    }

    fn grad_from_cache(&self, cache: &[f64]) -> Vec<f64> {
        match &self.kind {
            SmoothKind::LeastSquares { a, .. } => a.tr_matvec(cache),
            SmoothKind::Quadratic { c, .. } => cache.iter().zip(c).map(|(q, c)| q + c).collect(),
        }
    }

    /// `∇_i f(x)`.
    pub fn partial_grad(&self, state: &OracleState, i: usize) -> Vec<f64> {
        let range = self.partition.range(i);
        match &self.kind {
            SmoothKind::LeastSquares { a, .. } => block_apply_tr(
                a.col_block(range.start, range.len()),
                a.rows(),
                &state.cache,
            ),
            SmoothKind::Quadratic { c, .. } => state.cache[range.clone()]
                .iter()
                .zip(&c[range])
                .map(|(q, c)| q + c)
                .collect(),
        }
    }

    /// `∇f(x)` from the cache, `O(mN)`.
    pub fn full_grad(&self, state: &OracleState) -> Vec<f64> {
        self.grad_from_cache(&state.cache)
    }

    /// Image of a block step under the linear map behind the cache:
    /// `A_:,i d` or `Q_:,i d`.
    fn block_image(&self, i: usize, d: &[f64]) -> Vec<f64> {
        let range = self.partition.range(i);
        let m = match &self.kind {
            SmoothKind::LeastSquares { a, .. } => a,
            SmoothKind::Quadratic { q, .. } => q,
        };
        block_apply(m.col_block(range.start, range.len()), m.rows(), d)
    }

    /// Curvature of `f` along a block direction: `‖A_:,i u‖²` or `uᵀQ_ii u`.
    pub fn block_curvature(&self, i: usize, u: &[f64]) -> f64 {
        let image = self.block_image(i, u);
        match &self.kind {
            SmoothKind::LeastSquares { .. } => norm_sq(&image),
            SmoothKind::Quadratic { .. } => dot(u, &image[self.partition.range(i)]),
        }
    }

    /// `f(x + U_i d) − f(x)` given the block gradient at `x`. Exact for both
    /// oracles since `f` is quadratic: `g_iᵀd + ½ dᵀH_ii d`.
    pub fn trial_delta(&self, i: usize, d: &[f64], grad_i: &[f64]) -> f64 {
        dot(grad_i, d) + 0.5 * self.block_curvature(i, d)
    }

    /// `f(x + U_i d)` without touching the state.
    pub fn trial_value(&self, state: &OracleState, i: usize, d: &[f64]) -> Result<f64> {
        self.check_block(i, d)?;
        let g = self.partial_grad(state, i);
        Ok(self.value(state) + self.trial_delta(i, d, &g))
    }

    fn check_block(&self, i: usize, d: &[f64]) -> Result<()> {
        let n_i = self.partition.size(i);
        if d.len() != n_i {
            return Err(Error::Dimension {
                expected: n_i,
                got: d.len(),
            });
        }
        Ok(())
    }

    /// `x_i += d`, cache updated incrementally; every `refresh_period`
    /// commits the cache is recomputed exactly. Returns whether a refresh
    /// happened.
    pub fn commit_step(&self, state: &mut OracleState, i: usize, d: &[f64]) -> Result<bool> {
        self.check_block(i, d)?;
        let range = self.partition.range(i);
        state.x[range]
            .iter_mut()
            .zip(d)
            .for_each(|(x, dj)| *x += dj);
        if d.iter().any(|&v| v != 0.0) {
            let image = self.block_image(i, d);
            axpy(1.0, &image, &mut state.cache);
        }
        state.refresh_counter += 1;
        if state.refresh_counter.is_multiple_of(state.refresh_period) {
            self.refresh(state);
            return Ok(true);
        }
        Ok(false)
    }

    pub fn refresh(&self, state: &mut OracleState) {
        state.cache = self.exact_cache(&state.x);
    }

    /// `L_i`: squared spectral norm of the column block (least squares) or
    /// spectral norm of the diagonal block (quadratic), floored at
    /// [`LIPSCHITZ_FLOOR`].
    pub fn block_lipschitz(&self, i: usize) -> f64 {
        let range = self.partition.range(i);
        let l = match &self.kind {
            SmoothKind::LeastSquares { a, .. } => {
                block_spectral_norm_sq(a.col_block(range.start, range.len()), a.rows())
            }
            SmoothKind::Quadratic { q, .. } => {
                let n_i = range.len();
                let start = range.start;
                let sub: Vec<f64> = (0..n_i)
                    .flat_map(|c| (0..n_i).map(move |r| (r, c)))
                    .map(|(r, c)| q[(start + r, start + c)])
                    .collect();
                if n_i == 1 {
                    sub[0]
                } else {
                    crate::linalg::power_iteration(n_i, |v| block_apply(&sub, n_i, v))
                }
            }
        };
        l.max(LIPSCHITZ_FLOOR)
    }

    pub fn lipschitz_constants(&self) -> Vec<f64> {
        (0..self.partition.num_blocks())
            .map(|i| self.block_lipschitz(i))
            .collect()
    }
}
