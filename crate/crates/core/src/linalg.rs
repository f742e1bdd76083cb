//! Dense column-major storage and the few kernels the solvers need.
//!
//! All reductions run left to right in a fixed order so results are
//! reproducible for a given build.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Dense `rows × cols` matrix stored column by column, so that a contiguous
/// range of columns is a contiguous slice.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_col_major(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Dimension {
                expected: rows * cols,
                got: data.len(),
            });
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_row_major(rows: usize, cols: usize, data: &[f64]) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Dimension {
                expected: rows * cols,
                got: data.len(),
            });
        }
        let mut m = Self::zeros(rows, cols);
        for r in 0..rows {
            for c in 0..cols {
                m[(r, c)] = data[r * cols + c];
            }
        }
        Ok(m)
    }

    /// Build from a slice of rows.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut flat = Vec::with_capacity(rows.len() * cols);
        for row in rows {
            if row.len() != cols {
                return Err(Error::Dimension {
                    expected: cols,
                    got: row.len(),
                });
            }
            flat.extend_from_slice(row);
        }
        Self::from_row_major(rows.len(), cols, &flat)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn col(&self, j: usize) -> &[f64] {
        &self.data[j * self.rows..(j + 1) * self.rows]
    }

    pub fn col_mut(&mut self, j: usize) -> &mut [f64] {
        let rows = self.rows;
        &mut self.data[j * rows..(j + 1) * rows]
    }

    /// Columns `start..start + len` as one contiguous column-major slice.
    pub fn col_block(&self, start: usize, len: usize) -> &[f64] {
        &self.data[start * self.rows..(start + len) * self.rows]
    }

    /// Row-major copy of the entries.
    pub fn to_row_major(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.data.len());
        for r in 0..self.rows {
            for c in 0..self.cols {
                out.push(self[(r, c)]);
            }
        }
        out
    }

    /// `y = A x`.
    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.cols);
        let mut y = vec![0.0; self.rows];
        for (j, &xj) in x.iter().enumerate() {
            if xj != 0.0 {
                axpy(xj, self.col(j), &mut y);
            }
        }
        y
    }

    /// `y = Aᵀ r`.
    pub fn tr_matvec(&self, r: &[f64]) -> Vec<f64> {
        assert_eq!(r.len(), self.rows);
        (0..self.cols).map(|j| dot(self.col(j), r)).collect()
    }

    /// Largest absolute asymmetry `|A_ij − A_ji|` relative to the largest
    /// entry. Returns `None` when the matrix is not square.
    pub fn asymmetry(&self) -> Option<f64> {
        if self.rows != self.cols {
            return None;
        }
        let scale = self.data.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        let mut worst = 0.0_f64;
        for i in 0..self.rows {
            for j in (i + 1)..self.cols {
                worst = worst.max((self[(i, j)] - self[(j, i)]).abs());
            }
        }
        Some(if scale > 0.0 { worst / scale } else { 0.0 })
    }
}

impl std::ops::Index<(usize, usize)> for Matrix {
    type Output = f64;

    fn index(&self, (r, c): (usize, usize)) -> &f64 {
        &self.data[c * self.rows + r]
    }
}

impl std::ops::IndexMut<(usize, usize)> for Matrix {
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut f64 {
        &mut self.data[c * self.rows + r]
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm_sq(a: &[f64]) -> f64 {
    dot(a, a)
}

pub fn norm(a: &[f64]) -> f64 {
    norm_sq(a).sqrt()
}

/// `y += alpha * x`.
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// `out = B v` for a column-major block `B` with `rows` rows.
pub fn block_apply(block: &[f64], rows: usize, v: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; rows];
    for (j, &vj) in v.iter().enumerate() {
        if vj != 0.0 {
            axpy(vj, &block[j * rows..(j + 1) * rows], &mut out);
        }
    }
    out
}

/// `out = Bᵀ r` for a column-major block `B` with `rows` rows.
pub fn block_apply_tr(block: &[f64], rows: usize, r: &[f64]) -> Vec<f64> {
    block.chunks_exact(rows).map(|col| dot(col, r)).collect()
}

const POWER_TOL: f64 = 1e-10;
const POWER_MAX_ITERS: usize = 1000;

/// Largest eigenvalue of a symmetric positive semidefinite operator of
/// dimension `dim`, by power iteration from a fixed pseudo-random start.
///
/// Stops once the relative eigen-residual `‖Gv − μv‖/μ` falls below `1e-10`
/// or the Rayleigh quotient stalls to `1e-14` relative, with at most 1000
/// iterations.
pub fn power_iteration<F>(dim: usize, mut apply: F) -> f64
where
    F: FnMut(&[f64]) -> Vec<f64>,
{
    if dim == 0 {
        return 0.0;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(0x9e37_79b9_7f4a_7c15);
    let mut v: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
    let nv = norm(&v);
    v.iter_mut().for_each(|e| *e /= nv);

    let mut mu = 0.0;
    for _ in 0..POWER_MAX_ITERS {
        let w = apply(&v);
        let mu_next = dot(&v, &w);
        let nw = norm(&w);
        if nw == 0.0 {
            return 0.0;
        }
        let resid_sq: f64 = w
            .iter()
            .zip(&v)
            .map(|(wi, vi)| (wi - mu_next * vi).powi(2))
            .sum();
        let converged =
            resid_sq.sqrt() <= POWER_TOL * mu_next || (mu_next - mu).abs() <= 1e-14 * mu_next;
        mu = mu_next;
        v = w.into_iter().map(|e| e / nw).collect();
        if converged {
            break;
        }
    }
    // one extra Rayleigh quotient on the normalized iterate
    let w = apply(&v);
    mu.max(dot(&v, &w))
}

/// `‖B‖₂²` for a column-major block `B`.
pub fn block_spectral_norm_sq(block: &[f64], rows: usize) -> f64 {
    let cols = block.len().checked_div(rows).unwrap_or(0);
    if cols == 1 {
        return norm_sq(block);
    }
    power_iteration(cols, |v| {
        let bv = block_apply(block, rows, v);
        block_apply_tr(block, rows, &bv)
    })
}
