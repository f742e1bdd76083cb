//! Block separable regularizers `Ψ(x) = Σ Ψ_i(x_i)` and their exact block
//! proximal maps.
//!
//! For a block `x_i`, gradient block `g_i` and coefficient `θ > 0`, the block
//! subproblem is
//!
//! ```text
//! min_s  g_iᵀ s + (θ/2)‖s‖² + Ψ_i(x_i + s)
//! ```
//!
//! whose solution is `s = prox_{Ψ_i/θ}(x_i − g_i/θ) − x_i`. Every kind below
//! has a closed-form prox.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::linalg::norm;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Regularizer {
    Zero,
    /// `λ‖x‖₁`.
    L1(f64),
    /// `λ‖x_i‖₂` with each block forming one group.
    GroupL2(f64),
    /// Indicator of `[lo, hi]` applied to every coordinate.
    Box {
        lo: f64,
        hi: f64,
    },
    /// `λ · #{j : x_j ≠ 0}`, nonconvex.
    L0(f64),
}

impl Regularizer {
    pub fn validate(&self) -> Result<()> {
        match *self {
            Regularizer::Zero => Ok(()),
            Regularizer::L1(l) | Regularizer::GroupL2(l) | Regularizer::L0(l) => {
                if l >= 0.0 && l.is_finite() {
                    Ok(())
                } else {
                    Err(Error::Parameter(format!(
                        "weight {l} must be finite and >= 0"
                    )))
                }
            }
            Regularizer::Box { lo, hi } => {
                if lo <= hi {
                    Ok(())
                } else {
                    Err(Error::Parameter(format!("box bounds {lo} > {hi}")))
                }
            }
        }
    }

    pub fn is_convex(&self) -> bool {
        !matches!(self, Regularizer::L0(_))
    }

    /// `Ψ_i(x_i)`; `+∞` outside the box for [`Regularizer::Box`].
    pub fn value_block(&self, x: &[f64]) -> f64 {
        match *self {
            Regularizer::Zero => 0.0,
            Regularizer::L1(l) => l * x.iter().map(|v| v.abs()).sum::<f64>(),
            Regularizer::GroupL2(l) => l * norm(x),
            Regularizer::Box { lo, hi } => {
                if x.iter().all(|&v| v >= lo && v <= hi) {
                    0.0
                } else {
                    f64::INFINITY
                }
            }
            Regularizer::L0(l) => l * x.iter().filter(|&&v| v != 0.0).count() as f64,
        }
    }

    /// Whether `x` lies in the domain of `Ψ`.
    pub fn contains(&self, x: &[f64]) -> bool {
        match *self {
            Regularizer::Box { lo, hi } => x.iter().all(|&v| v >= lo && v <= hi),
            _ => true,
        }
    }

    /// Proximal point `prox_{Ψ_i/θ}(u)`.
    pub fn prox_point(&self, u: &[f64], theta: f64) -> Vec<f64> {
        match *self {
            Regularizer::Zero => u.to_vec(),
            Regularizer::L1(l) => {
                let t = l / theta;
                u.iter().map(|&v| soft_threshold(v, t)).collect()
            }
            Regularizer::GroupL2(l) => {
                let t = l / theta;
                let nu = norm(u);
                if nu <= t {
                    vec![0.0; u.len()]
                } else {
                    let scale = 1.0 - t / nu;
                    u.iter().map(|&v| scale * v).collect()
                }
            }
            Regularizer::Box { lo, hi } => u.iter().map(|&v| v.clamp(lo, hi)).collect(),
            Regularizer::L0(l) => {
                // keep u_j only when (θ/2) u_j² > λ; the tie goes to zero
                u.iter()
                    .map(|&v| if 0.5 * theta * v * v > l { v } else { 0.0 })
                    .collect()
            }
        }
    }

    /// Solve the block subproblem and return the step `d_i`.
    ///
    /// The step is formed as `z − x_i` from the rounded proximal point `z`, so
    /// `x_i + d_i` reproduces `z` exactly whenever the two are close. For the
    /// box, `x_i + d_i` is always feasible.
    pub fn prox_block(&self, x: &[f64], g: &[f64], theta: f64) -> Result<Vec<f64>> {
        if !(theta > 0.0) {
            return Err(Error::Parameter(format!(
                "theta = {theta} must be positive"
            )));
        }
        if x.len() != g.len() {
            return Err(Error::Dimension {
                expected: x.len(),
                got: g.len(),
            });
        }
        let u: Vec<f64> = x.iter().zip(g).map(|(xj, gj)| xj - gj / theta).collect();
        let z = self.prox_point(&u, theta);
        let mut d: Vec<f64> = z.iter().zip(x).map(|(zj, xj)| zj - xj).collect();
        if let Regularizer::Box { lo, hi } = *self {
            // z − x can round so that x + d misses the clamped point by an ulp
            for ((dj, &xj), &zj) in d.iter_mut().zip(x).zip(&z) {
                for _ in 0..64 {
                    let landed = xj + *dj;
                    if landed == zj {
                        break;
                    }
                    *dj = if landed < zj {
                        dj.next_up()
                    } else {
                        dj.next_down()
                    };
                }
                while xj + *dj < lo {
                    *dj = dj.next_up();
                }
                while xj + *dj > hi {
                    *dj = dj.next_down();
                }
            }
        }
        Ok(d)
    }

    /// `dist(−g_i, ∂Ψ_i(x_i))`, squared.
    pub fn subgradient_residual_sq_block(&self, x: &[f64], g: &[f64]) -> Result<f64> {
        if x.len() != g.len() {
            return Err(Error::Dimension {
                expected: x.len(),
                got: g.len(),
            });
        }
        let sq = match *self {
            Regularizer::Zero => g.iter().map(|v| v * v).sum(),
            Regularizer::L1(l) => x
                .iter()
                .zip(g)
                .map(|(&xj, &gj)| {
                    let r = if xj > 0.0 {
                        gj + l
                    } else if xj < 0.0 {
                        gj - l
                    } else {
                        (gj.abs() - l).max(0.0)
                    };
                    r * r
                })
                .sum(),
            Regularizer::GroupL2(l) => {
                let nx = norm(x);
                if nx > 0.0 {
                    x.iter()
                        .zip(g)
                        .map(|(&xj, &gj)| (gj + l * xj / nx).powi(2))
                        .sum()
                } else {
                    (norm(g) - l).max(0.0).powi(2)
                }
            }
            Regularizer::Box { lo, hi } => {
                if !self.contains(x) {
                    return Ok(f64::INFINITY);
                }
                x.iter()
                    .zip(g)
                    .map(|(&xj, &gj)| {
                        // normal cone: {0} inside, (-∞,0] at lo, [0,∞) at hi.
                        // A step x + d cannot always land on a bound exactly,
                        // so points a few ulps away count as on it.
                        let r = if lo == hi {
                            0.0
                        } else if near_bound(xj, lo) {
                            (-gj).max(0.0)
                        } else if near_bound(xj, hi) {
                            gj.max(0.0)
                        } else {
                            gj.abs()
                        };
                        r * r
                    })
                    .sum()
            }
            Regularizer::L0(_) => {
                return Err(Error::Unsupported(
                    "subgradient residual is defined for convex regularizers only".into(),
                ))
            }
        };
        Ok(sq)
    }
}

fn near_bound(v: f64, bound: f64) -> bool {
    (v - bound).abs() <= 4.0 * f64::EPSILON * bound.abs().max(1.0)
}

fn soft_threshold(v: f64, t: f64) -> f64 {
    if v > t {
        v - t
    } else if v < -t {
        v + t
    } else {
        0.0
    }
}

impl fmt::Display for Regularizer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Regularizer::Zero => write!(f, "zero"),
            Regularizer::L1(l) => write!(f, "l1:{l}"),
            Regularizer::GroupL2(l) => write!(f, "group_l2:{l}"),
            Regularizer::Box { lo, hi } => write!(f, "box:{lo},{hi}"),
            Regularizer::L0(l) => write!(f, "l0:{l}"),
        }
    }
}

/// Parses `zero | l1:<λ> | group_l2:<λ> | box:<lo>,<hi> | l0:<λ>`.
impl FromStr for Regularizer {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let num = |v: &str| {
            v.trim()
                .parse::<f64>()
                .map_err(|_| Error::Parameter(format!("bad number {v:?} in regularizer {s:?}")))
        };
        let (kind, arg) = match s.split_once(':') {
            Some((k, a)) => (k.trim(), Some(a)),
            None => (s, None),
        };
        let reg = match (kind, arg) {
            ("zero", None) => Regularizer::Zero,
            ("l1", Some(a)) => Regularizer::L1(num(a)?),
            ("group_l2", Some(a)) => Regularizer::GroupL2(num(a)?),
            ("l0", Some(a)) => Regularizer::L0(num(a)?),
            ("box", Some(a)) => {
                let (lo, hi) = a
                    .split_once(',')
                    .ok_or_else(|| Error::Parameter(format!("box needs lo,hi: {s:?}")))?;
                Regularizer::Box {
                    lo: num(lo)?,
                    hi: num(hi)?,
                }
            }
            _ => return Err(Error::Parameter(format!("unknown regularizer {s:?}"))),
        };
        reg.validate()?;
        Ok(reg)
    }
}
