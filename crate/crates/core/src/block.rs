//! Block partitions, solver parameters, block sampling and the objective
//! window used by the nonmonotone acceptance test.

use std::collections::VecDeque;
use std::ops::Range;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Decomposition of `ℝ^N` into `n` contiguous blocks.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BlockPartition {
    sizes: Vec<usize>,
    offsets: Vec<usize>,
}

impl BlockPartition {
    pub fn new(sizes: Vec<usize>) -> Result<Self> {
        if sizes.is_empty() {
            return Err(Error::InvalidPartition("no blocks".into()));
        }
        if let Some(i) = sizes.iter().position(|&s| s == 0) {
            return Err(Error::InvalidPartition(format!("block {i} has size 0")));
        }
        let mut offsets = Vec::with_capacity(sizes.len() + 1);
        offsets.push(0);
        let mut acc = 0;
        for &s in &sizes {
            acc += s;
            offsets.push(acc);
        }
        Ok(Self { sizes, offsets })
    }

    /// `⌈total / block_size⌉` blocks of `block_size`, the last one possibly
    /// smaller.
    pub fn uniform(total: usize, block_size: usize) -> Result<Self> {
        if total == 0 || block_size == 0 {
            return Err(Error::InvalidPartition(format!(
                "total {total} and block size {block_size} must be positive"
            )));
        }
        let full = total / block_size;
        let mut sizes = vec![block_size; full];
        if !total.is_multiple_of(block_size) {
            sizes.push(total % block_size);
        }
        Self::new(sizes)
    }

    pub fn num_blocks(&self) -> usize {
        self.sizes.len()
    }

    pub fn total(&self) -> usize {
        *self.offsets.last().unwrap()
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn offsets(&self) -> &[usize] {
        &self.offsets
    }

    pub fn size(&self, i: usize) -> usize {
        self.sizes[i]
    }

    pub fn range(&self, i: usize) -> Range<usize> {
        self.offsets[i]..self.offsets[i + 1]
    }

    pub fn max_size(&self) -> usize {
        self.sizes.iter().copied().max().unwrap()
    }

    pub fn block<'a>(&self, x: &'a [f64], i: usize) -> &'a [f64] {
        &x[self.range(i)]
    }

    pub fn block_mut<'a>(&self, x: &'a mut [f64], i: usize) -> &'a mut [f64] {
        &mut x[self.range(i)]
    }

    /// Iterator over the blocks of a flat vector.
    pub fn blocks<'a>(&'a self, x: &'a [f64]) -> impl Iterator<Item = &'a [f64]> + 'a {
        (0..self.num_blocks()).map(move |i| self.block(x, i))
    }
}

/// Block selection distribution.
#[derive(Debug, Clone, PartialEq)]
pub enum Sampling {
    Uniform,
    Explicit(Vec<f64>),
}

impl Sampling {
    pub fn probabilities(&self, n: usize) -> Result<Vec<f64>> {
        match self {
            Sampling::Uniform => Ok(vec![1.0 / n as f64; n]),
            Sampling::Explicit(p) => {
                if p.len() != n {
                    return Err(Error::InvalidParams(format!(
                        "{} probabilities for {n} blocks",
                        p.len()
                    )));
                }
                if p.iter().any(|&pi| !(pi > 0.0)) {
                    return Err(Error::InvalidParams(
                        "block probabilities must be positive".into(),
                    ));
                }
                let sum: f64 = p.iter().sum();
                if (sum - 1.0).abs() > 1e-12 {
                    return Err(Error::InvalidParams(format!(
                        "block probabilities sum to {sum}, not 1"
                    )));
                }
                Ok(p.clone())
            }
        }
    }
}

/// Knobs of the block proximal gradient methods.
#[derive(Debug, Clone, PartialEq)]
pub struct SolverParams {
    /// Stepsize growth factor `η > 1` of the inner loop.
    pub eta: f64,
    /// Sufficient decrease weight `σ > 0`.
    pub sigma: f64,
    /// Lower bound on the initial stepsize estimate.
    pub alpha_low: f64,
    /// Upper bound on the initial stepsize estimate.
    pub alpha_high: f64,
    /// Nonmonotone memory `M`; `0` gives a monotone method.
    pub window: usize,
    pub probs: Sampling,
    pub seed: u64,
    pub max_iters: usize,
    /// Work budget in epochs (`N / N_i` iterations each); `None` for no limit.
    pub max_epochs: Option<f64>,
    /// Inner trial cap; `None` uses the default derived from the stepsize
    /// bound, see [`SolverParams::default_inner_cap`].
    pub max_inner_trials: Option<usize>,
    /// Stop once `‖ĝ‖ ≤ tol` at a diagnostic iteration.
    pub tol: f64,
    /// Known optimal value, enables gap reporting and the gap stop.
    pub f_star: Option<f64>,
    /// Stop once `F(x^k) − f_star ≤ gap_tol`.
    pub gap_tol: f64,
    /// Iterations between proximal-gradient diagnostics; `None` means once
    /// per epoch.
    pub diagnostic_period: Option<usize>,
}

impl Default for SolverParams {
    fn default() -> Self {
        Self {
            eta: 1.1,
            sigma: 1e-4,
            alpha_low: 1e-8,
            alpha_high: 1e8,
            window: 10,
            probs: Sampling::Uniform,
            seed: 0,
            max_iters: 100_000,
            max_epochs: None,
            max_inner_trials: None,
            tol: 0.0,
            f_star: None,
            gap_tol: 1e-6,
            diagnostic_period: None,
        }
    }
}

impl SolverParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParams(msg));
        if !(self.eta > 1.0) {
            return bad(format!("eta = {} must exceed 1", self.eta));
        }
        if !(self.sigma > 0.0) {
            return bad(format!("sigma = {} must be positive", self.sigma));
        }
        if !(self.alpha_low > 0.0 && self.alpha_low <= self.alpha_high) {
            return bad(format!(
                "need 0 < alpha_low <= alpha_high, got {} and {}",
                self.alpha_low, self.alpha_high
            ));
        }
        if !(self.tol >= 0.0) {
            return bad(format!("tol = {} must be nonnegative", self.tol));
        }
        if self.max_inner_trials == Some(0) {
            return bad("max_inner_trials must be positive".into());
        }
        if self.diagnostic_period == Some(0) {
            return bad("diagnostic_period must be positive".into());
        }
        if let Sampling::Explicit(p) = &self.probs {
            Sampling::Explicit(p.clone()).probabilities(p.len())?;
        }
        Ok(())
    }

    /// Upper bound `c = max{α_high, η (L_max + σ)}` on every accepted stepsize.
    pub fn theta_cap(&self, l_max: f64) -> f64 {
        self.alpha_high.max(self.eta * (l_max + self.sigma))
    }

    /// Number of trials needed to climb from `alpha_low` to the stepsize cap,
    /// `⌈log_η(c / α_low)⌉ + 1`.
    pub fn trial_bound(&self, l_max: f64) -> usize {
        let ratio = self.theta_cap(l_max) / self.alpha_low;
        (ratio.ln() / self.eta.ln()).ceil().max(0.0) as usize + 1
    }

    /// `⌈log_η(η (L_max + σ) / α_low)⌉ + 5`, raised to [`Self::trial_bound`]
    /// when `α_high` dominates the cap.
    pub fn default_inner_cap(&self, l_max: f64) -> usize {
        let ratio = self.eta * (l_max + self.sigma) / self.alpha_low;
        let base = (ratio.ln() / self.eta.ln()).ceil().max(0.0) as usize + 5;
        base.max(self.trial_bound(l_max))
    }

    pub fn inner_cap(&self, l_max: f64) -> usize {
        self.max_inner_trials
            .unwrap_or_else(|| self.default_inner_cap(l_max))
    }
}

/// Draws block indices from a fixed distribution with a seeded ChaCha8
/// stream.
#[derive(Debug, Clone)]
pub struct BlockSampler {
    cumulative: Vec<f64>,
    rng: ChaCha8Rng,
}

const SAMPLER_STREAM: u64 = 1;

impl BlockSampler {
    pub fn new(probs: &[f64], seed: u64) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::InvalidParams("no blocks to sample".into()));
        }
        let mut cumulative = Vec::with_capacity(probs.len());
        let mut acc = 0.0;
        for &p in probs {
            acc += p;
            cumulative.push(acc);
        }
        *cumulative.last_mut().unwrap() = 1.0;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(SAMPLER_STREAM);
        Ok(Self { cumulative, rng })
    }

    pub fn uniform(n: usize, seed: u64) -> Result<Self> {
        Self::new(&vec![1.0 / n as f64; n], seed)
    }

    pub fn num_blocks(&self) -> usize {
        self.cumulative.len()
    }

    /// Zero-based block index.
    pub fn sample(&mut self) -> usize {
        if self.cumulative.len() == 1 {
            // still advance the stream so sequences do not depend on n
            let _: f64 = self.rng.random();
            return 0;
        }
        let u: f64 = self.rng.random();
        self.cumulative
            .partition_point(|&c| c <= u)
            .min(self.cumulative.len() - 1)
    }
}

/// Ring buffer holding the last `M + 1` objective values.
#[derive(Debug, Clone)]
pub struct ObjectiveWindow {
    values: VecDeque<f64>,
    capacity: usize,
}

impl ObjectiveWindow {
    pub fn new(memory: usize) -> Self {
        Self {
            values: VecDeque::with_capacity(memory + 1),
            capacity: memory + 1,
        }
    }

    pub fn push(&mut self, value: f64) {
        if self.values.len() == self.capacity {
            self.values.pop_front();
        }
        self.values.push_back(value);
    }

    /// `max_{[k−M]⁺ ≤ i ≤ k} F(x^i)`.
    pub fn max(&self) -> Result<f64> {
        self.values
            .iter()
            .copied()
            .reduce(f64::max)
            .ok_or(Error::EmptyWindow)
    }

    pub fn latest(&self) -> Option<f64> {
        self.values.back().copied()
    }

    /// Replace the newest value.
    pub fn set_latest(&mut self, value: f64) {
        if let Some(v) = self.values.back_mut() {
            *v = value;
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn to_vec(&self) -> Vec<f64> {
        self.values.iter().copied().collect()
    }
}
