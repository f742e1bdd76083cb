//! Flat `key = value` solver configuration.
//!
//! Recognized keys: `eta`, `sigma`, `alpha_low`, `alpha_high`, `window`,
//! `block_size`, `probs` (`uniform` or a comma separated list), `seed`,
//! `max_iters`, `max_inner_trials`, `tol`, `reg`. Blank lines and lines
//! starting with `#` are ignored.

use std::path::Path;
use std::str::FromStr;

use crate::block::{Sampling, SolverParams};
use crate::error::{Error, Result};
use crate::regularizers::Regularizer;

#[derive(Debug, Clone, PartialEq, Default)]
pub struct RunConfig {
    pub params: SolverParams,
    pub block_size: Option<usize>,
    pub reg: Option<Regularizer>,
}

fn parse<T: FromStr>(line: usize, key: &str, value: &str) -> Result<T> {
    value.parse().map_err(|_| Error::Config {
        line,
        msg: format!("bad value {value:?} for {key}"),
    })
}

impl RunConfig {
    /// Start from `base` and apply every assignment in `text`.
    pub fn parse_onto(base: RunConfig, text: &str) -> Result<Self> {
        let mut cfg = base;
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let content = raw.trim();
            if content.is_empty() || content.starts_with('#') {
                continue;
            }
            let (key, value) = content.split_once('=').ok_or_else(|| Error::Config {
                line,
                msg: format!("expected key=value, got {content:?}"),
            })?;
            let (key, value) = (key.trim(), value.trim());
            let p = &mut cfg.params;
            match key {
                "eta" => p.eta = parse(line, key, value)?,
                "sigma" => p.sigma = parse(line, key, value)?,
                "alpha_low" => p.alpha_low = parse(line, key, value)?,
                "alpha_high" => p.alpha_high = parse(line, key, value)?,
                "window" => p.window = parse(line, key, value)?,
                "seed" => p.seed = parse(line, key, value)?,
                "max_iters" => p.max_iters = parse(line, key, value)?,
                "max_inner_trials" => p.max_inner_trials = Some(parse(line, key, value)?),
                "tol" => p.tol = parse(line, key, value)?,
                "block_size" => cfg.block_size = Some(parse(line, key, value)?),
                "probs" => {
                    p.probs = if value == "uniform" {
                        Sampling::Uniform
                    } else {
                        let list = value
                            .split(',')
                            .map(|v| parse::<f64>(line, key, v.trim()))
                            .collect::<Result<Vec<_>>>()?;
                        Sampling::Explicit(list)
                    }
                }
                "reg" => {
                    cfg.reg = Some(value.parse().map_err(|e: Error| Error::Config {
                        line,
                        msg: e.to_string(),
                    })?)
                }
                other => {
                    return Err(Error::Config {
                        line,
                        msg: format!("unknown key {other:?}"),
                    })
                }
            }
        }
        cfg.params.validate().map_err(|e| Error::Config {
            line: 0,
            msg: e.to_string(),
        })?;
        if cfg.block_size == Some(0) {
            return Err(Error::Config {
                line: 0,
                msg: "block_size must be positive".into(),
            });
        }
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse_onto(RunConfig::default(), &text)
    }
}

impl FromStr for RunConfig {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::parse_onto(RunConfig::default(), s)
    }
}
