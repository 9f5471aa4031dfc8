//! Series transformations applied before fitting.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Transform {
    /// Percentage simple returns `100 (P_t / P_{t-1} - 1)`.
    Returns,
    /// Percentage log returns `100 ln(P_t / P_{t-1})`.
    LogReturns,
    Abs,
    Negate,
    /// Maxima of consecutive non-overlapping blocks; a short final block is dropped.
    BlockMax(usize),
}

impl FromStr for Transform {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        match s {
            "returns" => Ok(Transform::Returns),
            "log-returns" => Ok(Transform::LogReturns),
            "abs" => Ok(Transform::Abs),
            "negate" => Ok(Transform::Negate),
            _ => {
                let Some(m) = s.strip_prefix("blockmax:") else {
                    return Err(Error::Parse(format!(
                        "unknown preprocessing step '{s}' (expected returns, log-returns, abs, negate or blockmax:<m>)"
                    )));
                };
                match m.parse::<usize>() {
                    Ok(m) if m >= 1 => Ok(Transform::BlockMax(m)),
                    _ => Err(Error::Parse(format!("block size in '{s}' must be a positive integer"))),
                }
            }
        }
    }
}

impl fmt::Display for Transform {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Transform::Returns => write!(f, "returns"),
            Transform::LogReturns => write!(f, "log-returns"),
            Transform::Abs => write!(f, "abs"),
            Transform::Negate => write!(f, "negate"),
            Transform::BlockMax(m) => write!(f, "blockmax:{m}"),
        }
    }
}

/// Parses a comma-separated step list such as `returns,negate,blockmax:2`.
pub fn parse_steps(s: &str) -> Result<Vec<Transform>> {
    s.split(',').filter(|p| !p.trim().is_empty()).map(str::parse).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Preprocessed {
    pub values: Vec<f64>,
    /// Non-finite values removed along the way.
    pub dropped: usize,
}

fn apply_one(x: &[f64], step: Transform) -> Vec<f64> {
    match step {
        Transform::Returns => x.windows(2).map(|w| 100.0 * (w[1] / w[0] - 1.0)).collect(),
        Transform::LogReturns => x.windows(2).map(|w| 100.0 * (w[1] / w[0]).ln()).collect(),
        Transform::Abs => x.iter().map(|v| v.abs()).collect(),
        Transform::Negate => x.iter().map(|v| -v).collect(),
        Transform::BlockMax(m) => {
            x.chunks_exact(m).map(|c| c.iter().copied().fold(f64::NEG_INFINITY, f64::max)).collect()
        }
    }
}

/// Applies `steps` in order, dropping non-finite values before and after
/// each step.
pub fn apply_steps(x: &[f64], steps: &[Transform]) -> Result<Preprocessed> {
    let mut dropped = 0;
    let mut keep_finite = |v: Vec<f64>| {
        let before = v.len();
        let out: Vec<f64> = v.into_iter().filter(|x| x.is_finite()).collect();
        dropped += before - out.len();
        out
    };
    let mut cur = keep_finite(x.to_vec());
    for &s in steps {
        cur = keep_finite(apply_one(&cur, s));
    }
    if cur.is_empty() {
        return Err(Error::Data("preprocessing left no observations".into()));
    }
    Ok(Preprocessed { values: cur, dropped })
}
