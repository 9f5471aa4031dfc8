use serde::{Deserialize, Serialize};

use crate::dists::BulkKind;

/// One value per sampler block: `k` tail shapes, scales and thresholds,
/// `k - 1` inner changepoints, `l` bulk spreads and means, and the weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Blocks<T> {
    pub xi: Vec<T>,
    pub sigma: Vec<T>,
    pub u: Vec<T>,
    pub tau: Vec<T>,
    pub spread: Vec<T>,
    pub mean: Vec<T>,
    pub weights: T,
}

/// Proposal variances, except `weights`, which is a Dirichlet concentration.
pub type ProposalScales = Blocks<f64>;

impl<T: Clone> Blocks<T> {
    pub fn filled(k: usize, l: usize, v: T) -> Self {
        Self {
            xi: vec![v.clone(); k],
            sigma: vec![v.clone(); k],
            u: vec![v.clone(); k],
            tau: vec![v.clone(); k.saturating_sub(1)],
            spread: vec![v.clone(); l],
            mean: vec![v.clone(); l],
            weights: v,
        }
    }

    pub fn k(&self) -> usize {
        self.xi.len()
    }

    pub fn l(&self) -> usize {
        self.mean.len()
    }

    pub fn map<U>(&self, f: impl Fn(&T) -> U) -> Blocks<U> {
        Blocks {
            xi: self.xi.iter().map(&f).collect(),
            sigma: self.sigma.iter().map(&f).collect(),
            u: self.u.iter().map(&f).collect(),
            tau: self.tau.iter().map(&f).collect(),
            spread: self.spread.iter().map(&f).collect(),
            mean: self.mean.iter().map(&f).collect(),
            weights: f(&self.weights),
        }
    }

    /// Element-wise combination of two block sets of the same shape.
    pub fn zip_with<U: Clone, V>(&self, other: &Blocks<U>, f: impl Fn(&T, &U) -> V) -> Blocks<V> {
        let z = |a: &[T], b: &[U]| a.iter().zip(b).map(|(x, y)| f(x, y)).collect::<Vec<V>>();
        Blocks {
            xi: z(&self.xi, &other.xi),
            sigma: z(&self.sigma, &other.sigma),
            u: z(&self.u, &other.u),
            tau: z(&self.tau, &other.tau),
            spread: z(&self.spread, &other.spread),
            mean: z(&self.mean, &other.mean),
            weights: f(&self.weights, &other.weights),
        }
    }

    /// Every element with its parameter name (`xi_1`, `eta_2`, `weights`, ...).
    pub fn named(&self, kind: BulkKind) -> Vec<(String, T)> {
        let mut out = Vec::new();
        let mut push = |prefix: &str, v: &[T]| {
            out.extend(v.iter().enumerate().map(|(i, x)| (format!("{prefix}_{}", i + 1), x.clone())));
        };
        push("xi", &self.xi);
        push("sigma", &self.sigma);
        push("u", &self.u);
        push("tau", &self.tau);
        push(kind.spread_name(), &self.spread);
        push("mu", &self.mean);
        out.push(("weights".to_string(), self.weights.clone()));
        out
    }
}

/// Accepted and attempted proposal counts for one block.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Tally {
    pub accepted: u64,
    pub attempted: u64,
}

impl Tally {
    pub fn rate(&self) -> Option<f64> {
        (self.attempted > 0).then(|| self.accepted as f64 / self.attempted as f64)
    }
}
