//! Synthetic series with known parameters.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dists::{gpd_quantile, mix_quantile, BulkParams, GammaComponent, GpdParams};
use crate::error::{domain, Result};
use crate::model::{Changepoints, Dataset, ModelState};

/// A regime threshold given directly or as a level of the bulk mixture cdf.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Threshold {
    Value(f64),
    Quantile(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TailSpec {
    pub threshold: Threshold,
    pub sigma: f64,
    pub xi: f64,
}

/// Generating parameters of a simulated series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TruthSpec {
    pub bulk: BulkParams,
    pub tails: Vec<TailSpec>,
    /// Inner changepoints `tau_1 < ... < tau_{k-1}`.
    #[serde(default)]
    pub changepoints: Vec<usize>,
    pub n: usize,
    pub seed: u64,
}

impl TruthSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return domain("n must be positive");
        }
        self.bulk.validate()?;
        if self.tails.len() != self.changepoints.len() + 1 {
            return domain(format!(
                "{} tails need {} inner changepoints, got {}",
                self.tails.len(),
                self.tails.len().saturating_sub(1),
                self.changepoints.len()
            ));
        }
        Changepoints::from_inner(&self.changepoints, self.n)?;
        for t in &self.tails {
            if let Threshold::Quantile(q) = t.threshold {
                if !(q > 0.0 && q < 1.0) {
                    return domain(format!("threshold quantile level {q} outside (0, 1)"));
                }
            }
            GpdParams::new(0.0, t.sigma, t.xi)?;
        }
        Ok(())
    }

    /// The generating parameters as a model state; thresholds must be resolved.
    pub fn model_state(&self) -> Result<ModelState> {
        self.validate()?;
        let tails = self
            .tails
            .iter()
            .map(|t| match t.threshold {
                Threshold::Value(u) => GpdParams::new(u, t.sigma, t.xi),
                Threshold::Quantile(_) => domain("thresholds must be resolved first"),
            })
            .collect::<Result<Vec<_>>>()?;
        ModelState::new(self.bulk.clone(), tails, Changepoints::from_inner(&self.changepoints, self.n)?)
    }
}

/// Replaces quantile-level thresholds with the bulk mixture quantile.
pub fn resolve_thresholds(spec: &TruthSpec) -> Result<TruthSpec> {
    spec.validate()?;
    let mut out = spec.clone();
    for t in &mut out.tails {
        if let Threshold::Quantile(q) = t.threshold {
            t.threshold = Threshold::Value(mix_quantile(q, &spec.bulk)?);
        }
    }
    Ok(out)
}

/// Draws the series by exact composition: below the threshold with
/// probability `H(u_j)` from the bulk restricted to `(-inf, u_j]` by
/// inversion, otherwise `u_j` plus a GPD exceedance.
pub fn simulate_series(spec: &TruthSpec) -> Result<Dataset> {
    let state = resolve_thresholds(spec)?.model_state()?;
    let mut below = Vec::with_capacity(state.k());
    for (j, t) in state.tails.iter().enumerate() {
        let h = state.bulk.cdf(t.u);
        if !(h > 0.0 && h < 1.0) {
            return domain(format!("regime {}: bulk cdf at the threshold is {h}; need 0 < H(u) < 1", j + 1));
        }
        below.push(h);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut x = Vec::with_capacity(spec.n);
    for j in 0..state.k() {
        let tail = &state.tails[j];
        let h = below[j];
        for _ in state.cps.range(j) {
            let v = if rng.random::<f64>() < h {
                let q = (rng.random::<f64>() * h).max(f64::MIN_POSITIVE);
                mix_quantile(q, &state.bulk)?.min(tail.u)
            } else {
                gpd_quantile(rng.random::<f64>(), tail)?
            };
            x.push(v);
        }
    }
    Dataset::new(x)
}

/// Two-component Gamma mixture shared by the reference designs:
/// weights `(2/3, 1/3)`, means `(2, 8)`, shapes `(4, 8)`.
pub fn design_bulk() -> BulkParams {
    BulkParams::gamma(
        vec![2.0 / 3.0, 1.0 / 3.0],
        vec![GammaComponent { mu: 2.0, eta: 4.0 }, GammaComponent { mu: 8.0, eta: 8.0 }],
    )
    .expect("reference bulk is valid")
}

/// Three regimes over 5000 observations with changepoints at 2000 and
/// 3500, shapes `(-0.4, 0, 0.4)`, scales `(0.5, 1, 1.5)` and thresholds at
/// the 0.80, 0.85 and 0.90 bulk quantiles.
pub fn design_three_regimes(seed: u64) -> TruthSpec {
    let tail = |q, sigma, xi| TailSpec { threshold: Threshold::Quantile(q), sigma, xi };
    TruthSpec {
        bulk: design_bulk(),
        tails: vec![tail(0.80, 0.5, -0.4), tail(0.85, 1.0, 0.0), tail(0.90, 1.5, 0.4)],
        changepoints: vec![2000, 3500],
        n: 5000,
        seed,
    }
}

/// One regime over 5000 observations: `xi = 0.4`, `sigma = 2`, threshold at
/// the 0.85 bulk quantile.
pub fn design_single_regime(seed: u64) -> TruthSpec {
    TruthSpec {
        bulk: design_bulk(),
        tails: vec![TailSpec { threshold: Threshold::Quantile(0.85), sigma: 2.0, xi: 0.4 }],
        changepoints: vec![],
        n: 5000,
        seed,
    }
}
