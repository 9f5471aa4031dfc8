//! JSON pipeline configuration. Every key is optional and command-line flags
//! take precedence over it.

use std::path::{Path, PathBuf};

use cevmm::dists::BulkKind;
use cevmm::model::Hyperparams;
use cevmm::simulate::TruthSpec;
use serde::Deserialize;

use crate::error::CliError;

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub seed: Option<u64>,
    pub out_dir: Option<PathBuf>,
    pub quiet: Option<bool>,

    /// Input series for `preprocess`, `fit`, `select`, `risk` and `backtest`.
    pub data: Option<PathBuf>,
    pub column: Option<String>,
    /// Comma-separated steps, e.g. `"returns,negate,blockmax:2"`.
    pub steps: Option<String>,

    pub kind: Option<BulkKind>,
    pub k: Option<usize>,
    pub l: Option<usize>,
    pub iterations: Option<usize>,
    pub burn_in: Option<usize>,
    pub thin: Option<usize>,
    pub chains: Option<usize>,
    pub adapt: Option<bool>,
    pub allow_unconverged: Option<bool>,
    #[serde(default)]
    pub hyper: HyperOverrides,

    /// Generating parameters for `simulate`.
    pub truth: Option<TruthSpec>,
    pub n: Option<usize>,

    pub chain: Option<PathBuf>,
    pub return_periods: Option<Vec<f64>>,
    pub var: Option<Vec<f64>>,
    pub es: Option<Vec<f64>>,
    pub normfit: Option<bool>,
    pub backtest: Option<f64>,
}

impl PipelineConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("config {}: {e}", path.display())))
    }
}

/// Replacements for individual data-driven prior defaults.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HyperOverrides {
    pub mu_u: Option<f64>,
    pub sigma2_u: Option<f64>,
    pub gamma_shape_c: Option<f64>,
    pub gamma_shape_d: Option<f64>,
    pub invgamma_a: Option<f64>,
    pub invgamma_b: Option<f64>,
    pub alpha_norm: Option<f64>,
    pub series_max: Option<f64>,
}

impl HyperOverrides {
    pub fn apply(&self, mut h: Hyperparams) -> Hyperparams {
        let set = |dst: &mut f64, src: Option<f64>| {
            if let Some(v) = src {
                *dst = v;
            }
        };
        set(&mut h.mu_u, self.mu_u);
        set(&mut h.sigma2_u, self.sigma2_u);
        set(&mut h.gamma_shape_c, self.gamma_shape_c);
        set(&mut h.gamma_shape_d, self.gamma_shape_d);
        set(&mut h.invgamma_a, self.invgamma_a);
        set(&mut h.invgamma_b, self.invgamma_b);
        set(&mut h.alpha_norm, self.alpha_norm);
        set(&mut h.series_max, self.series_max);
        h
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_keys_rejected() {
        assert!(serde_json::from_str::<PipelineConfig>(r#"{"k": 3, "bogus": 1}"#).is_err());
        assert!(serde_json::from_str::<PipelineConfig>(r#"{"hyper": {"mu": 1}}"#).is_err());
        let c: PipelineConfig = serde_json::from_str(r#"{"kind": "cmgpd", "k": 3, "hyper": {"mu_u": 7.5}}"#).unwrap();
        assert_eq!(c.kind, Some(BulkKind::Gamma));
        assert_eq!(c.hyper.mu_u, Some(7.5));
    }
}
