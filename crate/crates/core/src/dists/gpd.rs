use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};

/// Below this |ξ| the exponential (ξ = 0) branch is used.
pub const XI_EPS: f64 = 1e-8;

/// Generalized Pareto parameters: threshold `u`, scale `sigma`, shape `xi`.
///
/// Support is `[u, ∞)` for `xi >= 0` and `[u, u - sigma / xi]` for `xi < 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GpdParams {
    pub u: f64,
    pub sigma: f64,
    pub xi: f64,
}

impl GpdParams {
    pub fn new(u: f64, sigma: f64, xi: f64) -> Result<Self> {
        if !(sigma > 0.0) || !sigma.is_finite() {
            return domain(format!("GPD scale must be positive and finite, got {sigma}"));
        }
        if !u.is_finite() || !xi.is_finite() {
            return domain(format!("GPD threshold and shape must be finite (u={u}, xi={xi})"));
        }
        Ok(Self { u, sigma, xi })
    }

    /// Upper end of the support (`+∞` unless `xi < 0`).
    pub fn upper_endpoint(&self) -> f64 {
        if self.xi < 0.0 && self.xi.abs() >= XI_EPS {
            self.u - self.sigma / self.xi
        } else {
            f64::INFINITY
        }
    }
}

pub fn gpd_logpdf(x: f64, p: &GpdParams) -> f64 {
    let z = (x - p.u) / p.sigma;
    if !(z >= 0.0) {
        return f64::NEG_INFINITY;
    }
    if p.xi.abs() < XI_EPS {
        return -p.sigma.ln() - z;
    }
    let t = p.xi * z;
    if t <= -1.0 {
        return f64::NEG_INFINITY;
    }
    -p.sigma.ln() - (1.0 + 1.0 / p.xi) * t.ln_1p()
}

pub fn gpd_cdf(x: f64, p: &GpdParams) -> f64 {
    let z = (x - p.u) / p.sigma;
    if z.is_nan() {
        return f64::NAN;
    }
    if z <= 0.0 {
        return 0.0;
    }
    if p.xi.abs() < XI_EPS {
        return -(-z).exp_m1();
    }
    let t = p.xi * z;
    if t <= -1.0 {
        return 1.0;
    }
    (-(-t.ln_1p() / p.xi).exp_m1()).clamp(0.0, 1.0)
}

pub fn gpd_quantile(q: f64, p: &GpdParams) -> Result<f64> {
    if !(0.0..1.0).contains(&q) {
        return domain(format!("GPD quantile probability must lie in [0, 1), got {q}"));
    }
    let log_surv = (-q).ln_1p();
    if p.xi.abs() < XI_EPS {
        Ok(p.u - p.sigma * log_surv)
    } else {
        Ok(p.u + p.sigma / p.xi * (-p.xi * log_surv).exp_m1())
    }
}
