//! Tail-risk functionals of fitted models and violation backtests.

use serde::{Deserialize, Serialize};

use crate::dists::special::{norm_pdf, norm_sf_inv};
use crate::dists::XI_EPS;
use crate::error::{domain, Error, Result};
use crate::model::{Changepoints, ModelState};

/// Level at which the regime-`j` distribution is exceeded with probability
/// `p_tail`. Errors when that level lies below the threshold.
fn tail_level(state: &ModelState, j: usize, p_tail: f64) -> Result<f64> {
    let Some(tail) = state.tails.get(j) else {
        return domain(format!("regime {} does not exist (k = {})", j + 1, state.k()));
    };
    if !(p_tail > 0.0 && p_tail < 1.0) {
        return domain(format!("tail probability {p_tail} outside (0, 1)"));
    }
    let surv = 1.0 - state.bulk.cdf(tail.u);
    if p_tail > surv {
        return Err(Error::BelowThreshold { regime: j + 1 });
    }
    // ln(1 - p*) with p* the GPD probability of the level.
    let ls = p_tail.ln() - surv.ln();
    Ok(if tail.xi.abs() < XI_EPS {
        tail.u - tail.sigma * ls
    } else {
        tail.u + tail.sigma / tail.xi * (-tail.xi * ls).exp_m1()
    })
}

/// Level exceeded on average once every `t` observations in regime `j`
/// (0-based), i.e. its `1 - 1/t` quantile.
pub fn return_level(state: &ModelState, j: usize, t: f64) -> Result<f64> {
    if !(t > 1.0) {
        return domain(format!("return period must exceed 1, got {t}"));
    }
    tail_level(state, j, 1.0 / t)
}

/// Value-at-risk at tail probability `p`: the `1 - p` quantile of regime `j`.
pub fn var_level(state: &ModelState, j: usize, p: f64) -> Result<f64> {
    tail_level(state, j, p)
}

/// Mean of regime `j` beyond its value-at-risk at tail probability `p`.
pub fn expected_shortfall(state: &ModelState, j: usize, p: f64) -> Result<f64> {
    let var = var_level(state, j, p)?;
    let t = &state.tails[j];
    if t.xi >= 1.0 {
        return Err(Error::InfiniteMeanTail { regime: j + 1, xi: t.xi });
    }
    Ok(var / (1.0 - t.xi) + (t.sigma - t.xi * t.u) / (1.0 - t.xi))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RiskMeasure {
    /// Level is a return period `t`.
    ReturnLevel,
    /// Level is a tail probability.
    Var,
    /// Level is a tail probability.
    Es,
}

impl RiskMeasure {
    pub fn name(&self) -> &'static str {
        match self {
            RiskMeasure::ReturnLevel => "return_level",
            RiskMeasure::Var => "var",
            RiskMeasure::Es => "es",
        }
    }

    pub fn eval(&self, state: &ModelState, j: usize, level: f64) -> Result<f64> {
        match self {
            RiskMeasure::ReturnLevel => return_level(state, j, level),
            RiskMeasure::Var => var_level(state, j, level),
            RiskMeasure::Es => expected_shortfall(state, j, level),
        }
    }
}

/// Posterior summary of one risk functional at one level. `lo` and `hi` are
/// the 2.5% and 97.5% sample quantiles.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskSummary {
    /// 1-based regime.
    pub regime: usize,
    pub measure: RiskMeasure,
    pub level: f64,
    pub point: f64,
    pub lo: f64,
    pub hi: f64,
    /// Samples where the functional was undefined.
    pub dropped: usize,
}

fn sorted_quantile(sorted: &[f64], q: f64) -> f64 {
    crate::model::empirical_quantile(sorted, q)
}

/// Evaluates `measure` on every sample for each level in regime `j`
/// (0-based). Samples where it is undefined are dropped; more than half
/// dropped is an error.
pub fn posterior_risk(samples: &[ModelState], j: usize, measure: RiskMeasure, levels: &[f64]) -> Result<Vec<RiskSummary>> {
    if samples.is_empty() {
        return domain("no posterior samples");
    }
    if levels.is_empty() {
        return domain("no risk levels requested");
    }
    let mut out = Vec::with_capacity(levels.len());
    for &level in levels {
        let mut vals = Vec::with_capacity(samples.len());
        let mut last_err = None;
        for s in samples {
            match measure.eval(s, j, level) {
                Ok(v) if v.is_finite() => vals.push(v),
                Ok(_) => {}
                Err(e @ Error::Domain(_)) => return Err(e),
                Err(e) => last_err = Some(e),
            }
        }
        let dropped = samples.len() - vals.len();
        if 2 * dropped > samples.len() {
            if dropped == samples.len() {
                if let Some(e @ Error::BelowThreshold { .. }) = last_err {
                    return Err(e);
                }
            }
            return Err(Error::TooManyDropped { dropped, total: samples.len(), level });
        }
        let point = vals.iter().sum::<f64>() / vals.len() as f64;
        vals.sort_by(|a, b| a.total_cmp(b));
        out.push(RiskSummary {
            regime: j + 1,
            measure,
            level,
            point,
            lo: sorted_quantile(&vals, 0.025),
            hi: sorted_quantile(&vals, 0.975),
            dropped,
        });
    }
    Ok(out)
}

/// Log-spaced return periods from 10 to 1000.
pub fn default_return_periods(count: usize) -> Vec<f64> {
    let count = count.max(2);
    (0..count).map(|i| 10f64.powf(1.0 + 2.0 * i as f64 / (count - 1) as f64)).collect()
}

/// Normal-fit value-at-risk and expected shortfall at tail probability `p`,
/// both multiplied by a safety factor of 3.
pub fn normfit_var_es(slice: &[f64], p: f64) -> Result<(f64, f64)> {
    if slice.len() < 30 {
        return domain(format!("normal fit needs at least 30 observations, got {}", slice.len()));
    }
    if !(p > 0.0 && p < 1.0) {
        return domain(format!("tail probability {p} outside (0, 1)"));
    }
    let n = slice.len() as f64;
    let mean = slice.iter().sum::<f64>() / n;
    let var = slice.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    if !(var > 0.0) {
        return domain("normal fit needs a non-constant slice");
    }
    let sd = var.sqrt();
    let z = norm_sf_inv(p);
    Ok((3.0 * (mean + sd * z), 3.0 * (mean + sd * norm_pdf(z) / p)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BacktestRow {
    /// 1-based regime.
    pub regime: usize,
    pub length: usize,
    pub expected: usize,
    pub observed: usize,
}

/// Counts `realized_t > var_t` per regime. The expected count is the
/// regime length times `p`, rounded down.
pub fn backtest(var_series: &[f64], realized: &[f64], regimes: &Changepoints, p: f64) -> Result<Vec<BacktestRow>> {
    if var_series.len() != realized.len() {
        return domain(format!("VaR series has {} values but the realized series has {}", var_series.len(), realized.len()));
    }
    if regimes.n() != realized.len() {
        return domain(format!("changepoints cover {} observations, series has {}", regimes.n(), realized.len()));
    }
    if !(p > 0.0 && p < 1.0) {
        return domain(format!("tail probability {p} outside (0, 1)"));
    }
    Ok((0..regimes.k())
        .map(|j| {
            let r = regimes.range(j);
            let length = r.len();
            let observed = r.filter(|&t| realized[t] > var_series[t]).count();
            // The small offset keeps products such as 100 * 0.07 on the exact integer.
            let expected = (length as f64 * p + 1e-9).floor() as usize;
            BacktestRow { regime: j + 1, length, expected, observed }
        })
        .collect())
}

/// Per-observation level series from one value per regime.
pub fn regime_series(per_regime: &[f64], regimes: &Changepoints) -> Vec<f64> {
    let mut out = Vec::with_capacity(regimes.n());
    for (j, &v) in per_regime.iter().enumerate() {
        out.extend(std::iter::repeat_n(v, regimes.regime_len(j)));
    }
    out
}
