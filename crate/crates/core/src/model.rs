//! Parameter containers, priors and the log-posterior of the changepoint
//! extreme value mixture model.
//!
//! Observation `t` (1-based, `1..=n`) belongs to regime `j` when
//! `tau[j] < t <= tau[j + 1]`. Regimes are indexed from 0 in this API; the
//! serialized parameter names (`xi_1`, `tau_1`, ...) are 1-based.

use std::ops::Range;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dists::special::{gamma_logpdf_meanshape, ln_gamma, norm_logpdf};
use crate::dists::{gpd_logpdf, BulkKind, BulkParams, Components, GpdParams, XI_EPS};
use crate::error::{domain, Error, Result};

/// Per-regime GPD tail `(u_j, sigma_j, xi_j)`.
pub type RegimeTail = GpdParams;

/// The shape prior is only real for `xi > -1/2`.
pub const XI_PRIOR_MIN: f64 = -0.5;

/// Ordered changepoint vector `(tau_0 = 0, ..., tau_k = n)`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Changepoints {
    tau: Vec<usize>,
}

impl Changepoints {
    /// Takes the full vector including `tau_0 = 0` and `tau_k = n`.
    pub fn new(tau: Vec<usize>, n: usize) -> Result<Self> {
        if tau.len() < 2 {
            return domain("changepoint vector needs at least (0, n)");
        }
        if tau[0] != 0 || *tau.last().unwrap() != n {
            return domain(format!("changepoints must start at 0 and end at n={n}, got {tau:?}"));
        }
        if tau.windows(2).any(|w| w[0] >= w[1]) {
            return domain(format!("changepoints must be strictly increasing, got {tau:?}"));
        }
        Ok(Self { tau })
    }

    /// Builds from the `k - 1` inner changepoints.
    pub fn from_inner(inner: &[usize], n: usize) -> Result<Self> {
        let mut tau = Vec::with_capacity(inner.len() + 2);
        tau.push(0);
        tau.extend_from_slice(inner);
        tau.push(n);
        Self::new(tau, n)
    }

    pub fn evenly_spaced(k: usize, n: usize) -> Result<Self> {
        if k == 0 || n < k {
            return domain(format!("cannot split {n} observations into {k} regimes"));
        }
        let tau = (0..=k).map(|j| ((j as f64) * n as f64 / k as f64).round() as usize).collect();
        Self::new(tau, n)
    }

    /// Number of regimes.
    pub fn k(&self) -> usize {
        self.tau.len() - 1
    }

    pub fn n(&self) -> usize {
        *self.tau.last().unwrap()
    }

    pub fn tau(&self) -> &[usize] {
        &self.tau
    }

    pub fn inner(&self) -> &[usize] {
        &self.tau[1..self.tau.len() - 1]
    }

    /// Regime (0-based) of the 1-based observation index `t`.
    pub fn regime_of(&self, t: usize) -> Result<usize> {
        if t == 0 || t > self.n() {
            return domain(format!("observation index {t} outside 1..={}", self.n()));
        }
        Ok(self.tau.partition_point(|&c| c < t) - 1)
    }

    /// 0-based slice range of the observations in regime `j`.
    pub fn range(&self, j: usize) -> Range<usize> {
        self.tau[j]..self.tau[j + 1]
    }

    pub fn regime_len(&self, j: usize) -> usize {
        self.tau[j + 1] - self.tau[j]
    }

    pub(crate) fn set(&mut self, idx: usize, value: usize) {
        debug_assert!(idx > 0 && idx < self.tau.len() - 1);
        self.tau[idx] = value;
    }
}

/// Time-ordered observations.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    x: Vec<f64>,
    ln_x: Vec<f64>,
}

impl Dataset {
    pub fn new(x: Vec<f64>) -> Result<Self> {
        if x.is_empty() {
            return Err(Error::Data("empty series".into()));
        }
        if let Some(i) = x.iter().position(|v| !v.is_finite()) {
            return Err(Error::Data(format!("non-finite value at row {}", i + 1)));
        }
        let ln_x = x.iter().map(|&v| if v > 0.0 { v.ln() } else { f64::NAN }).collect();
        Ok(Self { x, ln_x })
    }

    /// Gamma bulks need strictly positive data; names the first offending row.
    pub fn check_kind(&self, kind: BulkKind) -> Result<()> {
        if kind == BulkKind::Gamma {
            if let Some(i) = self.x.iter().position(|&v| v <= 0.0) {
                return Err(Error::Data(format!(
                    "row {} has value {} but a Gamma-mixture bulk needs strictly positive data",
                    i + 1,
                    self.x[i]
                )));
            }
        }
        Ok(())
    }

    pub fn x(&self) -> &[f64] {
        &self.x
    }

    pub(crate) fn ln_x(&self) -> &[f64] {
        &self.ln_x
    }

    pub fn n(&self) -> usize {
        self.x.len()
    }

    pub fn max(&self) -> f64 {
        self.x.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn mean(&self) -> f64 {
        self.x.iter().sum::<f64>() / self.n() as f64
    }

    /// SHA-256 over the little-endian bytes of the observations.
    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        for v in &self.x {
            h.update(v.to_le_bytes());
        }
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn sorted(&self) -> Vec<f64> {
        let mut s = self.x.clone();
        s.sort_by(|a, b| a.total_cmp(b));
        s
    }
}

/// Linear interpolation between order statistics (type 7).
pub fn empirical_quantile(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = (n - 1) as f64 * q.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    if lo + 1 >= n {
        return sorted[n - 1];
    }
    sorted[lo] + (h - lo as f64) * (sorted[lo + 1] - sorted[lo])
}

/// Full parameter set `(bulk, tails, changepoints)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelState {
    pub bulk: BulkParams,
    pub tails: Vec<RegimeTail>,
    pub cps: Changepoints,
}

impl ModelState {
    pub fn new(bulk: BulkParams, tails: Vec<RegimeTail>, cps: Changepoints) -> Result<Self> {
        let s = Self { bulk, tails, cps };
        s.check_shape()?;
        Ok(s)
    }

    pub fn k(&self) -> usize {
        self.tails.len()
    }

    pub fn l(&self) -> usize {
        self.bulk.len()
    }

    fn check_shape(&self) -> Result<()> {
        self.bulk.validate()?;
        if self.tails.len() != self.cps.k() {
            return domain(format!("{} tails for {} regimes", self.tails.len(), self.cps.k()));
        }
        for (j, t) in self.tails.iter().enumerate() {
            GpdParams::new(t.u, t.sigma, t.xi)?;
            if t.xi <= XI_PRIOR_MIN {
                return domain(format!("regime {}: xi = {} is outside the prior support xi > -0.5", j + 1, t.xi));
            }
        }
        Ok(())
    }

    /// Checks every invariant jointly against `data`.
    pub fn validate(&self, data: &Dataset) -> Result<()> {
        self.check_shape()?;
        data.check_kind(self.bulk.kind())?;
        if self.cps.n() != data.n() {
            return domain(format!("changepoints end at {} but the series has {} observations", self.cps.n(), data.n()));
        }
        for (j, t) in self.tails.iter().enumerate() {
            let m = data.x()[self.cps.range(j)].iter().copied().fold(f64::NEG_INFINITY, f64::max);
            if t.xi < 0.0 && !(t.upper_endpoint() > m) {
                return domain(format!(
                    "regime {}: GPD upper endpoint {} does not exceed the regime maximum {m}",
                    j + 1,
                    t.upper_endpoint()
                ));
            }
        }
        Ok(())
    }
}

impl ModelState {
    /// Column names of the flat parameter vector: `xi_*`, `sigma_*`, `u_*`,
    /// inner `tau_*`, then `w_*`, `mu_*` and `eta_*` or `delta2_*`.
    pub fn param_names(kind: BulkKind, k: usize, l: usize) -> Vec<String> {
        let mut names = Vec::with_capacity(4 * k + 3 * l);
        for prefix in ["xi", "sigma", "u"] {
            names.extend((1..=k).map(|j| format!("{prefix}_{j}")));
        }
        names.extend((1..k).map(|j| format!("tau_{j}")));
        for prefix in ["w", "mu", kind.spread_name()] {
            names.extend((1..=l).map(|z| format!("{prefix}_{z}")));
        }
        names
    }

    /// Values in the order of [`ModelState::param_names`].
    pub fn to_vector(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(4 * self.k() + 3 * self.l());
        v.extend(self.tails.iter().map(|t| t.xi));
        v.extend(self.tails.iter().map(|t| t.sigma));
        v.extend(self.tails.iter().map(|t| t.u));
        v.extend(self.cps.inner().iter().map(|&t| t as f64));
        v.extend_from_slice(&self.bulk.weights);
        v.extend(self.bulk.means());
        v.extend(self.bulk.spreads());
        v
    }

    /// Inverse of [`ModelState::to_vector`]. Changepoints must be integers.
    pub fn from_vector(kind: BulkKind, k: usize, l: usize, n: usize, v: &[f64]) -> Result<Self> {
        if k == 0 || l == 0 || v.len() != 4 * k - 1 + 3 * l {
            return domain(format!("expected {} values for k={k}, l={l}, got {}", 4 * k - 1 + 3 * l, v.len()));
        }
        let tails = (0..k).map(|j| GpdParams::new(v[2 * k + j], v[k + j], v[j])).collect::<Result<Vec<_>>>()?;
        let mut inner = Vec::with_capacity(k - 1);
        for &t in &v[3 * k..4 * k - 1] {
            if !(t >= 0.0) || t.fract() != 0.0 {
                return domain(format!("changepoint {t} is not a nonnegative integer"));
            }
            inner.push(t as usize);
        }
        let cps = Changepoints::from_inner(&inner, n)?;
        let b = 4 * k - 1;
        let bulk = BulkParams::from_parts(kind, v[b..b + l].to_vec(), &v[b + l..b + 2 * l], &v[b + 2 * l..b + 3 * l])?;
        Self::new(bulk, tails, cps)
    }
}

/// Prior hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Hyperparams {
    /// Threshold prior mean.
    pub mu_u: f64,
    /// Threshold prior variance.
    pub sigma2_u: f64,
    /// Gamma prior `G(c/d, c)` on shapes (CMGPD) or variances (CMNPD).
    pub gamma_shape_c: f64,
    pub gamma_shape_d: f64,
    /// Inverse-Gamma prior on Gamma component means.
    pub invgamma_a: f64,
    pub invgamma_b: f64,
    /// Scale of the conditional Normal prior on Normal component means.
    pub alpha_norm: f64,
    /// Series maximum `M`, centring the Normal component means at `j / M`.
    pub series_max: f64,
}

impl Hyperparams {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("sigma2_u", self.sigma2_u),
            ("gamma_shape_c", self.gamma_shape_c),
            ("gamma_shape_d", self.gamma_shape_d),
            ("invgamma_a", self.invgamma_a),
            ("invgamma_b", self.invgamma_b),
            ("alpha_norm", self.alpha_norm),
        ];
        for (name, v) in positive {
            if !(v > 0.0) || !v.is_finite() {
                return domain(format!("hyperparameter {name} must be positive and finite, got {v}"));
            }
        }
        if !self.mu_u.is_finite() || !self.series_max.is_finite() || self.series_max == 0.0 {
            return domain("mu_u must be finite and series_max finite and nonzero");
        }
        Ok(())
    }
}

/// Data-driven defaults: threshold prior centred at the 90th percentile with
/// a 95% interval reaching the 50th and 99th percentiles, vague bulk priors.
pub fn default_hyperparams(data: &Dataset, kind: BulkKind) -> Result<Hyperparams> {
    if data.n() < 10 {
        return domain(format!("need at least 10 observations for default priors, got {}", data.n()));
    }
    let sorted = data.sorted();
    let q50 = empirical_quantile(&sorted, 0.50);
    let q90 = empirical_quantile(&sorted, 0.90);
    let q99 = empirical_quantile(&sorted, 0.99);
    let sigma_u = (q99 - q90).max(q90 - q50) / 1.96;
    if !(sigma_u > 0.0) {
        return domain("data are constant over the 50th-99th percentiles; the threshold prior would be degenerate");
    }
    let a = 2.1;
    let mean = data.mean();
    // Only the Gamma bulk uses the inverse-Gamma prior; keep b valid otherwise.
    let b = match kind {
        BulkKind::Gamma => (a - 1.0) * mean,
        BulkKind::Normal => (a - 1.0) * if mean > 0.0 { mean } else { 1.0 },
    };
    let h = Hyperparams {
        mu_u: q90,
        sigma2_u: sigma_u * sigma_u,
        gamma_shape_c: 0.01,
        gamma_shape_d: 0.01,
        invgamma_a: a,
        invgamma_b: b,
        alpha_norm: 100.0,
        series_max: data.max(),
    };
    h.validate()?;
    Ok(h)
}

/// Log-density of observation `t` (1-based) with value `x_t`.
pub fn model_logpdf(t: usize, x_t: f64, state: &ModelState) -> f64 {
    let j = match state.cps.regime_of(t) {
        Ok(j) => j,
        Err(_) => return f64::NEG_INFINITY,
    };
    let tail = &state.tails[j];
    if x_t <= tail.u {
        state.bulk.logpdf(x_t)
    } else {
        (1.0 - state.bulk.cdf(tail.u)).ln() + gpd_logpdf(x_t, tail)
    }
}

/// Precomputed per-component constants for fast bulk log-density evaluation.
#[derive(Debug, Clone)]
pub(crate) struct BulkEval {
    kind: BulkKind,
    konst: Vec<f64>,
    lin: Vec<f64>,
    quad: Vec<f64>,
    mu: Vec<f64>,
}

impl BulkEval {
    pub(crate) fn new(bulk: &BulkParams) -> Self {
        let l = bulk.len();
        let (mut konst, mut lin, mut quad, mut mu) = (vec![0.0; l], vec![0.0; l], vec![0.0; l], vec![0.0; l]);
        match &bulk.components {
            Components::Gamma(c) => {
                for z in 0..l {
                    let rate = c[z].rate();
                    konst[z] = bulk.weights[z].ln() + c[z].eta * rate.ln() - ln_gamma(c[z].eta);
                    lin[z] = c[z].eta - 1.0;
                    quad[z] = rate;
                }
            }
            Components::Normal(c) => {
                for z in 0..l {
                    konst[z] = bulk.weights[z].ln() - 0.5 * (2.0 * std::f64::consts::PI * c[z].delta2).ln();
                    quad[z] = 0.5 / c[z].delta2;
                    mu[z] = c[z].mu;
                }
            }
        }
        Self { kind: bulk.kind(), konst, lin, quad, mu }
    }

    #[inline]
    fn term(&self, z: usize, x: f64, ln_x: f64) -> f64 {
        match self.kind {
            BulkKind::Gamma => self.konst[z] + self.lin[z] * ln_x - self.quad[z] * x,
            BulkKind::Normal => {
                let d = x - self.mu[z];
                self.konst[z] - self.quad[z] * d * d
            }
        }
    }

    #[inline]
    pub(crate) fn logpdf(&self, x: f64, ln_x: f64) -> f64 {
        if self.kind == BulkKind::Gamma && !(x > 0.0) {
            return f64::NEG_INFINITY;
        }
        let l = self.konst.len();
        if l == 1 {
            return self.term(0, x, ln_x);
        }
        let mut m = f64::NEG_INFINITY;
        let mut terms = [0.0f64; 8];
        let mut heap;
        let buf: &mut [f64] = if l <= 8 {
            &mut terms[..l]
        } else {
            heap = vec![0.0; l];
            &mut heap
        };
        for (z, slot) in buf.iter_mut().enumerate() {
            *slot = self.term(z, x, ln_x);
            m = m.max(*slot);
        }
        if m == f64::NEG_INFINITY {
            return m;
        }
        m + buf.iter().map(|v| (v - m).exp()).sum::<f64>().ln()
    }
}

/// `ln(1 - H(u))`, the log tail mass above a threshold.
pub(crate) fn log_tail_mass(bulk: &BulkParams, u: f64) -> f64 {
    (1.0 - bulk.cdf(u)).ln()
}

/// Log-likelihood of the observations in `range` under one regime's tail.
pub(crate) fn segment_loglik(
    data: &Dataset,
    range: Range<usize>,
    bulk: &BulkEval,
    tail: &RegimeTail,
    log_tail: f64,
) -> f64 {
    let xs = &data.x()[range.clone()];
    let lxs = &data.ln_x()[range];
    let ln_sigma = tail.sigma.ln();
    let inv_sigma = 1.0 / tail.sigma;
    let exponential = tail.xi.abs() < XI_EPS;
    let power = 1.0 + 1.0 / tail.xi;
    let mut bulk_sum = 0.0;
    let mut tail_sum = 0.0;
    let mut n_tail = 0usize;
    for (&x, &lx) in xs.iter().zip(lxs) {
        if x <= tail.u {
            bulk_sum += bulk.logpdf(x, lx);
        } else {
            n_tail += 1;
            let z = (x - tail.u) * inv_sigma;
            if exponential {
                tail_sum -= z;
            } else {
                let t = tail.xi * z;
                if t <= -1.0 {
                    return f64::NEG_INFINITY;
                }
                tail_sum -= power * t.ln_1p();
            }
        }
    }
    if n_tail == 0 {
        return bulk_sum;
    }
    bulk_sum + tail_sum + n_tail as f64 * (log_tail - ln_sigma)
}

pub fn log_likelihood(state: &ModelState, data: &Dataset) -> f64 {
    let eval = BulkEval::new(&state.bulk);
    let mut total = 0.0;
    for (j, tail) in state.tails.iter().enumerate() {
        let lt = log_tail_mass(&state.bulk, tail.u);
        total += segment_loglik(data, state.cps.range(j), &eval, tail, lt);
        if total == f64::NEG_INFINITY {
            break;
        }
    }
    total
}

/// Log-density of every observation under `state`, in time order.
pub fn pointwise_loglik(state: &ModelState, data: &Dataset) -> Vec<f64> {
    let eval = BulkEval::new(&state.bulk);
    let mut out = Vec::with_capacity(data.n());
    for (j, tail) in state.tails.iter().enumerate() {
        let lt = log_tail_mass(&state.bulk, tail.u);
        for i in state.cps.range(j) {
            let x = data.x()[i];
            out.push(if x <= tail.u { eval.logpdf(x, data.ln_x()[i]) } else { lt + gpd_logpdf(x, tail) });
        }
    }
    out
}

/// Shape/scale reference prior, up to a constant.
pub fn log_prior_tail(xi: f64, sigma: f64) -> f64 {
    if !(xi > XI_PRIOR_MIN) || !(sigma > 0.0) {
        return f64::NEG_INFINITY;
    }
    -sigma.ln() - xi.ln_1p() - 0.5 * (2.0 * xi).ln_1p()
}

/// Ordered-uniform changepoint prior: one `1 / (tau_{j+1} - tau_{j-1})`
/// factor per inner changepoint. Constant `-ln n` when `k = 2`.
pub fn log_prior_changepoints(cps: &Changepoints) -> f64 {
    let tau = cps.tau();
    (1..tau.len() - 1).map(|j| -((tau[j + 1] - tau[j - 1]) as f64).ln()).sum()
}

fn invgamma_logpdf(x: f64, a: f64, b: f64) -> f64 {
    if !(x > 0.0) {
        return f64::NEG_INFINITY;
    }
    a * b.ln() - ln_gamma(a) - (a + 1.0) * x.ln() - b / x
}

/// Prior terms of one regime's tail: shape/scale plus the Normal threshold prior.
pub fn log_prior_regime(tail: &RegimeTail, hyper: &Hyperparams) -> f64 {
    log_prior_tail(tail.xi, tail.sigma) + norm_logpdf(tail.u, hyper.mu_u, hyper.sigma2_u)
}

/// Prior of the bulk mixture; the ordering normalizing constant is dropped.
pub fn log_prior_bulk(bulk: &BulkParams, hyper: &Hyperparams) -> f64 {
    let l = bulk.len();
    if bulk.weights.iter().any(|w| !(*w > 0.0)) {
        return f64::NEG_INFINITY;
    }
    // Dirichlet(1, ..., 1) density.
    let mut lp = ln_gamma(l as f64);
    let means = bulk.means();
    if means.windows(2).any(|w| !(w[0] < w[1])) {
        return f64::NEG_INFINITY;
    }
    let spread_mean = hyper.gamma_shape_c / hyper.gamma_shape_d;
    for (z, &mean) in means.iter().enumerate() {
        let spread = bulk.spread_of(z);
        lp += gamma_logpdf_meanshape(spread, spread_mean, hyper.gamma_shape_c);
        lp += match bulk.kind() {
            BulkKind::Gamma => invgamma_logpdf(mean, hyper.invgamma_a, hyper.invgamma_b),
            BulkKind::Normal => {
                let var = hyper.alpha_norm * hyper.alpha_norm / spread;
                norm_logpdf(mean, (z + 1) as f64 / hyper.series_max, var)
            }
        };
    }
    lp
}

/// Log-prior; the ordering normalizing constants are dropped.
pub fn log_prior(state: &ModelState, hyper: &Hyperparams) -> f64 {
    let tails: f64 = state.tails.iter().map(|t| log_prior_regime(t, hyper)).sum();
    tails + log_prior_changepoints(&state.cps) + log_prior_bulk(&state.bulk, hyper)
}

pub fn log_posterior(state: &ModelState, data: &Dataset, hyper: &Hyperparams) -> f64 {
    let lp = log_prior(state, hyper);
    if lp == f64::NEG_INFINITY {
        return lp;
    }
    lp + log_likelihood(state, data)
}
