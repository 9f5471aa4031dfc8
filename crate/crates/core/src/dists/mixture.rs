//! Finite Gamma and Normal mixtures used as the bulk below the thresholds.

use serde::{Deserialize, Serialize};

use super::special::{gamma_logpdf_meanshape, gamma_p, ln_gamma, norm_cdf, norm_logpdf};
use crate::error::{domain, Result};

/// Gamma component in the (mean, shape) parametrization; rate = shape / mean.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GammaComponent {
    pub mu: f64,
    pub eta: f64,
}

impl GammaComponent {
    pub fn new(mu: f64, eta: f64) -> Result<Self> {
        if !(mu > 0.0 && eta > 0.0) || !mu.is_finite() || !eta.is_finite() {
            return domain(format!("Gamma component needs mu > 0 and eta > 0 (mu={mu}, eta={eta})"));
        }
        Ok(Self { mu, eta })
    }

    pub fn rate(&self) -> f64 {
        self.eta / self.mu
    }

    pub fn logpdf(&self, x: f64) -> f64 {
        gamma_logpdf_meanshape(x, self.mu, self.eta)
    }

    pub fn cdf(&self, x: f64) -> f64 {
        if x <= 0.0 {
            0.0
        } else {
            gamma_p(self.eta, self.rate() * x)
        }
    }

    pub fn variance(&self) -> f64 {
        self.mu * self.mu / self.eta
    }
}

/// Normal component with mean `mu` and variance `delta2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormalComponent {
    pub mu: f64,
    pub delta2: f64,
}

impl NormalComponent {
    pub fn new(mu: f64, delta2: f64) -> Result<Self> {
        if !(delta2 > 0.0) || !mu.is_finite() || !delta2.is_finite() {
            return domain(format!("Normal component needs finite mu and delta2 > 0 (mu={mu}, delta2={delta2})"));
        }
        Ok(Self { mu, delta2 })
    }

    pub fn logpdf(&self, x: f64) -> f64 {
        norm_logpdf(x, self.mu, self.delta2)
    }

    pub fn cdf(&self, x: f64) -> f64 {
        norm_cdf((x - self.mu) / self.delta2.sqrt())
    }
}

pub fn gamma_mix_cdf(x: f64, weights: &[f64], comps: &[GammaComponent]) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    let v: f64 = weights.iter().zip(comps).map(|(w, c)| w * c.cdf(x)).sum();
    v.clamp(0.0, 1.0)
}

pub fn normal_mix_cdf(x: f64, weights: &[f64], comps: &[NormalComponent]) -> f64 {
    let v: f64 = weights.iter().zip(comps).map(|(w, c)| w * c.cdf(x)).sum();
    v.clamp(0.0, 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BulkKind {
    /// Gamma mixture bulk (CMGPD), positive data only.
    #[serde(alias = "cmgpd")]
    Gamma,
    /// Normal mixture bulk (CMNPD).
    #[serde(alias = "cmnpd")]
    Normal,
}

impl BulkKind {
    /// Name of the per-component spread parameter.
    pub fn spread_name(&self) -> &'static str {
        match self {
            BulkKind::Gamma => "eta",
            BulkKind::Normal => "delta2",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "components", rename_all = "lowercase")]
pub enum Components {
    Gamma(Vec<GammaComponent>),
    Normal(Vec<NormalComponent>),
}

/// Shared bulk mixture: weights on the simplex plus ordered components.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BulkParams {
    pub weights: Vec<f64>,
    pub components: Components,
}

impl BulkParams {
    pub fn gamma(weights: Vec<f64>, comps: Vec<GammaComponent>) -> Result<Self> {
        let b = Self { weights, components: Components::Gamma(comps) };
        b.validate()?;
        Ok(b)
    }

    pub fn normal(weights: Vec<f64>, comps: Vec<NormalComponent>) -> Result<Self> {
        let b = Self { weights, components: Components::Normal(comps) };
        b.validate()?;
        Ok(b)
    }

    /// Builds a mixture of `kind` from parallel mean/spread vectors.
    pub fn from_parts(kind: BulkKind, weights: Vec<f64>, means: &[f64], spreads: &[f64]) -> Result<Self> {
        if means.len() != spreads.len() {
            return domain("means and spreads differ in length");
        }
        match kind {
            BulkKind::Gamma => Self::gamma(
                weights,
                means.iter().zip(spreads).map(|(&m, &s)| GammaComponent::new(m, s)).collect::<Result<_>>()?,
            ),
            BulkKind::Normal => Self::normal(
                weights,
                means.iter().zip(spreads).map(|(&m, &s)| NormalComponent::new(m, s)).collect::<Result<_>>()?,
            ),
        }
    }

    pub fn kind(&self) -> BulkKind {
        match self.components {
            Components::Gamma(_) => BulkKind::Gamma,
            Components::Normal(_) => BulkKind::Normal,
        }
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn mean_of(&self, z: usize) -> f64 {
        match &self.components {
            Components::Gamma(c) => c[z].mu,
            Components::Normal(c) => c[z].mu,
        }
    }

    /// Gamma shape `eta` or Normal variance `delta2` of component `z`.
    pub fn spread_of(&self, z: usize) -> f64 {
        match &self.components {
            Components::Gamma(c) => c[z].eta,
            Components::Normal(c) => c[z].delta2,
        }
    }

    pub fn set_mean(&mut self, z: usize, v: f64) {
        match &mut self.components {
            Components::Gamma(c) => c[z].mu = v,
            Components::Normal(c) => c[z].mu = v,
        }
    }

    pub fn set_spread(&mut self, z: usize, v: f64) {
        match &mut self.components {
            Components::Gamma(c) => c[z].eta = v,
            Components::Normal(c) => c[z].delta2 = v,
        }
    }

    pub fn means(&self) -> Vec<f64> {
        (0..self.len()).map(|z| self.mean_of(z)).collect()
    }

    pub fn spreads(&self) -> Vec<f64> {
        (0..self.len()).map(|z| self.spread_of(z)).collect()
    }

    /// Checks weights, component parameters and the strict mean ordering.
    pub fn validate(&self) -> Result<()> {
        let l = self.weights.len();
        let nc = match &self.components {
            Components::Gamma(c) => c.len(),
            Components::Normal(c) => c.len(),
        };
        if l == 0 || nc != l {
            return domain(format!("mixture needs matching non-empty weights and components ({l} vs {nc})"));
        }
        if self.weights.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
            return domain("mixture weights must be nonnegative");
        }
        let s: f64 = self.weights.iter().sum();
        if (s - 1.0).abs() > 1e-12 {
            return domain(format!("mixture weights sum to {s}, not 1"));
        }
        match &self.components {
            Components::Gamma(c) => {
                for g in c {
                    GammaComponent::new(g.mu, g.eta)?;
                }
            }
            Components::Normal(c) => {
                for g in c {
                    NormalComponent::new(g.mu, g.delta2)?;
                }
            }
        }
        let m = self.means();
        if m.windows(2).any(|w| !(w[0] < w[1])) {
            return domain("component means must be strictly increasing");
        }
        Ok(())
    }

    pub fn cdf(&self, x: f64) -> f64 {
        match &self.components {
            Components::Gamma(c) => gamma_mix_cdf(x, &self.weights, c),
            Components::Normal(c) => normal_mix_cdf(x, &self.weights, c),
        }
    }

    pub fn logpdf(&self, x: f64) -> f64 {
        let terms: Vec<f64> = match &self.components {
            Components::Gamma(c) => self.weights.iter().zip(c).map(|(w, g)| w.ln() + g.logpdf(x)).collect(),
            Components::Normal(c) => self.weights.iter().zip(c).map(|(w, g)| w.ln() + g.logpdf(x)).collect(),
        };
        log_sum_exp(&terms)
    }

    /// Mixture mean and standard deviation.
    pub fn moments(&self) -> (f64, f64) {
        let (mut m1, mut m2) = (0.0, 0.0);
        for z in 0..self.len() {
            let mu = self.mean_of(z);
            let var = match &self.components {
                Components::Gamma(c) => c[z].variance(),
                Components::Normal(c) => c[z].delta2,
            };
            m1 += self.weights[z] * mu;
            m2 += self.weights[z] * (var + mu * mu);
        }
        (m1, (m2 - m1 * m1).max(0.0).sqrt())
    }

    /// Inverts the mixture cdf by bisection.
    pub fn quantile(&self, q: f64) -> Result<f64> {
        mix_quantile(q, self)
    }
}

/// Bisection inversion of the mixture cdf, to 1e-9 absolute or better.
///
/// Brackets are `[0, mean + 50 sd]` for Gamma mixtures and `mean ± 50 sd`
/// for Normal mixtures.
pub fn mix_quantile(q: f64, bulk: &BulkParams) -> Result<f64> {
    if !(q > 0.0 && q < 1.0) {
        return domain(format!("mixture quantile needs 0 < q < 1, got {q}"));
    }
    let (mean, sd) = bulk.moments();
    let (mut lo, mut hi) = match bulk.kind() {
        BulkKind::Gamma => (0.0, mean + 50.0 * sd),
        BulkKind::Normal => (mean - 50.0 * sd, mean + 50.0 * sd),
    };
    // The moment bracket can be too tight for heavy components; widen if so.
    while bulk.cdf(hi) < q {
        hi = mean + 2.0 * (hi - mean).max(1.0);
        if !hi.is_finite() {
            return domain("mixture quantile bracket diverged");
        }
    }
    if bulk.kind() == BulkKind::Normal {
        while bulk.cdf(lo) > q {
            lo = mean - 2.0 * (mean - lo).max(1.0);
            if !lo.is_finite() {
                return domain("mixture quantile bracket diverged");
            }
        }
    }
    for _ in 0..400 {
        let mid = 0.5 * (lo + hi);
        if bulk.cdf(mid) < q {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-12 * (1.0 + mid.abs()) {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}

pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY || m.is_nan() {
        return m;
    }
    if m == f64::INFINITY {
        return m;
    }
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Dirichlet log-density at `p` with concentration `alpha`.
pub fn dirichlet_logpdf(p: &[f64], alpha: &[f64]) -> f64 {
    let a0: f64 = alpha.iter().sum();
    let mut v = ln_gamma(a0);
    for (&pi, &ai) in p.iter().zip(alpha) {
        if !(pi > 0.0) {
            return f64::NEG_INFINITY;
        }
        v += (ai - 1.0) * pi.ln() - ln_gamma(ai);
    }
    v
}

#[cfg(test)]
mod tests {
    use super::*;

    fn design_bulk() -> BulkParams {
        BulkParams::gamma(
            vec![2.0 / 3.0, 1.0 / 3.0],
            vec![GammaComponent::new(2.0, 4.0).unwrap(), GammaComponent::new(8.0, 8.0).unwrap()],
        )
        .unwrap()
    }

    #[test]
    fn gamma_mixture_cdf_basics() {
        let b = design_bulk();
        assert_eq!(b.cdf(0.0), 0.0);
        assert_eq!(b.cdf(-3.0), 0.0);
        let single = [GammaComponent::new(2.0, 1.0).unwrap()];
        let v = gamma_mix_cdf(2.0, &[1.0], &single);
        assert!((v - (1.0 - (-1.0f64).exp())).abs() < 1e-14);
    }

    #[test]
    fn design_mixture_quantiles() {
        use statrs::distribution::{ContinuousCDF, Gamma};
        let b = design_bulk();
        assert!((b.quantile(0.80).unwrap() - 6.99).abs() < 0.01);
        let g1 = Gamma::new(4.0, 2.0).unwrap();
        let g2 = Gamma::new(8.0, 1.0).unwrap();
        let oracle = |x: f64| 2.0 / 3.0 * g1.cdf(x) + 1.0 / 3.0 * g2.cdf(x);
        for q in [0.80, 0.85, 0.90] {
            let x = b.quantile(q).unwrap();
            assert!((oracle(x) - q).abs() < 1e-10, "q={q}: cdf({x}) = {}", oracle(x));
        }
        // The 0.85 and 0.90 quantiles sit at 8.02 and 9.21.
        assert!((b.quantile(0.85).unwrap() - 8.02).abs() < 0.01);
        assert!((b.quantile(0.90).unwrap() - 9.21).abs() < 0.01);
    }

    #[test]
    fn normal_mixture_median_and_limits() {
        let b = BulkParams::normal(vec![1.0], vec![NormalComponent::new(1.3, 2.0).unwrap()]).unwrap();
        assert!((b.cdf(1.3) - 0.5).abs() < 1e-15);
        assert!(b.cdf(-1e6) < 1e-300);
        assert!((b.quantile(0.5).unwrap() - 1.3).abs() < 1e-9);
    }

    #[test]
    fn quantile_rejects_endpoints() {
        let b = design_bulk();
        assert!(b.quantile(0.0).is_err());
        assert!(b.quantile(1.0).is_err());
    }

    #[test]
    fn mixture_cdf_is_convex_combination() {
        let b = design_bulk();
        if let Components::Gamma(c) = &b.components {
            for i in 0..100 {
                let x = 0.25 * i as f64;
                let direct = b.weights[0] * c[0].cdf(x) + b.weights[1] * c[1].cdf(x);
                assert!((b.cdf(x) - direct).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn validation_rejects_unordered_means_and_bad_weights() {
        let c = vec![GammaComponent::new(8.0, 8.0).unwrap(), GammaComponent::new(2.0, 4.0).unwrap()];
        assert!(BulkParams::gamma(vec![0.5, 0.5], c.clone()).is_err());
        let c2 = vec![c[1], c[0]];
        assert!(BulkParams::gamma(vec![0.6, 0.5], c2).is_err());
    }
}
