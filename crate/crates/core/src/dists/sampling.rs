//! Random variate generation for proposals and simulation.

use rand::Rng;
use rand_distr::{Exp1, StandardNormal};

use super::special::{gamma_p, gamma_q, log_norm_interval, norm_cdf, norm_quantile, norm_sf, norm_sf_inv};
use crate::error::{domain, Result};

// Below this acceptance probability, plain rejection is replaced by inversion.
const MIN_REJECTION_ACCEPTANCE: f64 = 0.01;

/// Draws from `N(mean, var)` truncated to the open interval `(lower, upper)`.
pub fn sample_trunc_normal<R: Rng + ?Sized>(mean: f64, var: f64, lower: f64, upper: f64, rng: &mut R) -> Result<f64> {
    if !(var > 0.0) || !var.is_finite() || mean.is_nan() {
        return domain(format!("truncated normal needs finite mean and var > 0 (mean={mean}, var={var})"));
    }
    if !(lower < upper) {
        return domain(format!("truncated normal needs lower < upper ({lower} >= {upper})"));
    }
    let sd = var.sqrt();
    let a = (lower - mean) / sd;
    let b = (upper - mean) / sd;
    for _ in 0..1000 {
        let x = mean + sd * std_trunc_normal(a, b, rng);
        if x > lower && x < upper {
            return Ok(x);
        }
    }
    // Interval narrower than the float grid around it.
    Ok(0.5 * (lower + upper))
}

fn std_trunc_normal<R: Rng + ?Sized>(a: f64, b: f64, rng: &mut R) -> f64 {
    if a == f64::NEG_INFINITY && b == f64::INFINITY {
        return rng.sample(StandardNormal);
    }
    let mass = log_norm_interval(a, b).exp();
    if mass >= MIN_REJECTION_ACCEPTANCE {
        loop {
            let z: f64 = rng.sample(StandardNormal);
            if z > a && z < b {
                return z;
            }
        }
    }
    if b <= 0.0 {
        return -std_trunc_normal(-b, -a, rng);
    }
    let u: f64 = rng.random();
    if a >= 0.0 {
        let (qa, qb) = (norm_sf(a), norm_sf(b));
        if qa > 0.0 && qa > qb {
            return norm_sf_inv(qb + u * (qa - qb)).clamp(a, b);
        }
        return far_tail(a, b, rng);
    }
    let (pa, pb) = (norm_cdf(a), norm_cdf(b));
    norm_quantile(pa + u * (pb - pa)).clamp(a, b)
}

// Robert (1995) samplers for intervals deep in the upper tail.
fn far_tail<R: Rng + ?Sized>(a: f64, b: f64, rng: &mut R) -> f64 {
    if b.is_finite() && b - a < 1.0 / a {
        loop {
            let z = a + (b - a) * rng.random::<f64>();
            let accept = (-0.5 * (z * z - a * a)).exp();
            if rng.random::<f64>() < accept {
                return z;
            }
        }
    }
    let alpha = 0.5 * (a + (a * a + 4.0).sqrt());
    loop {
        let e: f64 = rng.sample(Exp1);
        let z = a + e / alpha;
        if z >= b {
            continue;
        }
        let accept = (-0.5 * (z - alpha) * (z - alpha)).exp();
        if rng.random::<f64>() < accept {
            return z;
        }
    }
}

/// Log of a standard Gamma(shape, 1) draw. Stays finite for tiny shapes
/// through `G(a) = G(a + 1) * U^(1/a)`.
pub(crate) fn ln_std_gamma<R: Rng + ?Sized>(shape: f64, rng: &mut R) -> f64 {
    if shape >= 1.0 {
        marsaglia_tsang(shape, rng).ln()
    } else {
        let u: f64 = rng.random::<f64>();
        marsaglia_tsang(shape + 1.0, rng).ln() + u.ln() / shape
    }
}

fn marsaglia_tsang<R: Rng + ?Sized>(shape: f64, rng: &mut R) -> f64 {
    let d = shape - 1.0 / 3.0;
    let c = 1.0 / (9.0 * d).sqrt();
    loop {
        let z: f64 = rng.sample(StandardNormal);
        let v = 1.0 + c * z;
        if v <= 0.0 {
            continue;
        }
        let v = v * v * v;
        let u: f64 = rng.random();
        if u < 1.0 - 0.0331 * z.powi(4) || u.ln() < 0.5 * z * z + d * (1.0 - v + v.ln()) {
            return d * v;
        }
    }
}

/// Gamma draw with the given mean and shape (variance = mean² / shape).
pub fn sample_gamma_meanshape<R: Rng + ?Sized>(mean: f64, shape: f64, rng: &mut R) -> Result<f64> {
    if !(mean > 0.0 && shape > 0.0) || !mean.is_finite() || !shape.is_finite() {
        return domain(format!("Gamma sampler needs positive mean and shape (mean={mean}, shape={shape})"));
    }
    Ok((ln_std_gamma(shape, rng) + (mean / shape).ln()).exp())
}

/// Dirichlet draw, normalized in log space so tiny concentrations do not
/// collapse the whole vector. Entries may still underflow to 0.
pub fn sample_dirichlet<R: Rng + ?Sized>(alpha: &[f64], rng: &mut R) -> Result<Vec<f64>> {
    if alpha.is_empty() || alpha.iter().any(|a| !(*a > 0.0) || !a.is_finite()) {
        return domain("Dirichlet concentrations must be positive and finite");
    }
    let logs: Vec<f64> = alpha.iter().map(|&a| ln_std_gamma(a, rng)).collect();
    let m = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut p: Vec<f64> = logs.iter().map(|l| (l - m).exp()).collect();
    let s: f64 = p.iter().sum();
    for v in &mut p {
        *v /= s;
    }
    Ok(p)
}

/// Mass of Gamma(mean, shape) on `(lo, hi)`, in log scale.
pub fn log_gamma_interval_meanshape(mean: f64, shape: f64, lo: f64, hi: f64) -> f64 {
    let rate = shape / mean;
    let (xl, xh) = (rate * lo.max(0.0), rate * hi);
    let p_lo = gamma_p(shape, xl);
    let mass = if p_lo > 0.5 {
        gamma_q(shape, xl) - gamma_q(shape, xh)
    } else {
        gamma_p(shape, xh) - p_lo
    };
    if mass > 0.0 {
        mass.ln()
    } else {
        f64::NEG_INFINITY
    }
}

/// Gamma(mean, shape) draw restricted to `(lo, hi)`: rejection first, then
/// bisection on the cdf when the interval carries little mass.
pub fn sample_trunc_gamma_meanshape<R: Rng + ?Sized>(
    mean: f64,
    shape: f64,
    lo: f64,
    hi: f64,
    rng: &mut R,
) -> Result<f64> {
    if !(lo < hi) {
        return domain(format!("truncated Gamma needs lo < hi ({lo} >= {hi})"));
    }
    for _ in 0..64 {
        let x = sample_gamma_meanshape(mean, shape, rng)?;
        if x > lo && x < hi {
            return Ok(x);
        }
    }
    let rate = shape / mean;
    let cdf = |x: f64| gamma_p(shape, rate * x);
    let (c_lo, c_hi) = (cdf(lo.max(0.0)), cdf(hi));
    if !(c_hi > c_lo) {
        return domain("truncated Gamma interval has no numerical mass");
    }
    let target = c_lo + rng.random::<f64>() * (c_hi - c_lo);
    let (mut a, mut b) = (lo.max(0.0), if hi.is_finite() { hi } else { mean + 50.0 * mean / shape.sqrt() });
    while b.is_finite() && cdf(b) < target {
        b *= 2.0;
    }
    for _ in 0..200 {
        let m = 0.5 * (a + b);
        if cdf(m) < target {
            a = m;
        } else {
            b = m;
        }
    }
    let x = 0.5 * (a + b);
    if x > lo && x < hi {
        Ok(x)
    } else {
        Ok(0.5 * (lo.max(0.0) + if hi.is_finite() { hi } else { 2.0 * lo.max(mean) }))
    }
}
