use super::Chain;
use crate::error::{domain, Result};
use crate::model::ModelState;

/// Chains count as converged when every monitored split-R̂ is below this.
pub const RHAT_THRESHOLD: f64 = 1.1;

/// Split-R̂ of equal-length draw sequences. Each sequence is halved (the
/// middle draw is dropped for odd lengths). Returns `+∞` when the pooled
/// within-half variance is zero.
pub fn split_rhat(draws: &[Vec<f64>]) -> Result<f64> {
    if draws.len() < 2 {
        return domain("R-hat needs at least two chains");
    }
    let len = draws[0].len();
    if draws.iter().any(|d| d.len() != len) {
        return domain("R-hat needs chains of equal length");
    }
    let half = len / 2;
    if half < 2 {
        return domain("R-hat needs at least four draws per chain");
    }
    let mut parts: Vec<&[f64]> = Vec::with_capacity(2 * draws.len());
    for d in draws {
        parts.push(&d[..half]);
        parts.push(&d[len - half..]);
    }
    let m = parts.len() as f64;
    let n = half as f64;
    let means: Vec<f64> = parts.iter().map(|p| p.iter().sum::<f64>() / n).collect();
    let grand = means.iter().sum::<f64>() / m;
    let b = n / (m - 1.0) * means.iter().map(|x| (x - grand).powi(2)).sum::<f64>();
    let w = parts
        .iter()
        .zip(&means)
        .map(|(p, mu)| p.iter().map(|x| (x - mu).powi(2)).sum::<f64>() / (n - 1.0))
        .sum::<f64>()
        / m;
    if !(w > 0.0) {
        return Ok(f64::INFINITY);
    }
    let var_plus = (n - 1.0) / n * w + b / n;
    Ok((var_plus / w).sqrt())
}

/// Split-R̂ of a scalar functional of the retained states.
pub fn rhat(chains: &[Chain], f: impl Fn(&ModelState) -> f64) -> Result<f64> {
    let draws: Vec<Vec<f64>> = chains.iter().map(|c| c.samples.iter().map(&f).collect()).collect();
    split_rhat(&draws)
}

/// Split-R̂ of every tail parameter, named `xi_j`, `sigma_j`, `u_j`.
pub fn tail_rhats(chains: &[Chain]) -> Result<Vec<(String, f64)>> {
    let k = chains.first().map(|c| c.config.k).unwrap_or(0);
    let mut out = Vec::with_capacity(3 * k);
    for j in 0..k {
        out.push((format!("xi_{}", j + 1), rhat(chains, |s| s.tails[j].xi)?));
        out.push((format!("sigma_{}", j + 1), rhat(chains, |s| s.tails[j].sigma)?));
        out.push((format!("u_{}", j + 1), rhat(chains, |s| s.tails[j].u)?));
    }
    Ok(out)
}

/// Minimum posterior-mean regime length below which a regime is empty.
pub fn empty_margin(n: usize) -> f64 {
    (50.0f64).max(n as f64 / 100.0)
}

/// Posterior means of the full changepoint vector `(0, ..., n)`.
pub fn posterior_mean_tau(samples: &[ModelState]) -> Vec<f64> {
    let Some(first) = samples.first() else {
        return Vec::new();
    };
    let mut acc = vec![0.0; first.cps.tau().len()];
    for s in samples {
        for (a, &t) in acc.iter_mut().zip(s.cps.tau()) {
            *a += t as f64;
        }
    }
    acc.iter().map(|a| a / samples.len() as f64).collect()
}

/// Flags regime `j` when the posterior means of its bounding changepoints
/// are closer than [`empty_margin`], including the fixed ends `0` and `n`.
pub fn detect_empty_regimes(chain: &Chain, n: usize) -> Vec<bool> {
    let means = posterior_mean_tau(&chain.samples);
    let margin = empty_margin(n);
    means.windows(2).map(|w| w[1] - w[0] < margin).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn identical_noise_chains_give_unit_rhat() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a: Vec<f64> = (0..4000).map(|_| rng.random::<f64>()).collect();
        let r = split_rhat(&[a.clone(), a]).unwrap();
        assert!((r - 1.0).abs() < 0.05, "{r}");
    }

    #[test]
    fn separated_chains_give_large_rhat() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let a: Vec<f64> = (0..1000).map(|_| rng.random::<f64>()).collect();
        let b: Vec<f64> = a.iter().map(|x| x + 5.0).collect();
        assert!(split_rhat(&[a, b]).unwrap() > 1.1);
    }

    #[test]
    fn constant_chains_flagged_infinite() {
        assert_eq!(split_rhat(&[vec![1.0; 10], vec![1.0; 10]]).unwrap(), f64::INFINITY);
        assert!(split_rhat(&[vec![1.0; 10]]).is_err());
        assert!(split_rhat(&[vec![1.0; 10], vec![1.0; 9]]).is_err());
    }

    #[test]
    fn margin_rule() {
        assert_eq!(empty_margin(1000), 50.0);
        assert_eq!(empty_margin(20_000), 200.0);
    }
}
