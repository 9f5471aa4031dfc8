//! Independent reference computations shared by the integration tests and
//! the acceptance suite. Densities come from `statrs`; nothing here calls the
//! crate's own likelihood, prior or special functions.

#![allow(dead_code)]

use cevmm::dists::{BulkKind, BulkParams, GammaComponent, GpdParams, NormalComponent};
use cevmm::model::{Changepoints, Dataset, Hyperparams, ModelState};
use cevmm::sampler::Kernel;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{Continuous, ContinuousCDF, Gamma, InverseGamma, Normal};
use statrs::function::gamma::ln_gamma;

pub fn gamma_dist(mu: f64, eta: f64) -> Gamma {
    Gamma::new(eta, eta / mu).unwrap()
}

pub fn normal_dist(mu: f64, var: f64) -> Normal {
    Normal::new(mu, var.sqrt()).unwrap()
}

pub fn bulk_pdf(bulk: &BulkParams, x: f64) -> f64 {
    (0..bulk.len())
        .map(|z| {
            let d = match bulk.kind() {
                BulkKind::Gamma => gamma_dist(bulk.mean_of(z), bulk.spread_of(z)).pdf(x),
                BulkKind::Normal => normal_dist(bulk.mean_of(z), bulk.spread_of(z)).pdf(x),
            };
            bulk.weights[z] * d
        })
        .sum()
}

pub fn bulk_cdf(bulk: &BulkParams, x: f64) -> f64 {
    (0..bulk.len())
        .map(|z| {
            let c = match bulk.kind() {
                BulkKind::Gamma => gamma_dist(bulk.mean_of(z), bulk.spread_of(z)).cdf(x),
                BulkKind::Normal => normal_dist(bulk.mean_of(z), bulk.spread_of(z)).cdf(x),
            };
            bulk.weights[z] * c
        })
        .sum()
}

/// Shapes this close to zero are treated as exactly zero.
pub const SHAPE_ZERO: f64 = 1e-8;

/// GPD log-density written out from its closed form.
pub fn gpd_ln_pdf(x: f64, t: &GpdParams) -> f64 {
    let z = (x - t.u) / t.sigma;
    if z < 0.0 {
        return f64::NEG_INFINITY;
    }
    if t.xi.abs() < SHAPE_ZERO {
        return -t.sigma.ln() - z;
    }
    let b = t.xi * z;
    if b <= -1.0 {
        return f64::NEG_INFINITY;
    }
    -t.sigma.ln() - (1.0 + 1.0 / t.xi) * b.ln_1p()
}

pub fn gpd_cdf_ref(x: f64, t: &GpdParams) -> f64 {
    let z = ((x - t.u) / t.sigma).max(0.0);
    if t.xi.abs() < SHAPE_ZERO {
        return 1.0 - (-z).exp();
    }
    let b = t.xi * z;
    if b <= -1.0 {
        return 1.0;
    }
    -(-b.ln_1p() / t.xi).exp_m1()
}

/// Distribution function of regime `j`.
pub fn regime_cdf(state: &ModelState, j: usize, x: f64) -> f64 {
    let t = &state.tails[j];
    let h = bulk_cdf(&state.bulk, t.u);
    if x <= t.u {
        bulk_cdf(&state.bulk, x)
    } else {
        h + (1.0 - h) * gpd_cdf_ref(x, t)
    }
}

pub fn regime_ln_pdf(state: &ModelState, j: usize, x: f64) -> f64 {
    let t = &state.tails[j];
    if x <= t.u {
        bulk_pdf(&state.bulk, x).ln()
    } else {
        (1.0 - bulk_cdf(&state.bulk, t.u)).ln() + gpd_ln_pdf(x, t)
    }
}

/// Log-posterior by direct summation: each observation looks up its regime
/// by scanning the changepoints.
pub fn brute_log_posterior(state: &ModelState, x: &[f64], h: &Hyperparams) -> f64 {
    let tau = state.cps.tau();
    let mut ll = 0.0;
    for (i, &xi) in x.iter().enumerate() {
        let t = i + 1;
        let j = (1..tau.len()).find(|&j| tau[j - 1] < t && t <= tau[j]).unwrap() - 1;
        ll += regime_ln_pdf(state, j, xi);
    }

    let mut lp = 0.0;
    let thr = normal_dist(h.mu_u, h.sigma2_u);
    for t in &state.tails {
        if t.xi <= -0.5 || t.sigma <= 0.0 {
            return f64::NEG_INFINITY;
        }
        lp += -t.sigma.ln() - (1.0 + t.xi).ln() - 0.5 * (1.0 + 2.0 * t.xi).ln();
        lp += thr.ln_pdf(t.u);
    }
    for j in 1..tau.len() - 1 {
        lp -= ((tau[j + 1] - tau[j - 1]) as f64).ln();
    }
    let l = state.bulk.len();
    lp += ln_gamma(l as f64);
    let spread_prior = Gamma::new(h.gamma_shape_c, h.gamma_shape_d).unwrap();
    for z in 0..l {
        let (m, s) = (state.bulk.mean_of(z), state.bulk.spread_of(z));
        lp += spread_prior.ln_pdf(s);
        lp += match state.bulk.kind() {
            BulkKind::Gamma => InverseGamma::new(h.invgamma_a, h.invgamma_b).unwrap().ln_pdf(m),
            BulkKind::Normal => normal_dist((z + 1) as f64 / h.series_max, h.alpha_norm.powi(2) / s).ln_pdf(m),
        };
    }
    lp + ll
}

pub fn hyper_for(x: &[f64]) -> Hyperparams {
    let mean = x.iter().sum::<f64>() / x.len() as f64;
    Hyperparams {
        mu_u: 8.0,
        sigma2_u: 4.0,
        gamma_shape_c: 0.01,
        gamma_shape_d: 0.01,
        invgamma_a: 2.1,
        invgamma_b: 1.1 * mean,
        alpha_norm: 100.0,
        series_max: x.iter().copied().fold(f64::NEG_INFINITY, f64::max),
    }
}

/// A random state whose likelihood is finite on `x`: bounded tails get a
/// scale large enough to cover their regime maximum, and every threshold
/// leaves the bulk some mass above it.
pub fn random_state(rng: &mut ChaCha8Rng, x: &[f64], kind: BulkKind, k: usize, l: usize) -> ModelState {
    loop {
        let st = random_state_once(rng, x, kind, k, l);
        if st.tails.iter().all(|t| 1.0 - bulk_cdf(&st.bulk, t.u) > 1e-9) {
            return st;
        }
    }
}

fn random_state_once(rng: &mut ChaCha8Rng, x: &[f64], kind: BulkKind, k: usize, l: usize) -> ModelState {
    let n = x.len();
    let mut inner: Vec<usize> = Vec::new();
    while inner.len() < k - 1 {
        let t = rng.random_range(1..n);
        if !inner.contains(&t) {
            inner.push(t);
        }
    }
    inner.sort_unstable();
    let cps = Changepoints::from_inner(&inner, n).unwrap();
    let mut w: Vec<f64> = (0..l).map(|_| rng.random_range(0.2..1.0)).collect();
    let tot: f64 = w.iter().sum();
    w.iter_mut().for_each(|v| *v /= tot);
    let mut means: Vec<f64> = (0..l).map(|_| rng.random_range(0.5..10.0)).collect();
    means.sort_by(f64::total_cmp);
    means.dedup();
    while means.len() < l {
        means.push(means.last().unwrap() + 1.0);
    }
    let spreads: Vec<f64> = (0..l).map(|_| rng.random_range(0.5..8.0)).collect();
    let bulk = BulkParams::from_parts(kind, w, &means, &spreads).unwrap();
    let tails = (0..k)
        .map(|j| {
            let r = cps.range(j);
            let m = x[r].iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let u = rng.random_range(5.0..10.0);
            let xi: f64 = rng.random_range(-0.45..0.8);
            let mut sigma: f64 = rng.random_range(0.3..3.0);
            if xi < 0.0 && m > u {
                sigma = sigma.max(-xi * (m - u) * 1.2);
            }
            GpdParams::new(u, sigma, xi).unwrap()
        })
        .collect();
    ModelState::new(bulk, tails, cps).unwrap()
}

/// Series of the reference bulk without tails, for oracle checks.
pub fn oracle_series(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a = gamma_dist(2.0, 4.0);
    let b = gamma_dist(8.0, 8.0);
    (0..n)
        .map(|_| {
            let q: f64 = rng.random_range(1e-9..1.0 - 1e-9);
            if rng.random::<f64>() < 2.0 / 3.0 { a.inverse_cdf(q) } else { b.inverse_cdf(q) }
        })
        .collect()
}

/// Largest absolute difference between the crate's log-posterior and the
/// brute-force evaluator over `count` random states.
pub fn oracle_max_error(count: usize, seed: u64) -> f64 {
    let x = oracle_series(400, seed);
    let data = Dataset::new(x.clone()).unwrap();
    let h = hyper_for(&x);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xabcdef);
    let mut worst: f64 = 0.0;
    for i in 0..count {
        let kind = if i % 2 == 0 { BulkKind::Gamma } else { BulkKind::Normal };
        let k = 1 + i % 3;
        let l = 1 + (i / 3) % 3;
        let st = random_state(&mut rng, &x, kind, k, l);
        let got = cevmm::model::log_posterior(&st, &data, &h);
        let want = brute_log_posterior(&st, &x, &h);
        assert!(want.is_finite(), "oracle state {i} not finite");
        worst = worst.max((got - want).abs());
    }
    worst
}

/// Toy with `n = 20`, two regimes and one bulk component where only the
/// changepoint moves.
pub struct TauToy {
    pub data: Dataset,
    pub state: ModelState,
    pub hyper: Hyperparams,
}

pub fn tau_toy() -> TauToy {
    let x = vec![
        1.2, 2.9, 0.8, 4.1, 1.7, 3.6, 2.2, 0.9, 3.3, 1.5, 4.4, 6.8, 2.5, 9.7, 3.1, 5.9, 1.9, 12.4, 4.8, 7.3,
    ];
    let bulk = BulkParams::gamma(vec![1.0], vec![GammaComponent::new(2.5, 3.0).unwrap()]).unwrap();
    let tails = vec![GpdParams::new(3.5, 0.6, 0.0).unwrap(), GpdParams::new(3.5, 2.5, 0.3).unwrap()];
    let state = ModelState::new(bulk, tails, Changepoints::from_inner(&[10], 20).unwrap()).unwrap();
    let hyper = hyper_for(&x);
    TauToy { data: Dataset::new(x).unwrap(), state, hyper }
}

/// Exact posterior of the changepoint, indexed by `tau_1 - 1`.
pub fn tau_toy_exact(toy: &TauToy) -> Vec<f64> {
    let n = toy.data.n();
    let lps: Vec<f64> = (1..n)
        .map(|t| {
            let mut s = toy.state.clone();
            s.cps = Changepoints::from_inner(&[t], n).unwrap();
            brute_log_posterior(&s, toy.data.x(), &toy.hyper)
        })
        .collect();
    let m = lps.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = lps.iter().map(|v| (v - m).exp()).collect();
    let z: f64 = w.iter().sum();
    w.iter().map(|v| v / z).collect()
}

/// Total-variation distance between the sampled and exact changepoint laws.
pub fn tau_toy_tv(iterations: usize, var: f64, seed: u64) -> f64 {
    let toy = tau_toy();
    let exact = tau_toy_exact(&toy);
    let mut kernel = Kernel::new(toy.state.clone(), &toy.data, &toy.hyper).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut counts = vec![0usize; exact.len()];
    for _ in 0..iterations {
        kernel.update_tau(1, var, &mut rng).unwrap();
        counts[kernel.state().cps.inner()[0] - 1] += 1;
    }
    exact.iter().zip(&counts).map(|(p, &c)| (p - c as f64 / iterations as f64).abs()).sum::<f64>() / 2.0
}

/// One-regime state with the reference bulk and the given tail.
pub fn tail_state(sigma: f64, xi: f64) -> ModelState {
    let bulk = BulkParams::gamma(
        vec![2.0 / 3.0, 1.0 / 3.0],
        vec![GammaComponent::new(2.0, 4.0).unwrap(), GammaComponent::new(8.0, 8.0).unwrap()],
    )
    .unwrap();
    ModelState::new(bulk, vec![GpdParams::new(8.0, sigma, xi).unwrap()], Changepoints::new(vec![0, 100], 100).unwrap())
        .unwrap()
}

pub fn normal_tail_state(sigma: f64, xi: f64) -> ModelState {
    let bulk = BulkParams::normal(
        vec![0.5, 0.5],
        vec![NormalComponent::new(-0.5, 1.0).unwrap(), NormalComponent::new(1.0, 2.0).unwrap()],
    )
    .unwrap();
    ModelState::new(bulk, vec![GpdParams::new(2.0, sigma, xi).unwrap()], Changepoints::new(vec![0, 100], 100).unwrap())
        .unwrap()
}

/// Solves `regime_cdf(x) = q` by bisection.
pub fn invert_regime_cdf(state: &ModelState, j: usize, q: f64) -> f64 {
    let (mut lo, mut hi) = (-1e3, 1.0);
    while regime_cdf(state, j, hi) < q {
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if regime_cdf(state, j, mid) < q {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Monte Carlo expected shortfall beyond `var` from `draws` GPD exceedances
/// generated by inversion.
pub fn mc_expected_shortfall(t: &GpdParams, var: f64, draws: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut sum, mut count) = (0.0, 0usize);
    for _ in 0..draws {
        let v: f64 = rng.random();
        let x = if t.xi == 0.0 { t.u - t.sigma * (1.0 - v).ln() } else { t.u + t.sigma / t.xi * ((1.0 - v).powf(-t.xi) - 1.0) };
        if x > var {
            sum += x;
            count += 1;
        }
    }
    sum / count as f64
}

/// Fraction of 100 seeds whose per-regime violation counts of a calibrated
/// VaR fall outside the two-sided binomial 99% band.
pub fn backtest_band_misses(p: f64) -> (usize, usize) {
    use statrs::distribution::{Binomial, DiscreteCDF};
    let lengths = [855usize, 1000, 645];
    let n: usize = lengths.iter().sum();
    let mut inner = Vec::new();
    let mut acc = 0;
    for l in &lengths[..2] {
        acc += l;
        inner.push(acc);
    }
    let cps = Changepoints::from_inner(&inner, n).unwrap();
    let dists = [normal_dist(0.0, 1.0), normal_dist(1.0, 4.0), normal_dist(-2.0, 0.25)];
    let per_regime: Vec<f64> = dists.iter().map(|d| d.inverse_cdf(1.0 - p)).collect();
    let var = cevmm::risk::regime_series(&per_regime, &cps);
    let (mut misses, mut checks) = (0, 0);
    for seed in 0..100u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut x = Vec::with_capacity(n);
        for (j, len) in lengths.iter().enumerate() {
            for _ in 0..*len {
                x.push(dists[j].inverse_cdf(rng.random_range(1e-12..1.0 - 1e-12)));
            }
        }
        for row in cevmm::risk::backtest(&var, &x, &cps, p).unwrap() {
            let b = Binomial::new(p, row.length as u64).unwrap();
            let lo = b.inverse_cdf(0.005);
            let hi = b.inverse_cdf(0.995);
            checks += 1;
            if (row.observed as u64) < lo || (row.observed as u64) > hi {
                misses += 1;
            }
        }
    }
    (misses, checks)
}
