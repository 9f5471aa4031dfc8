mod common;

use cevmm::dists::{gpd_cdf, gpd_quantile, GpdParams};
use cevmm::model::{model_logpdf, pointwise_loglik, Changepoints, Dataset, ModelState};
use cevmm::risk::{backtest, expected_shortfall, return_level, var_level};
use common::*;

#[test]
fn log_posterior_matches_brute_force() {
    let err = oracle_max_error(100, 11);
    assert!(err < 1e-8, "max abs error {err}");
}

#[test]
fn changepoint_kernel_targets_exact_posterior() {
    let exact = tau_toy_exact(&tau_toy());
    // The toy must be informative but not degenerate.
    let top = exact.iter().copied().fold(0.0, f64::max);
    assert!(top < 0.9 && top > 0.1, "{exact:?}");
    let tv = tau_toy_tv(200_000, 9.0, 5);
    assert!(tv < 0.02, "TV {tv}");
}

#[test]
fn pointwise_density_agrees_with_reference() {
    let x = oracle_series(300, 2);
    let data = Dataset::new(x.clone()).unwrap();
    let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(8);
    for (kind, k, l) in [(cevmm::dists::BulkKind::Gamma, 3, 2), (cevmm::dists::BulkKind::Normal, 2, 3)] {
        let st = random_state(&mut rng, &x, kind, k, l);
        let pw = pointwise_loglik(&st, &data);
        for (i, &v) in pw.iter().enumerate() {
            let t = i + 1;
            let j = st.cps.regime_of(t).unwrap();
            assert!((v - model_logpdf(t, x[i], &st)).abs() < 1e-12);
            assert!((v - regime_ln_pdf(&st, j, x[i])).abs() < 1e-9, "t={t}");
        }
    }
}

fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    let n = n + n % 2;
    let h = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for i in 1..n {
        s += f(a + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    s * h / 3.0
}

fn total_mass(st: &ModelState, lower: f64) -> f64 {
    let t = st.tails[0];
    let dens = |x: f64| model_logpdf(1, x, st).exp();
    let bulk = simpson(dens, lower, t.u, 200_000);
    // x = u + sigma w / (1 - w) maps (0, 1) onto the tail.
    let tail = simpson(
        |w: f64| {
            if w >= 1.0 {
                return 0.0;
            }
            let x = t.u + t.sigma * w / (1.0 - w);
            dens(x) * t.sigma / (1.0 - w).powi(2)
        },
        0.0,
        1.0,
        200_000,
    );
    bulk + tail
}

#[test]
fn model_density_integrates_to_one() {
    for xi in [-0.4, 0.0, 0.3] {
        let m = total_mass(&tail_state(1.5, xi), 1e-12);
        assert!((m - 1.0).abs() < 1e-6, "xi={xi}: {m}");
    }
    let m = total_mass(&normal_tail_state(1.0, 0.2), -40.0);
    assert!((m - 1.0).abs() < 1e-6, "normal bulk: {m}");
}

#[test]
fn gpd_round_trip() {
    for xi in [-0.45, -0.1, 0.0, 1e-9, 0.2, 0.9] {
        let p = GpdParams::new(1.5, 0.7, xi).unwrap();
        for q in [1e-6, 0.01, 0.3, 0.5, 0.9, 0.999, 1.0 - 1e-9] {
            let x = gpd_quantile(q, &p).unwrap();
            assert!((gpd_cdf(x, &p) - q).abs() < 1e-10, "xi={xi} q={q}");
            let r = gpd_cdf_ref(x, &p);
            assert!((gpd_cdf(x, &p) - r).abs() < 1e-10, "xi={xi} q={q} x={x}: {} vs {r}", gpd_cdf(x, &p));
        }
    }
}

#[test]
fn return_level_inverts_model_cdf() {
    for (sigma, xi) in [(0.5, -0.4), (1.0, 0.0), (1.5, 0.4)] {
        let st = tail_state(sigma, xi);
        for t in [10.0, 50.0, 200.0, 1000.0] {
            let r = return_level(&st, 0, t).unwrap();
            let want = invert_regime_cdf(&st, 0, 1.0 - 1.0 / t);
            assert!((r - want).abs() < 1e-6, "xi={xi} t={t}: {r} vs {want}");
        }
    }
}

#[test]
fn expected_shortfall_matches_monte_carlo() {
    for (sigma, xi, p) in [(0.5, -0.3, 0.05), (1.0, 0.0, 0.05), (1.5, 0.25, 0.02)] {
        let st = tail_state(sigma, xi);
        let var = var_level(&st, 0, p).unwrap();
        let es = expected_shortfall(&st, 0, p).unwrap();
        let mc = mc_expected_shortfall(&st.tails[0], var, 1_000_000, 17);
        assert!(((es - mc) / es).abs() < 0.01, "xi={xi}: {es} vs {mc}");
    }
}

#[test]
fn shape_zero_is_continuous() {
    let st0 = tail_state(1.2, 0.0);
    // Either side of the switch to the exponential branch.
    for eps in [1e-9, -1e-9, 0.99e-8, 1.01e-8, -1.01e-8] {
        let st = tail_state(1.2, eps);
        for t in [10.0, 100.0, 1000.0] {
            let a = return_level(&st, 0, t).unwrap();
            let b = return_level(&st0, 0, t).unwrap();
            assert!((a - b).abs() < 1e-6, "eps={eps} t={t}");
        }
        for x in [8.5, 10.0, 20.0] {
            assert!((model_logpdf(1, x, &st) - model_logpdf(1, x, &st0)).abs() < 1e-6);
        }
        let es = expected_shortfall(&st, 0, 0.01).unwrap();
        assert!((es - expected_shortfall(&st0, 0, 0.01).unwrap()).abs() < 1e-6);
    }
}

#[test]
fn backtest_expected_counts() {
    let cps = Changepoints::from_inner(&[855], 1000).unwrap();
    let rows = backtest(&vec![0.0; 1000], &vec![1.0; 1000], &cps, 0.05).unwrap();
    assert_eq!(rows[0].expected, 42);
    assert_eq!(rows[0].observed, 855);
    assert_eq!(rows[1].expected, 7);
}

#[test]
fn calibrated_var_violations_within_binomial_band() {
    let (misses, checks) = backtest_band_misses(0.05);
    assert_eq!(checks, 300);
    // About 1% of checks fall outside a 99% band by chance.
    assert!(misses <= 9, "{misses} of {checks} outside the band");
}
