//! Starting states and starting proposal scales.

use rand::Rng;

use super::blocks::ProposalScales;
use crate::dists::{BulkKind, BulkParams, GpdParams};
use crate::error::{domain, Result};
use crate::model::{empirical_quantile, Changepoints, Dataset, ModelState};

fn mean_var(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    let v = if xs.len() > 1 { xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0) } else { 0.0 };
    (m, v)
}

/// Deterministic starting state: thresholds at the 90th percentile, `xi = 0.1`,
/// scales from the spread of the exceedances, evenly spaced changepoints,
/// component means at evenly spaced data quantiles with moment-matched
/// spreads, and uniform weights.
pub fn default_init(data: &Dataset, k: usize, l: usize, kind: BulkKind) -> Result<ModelState> {
    let n = data.n();
    if k == 0 || l == 0 {
        return domain("k and l must be at least 1");
    }
    if n < 2 * k {
        return domain(format!("{n} observations cannot support {k} regimes (need at least {})", 2 * k));
    }
    data.check_kind(kind)?;
    let sorted = data.sorted();
    let (_, all_var) = mean_var(data.x());
    if !(all_var > 0.0) {
        return domain("data are constant");
    }
    let q90 = empirical_quantile(&sorted, 0.9);
    let cps = Changepoints::evenly_spaced(k, n)?;

    let mut tails = Vec::with_capacity(k);
    for j in 0..k {
        let seg = &data.x()[cps.range(j)];
        let mut seg_sorted = seg.to_vec();
        seg_sorted.sort_by(|a, b| a.total_cmp(b));
        let mut u = q90;
        if u <= seg_sorted[0] || u >= seg_sorted[seg_sorted.len() - 1] {
            u = empirical_quantile(&seg_sorted, 0.9);
        }
        if u <= seg_sorted[0] {
            u = 0.5 * (seg_sorted[0] + seg_sorted[seg_sorted.len() - 1]);
        }
        let exc: Vec<f64> = seg.iter().copied().filter(|&x| x > u).collect();
        let sd = if exc.len() >= 2 { mean_var(&exc).1.sqrt() } else { 0.0 };
        let sigma = if sd > 0.0 && sd.is_finite() { sd } else { 1.0 };
        tails.push(GpdParams::new(u, sigma, 0.1)?);
    }

    let scale = all_var.sqrt();
    let mut means: Vec<f64> = (0..l).map(|z| empirical_quantile(&sorted, (z as f64 + 0.5) / l as f64)).collect();
    // Means must be positive for the Gamma walk and strictly increasing.
    let floor = if kind == BulkKind::Gamma { sorted[0].max(f64::MIN_POSITIVE) } else { 1e-3 * scale };
    let step = 1e-3 * scale;
    for z in 0..l {
        let min_allowed = if z == 0 { floor } else { means[z - 1] + step };
        if !(means[z] >= min_allowed) {
            means[z] = min_allowed;
        }
    }
    let mut spreads = Vec::with_capacity(l);
    for (z, &m) in means.iter().enumerate() {
        let group = &sorted[z * n / l..((z + 1) * n / l).max(z * n / l + 1)];
        let (_, gv) = mean_var(group);
        let v = if gv > 0.0 { gv } else { all_var / l as f64 };
        spreads.push(match kind {
            BulkKind::Gamma => (m * m / v).clamp(0.1, 1e4),
            BulkKind::Normal => v,
        });
    }
    let weights = vec![1.0 / l as f64; l];
    let bulk = BulkParams::from_parts(kind, weights, &means, &spreads)?;
    let state = ModelState::new(bulk, tails, cps)?;
    state.validate(data)?;
    Ok(state)
}

/// Randomly perturbed version of [`default_init`] for additional chains:
/// shapes, scales and inner changepoints are jittered. Falls back to the
/// unperturbed state when the jitter breaks an invariant.
pub fn dispersed_init<R: Rng + ?Sized>(
    data: &Dataset,
    k: usize,
    l: usize,
    kind: BulkKind,
    rng: &mut R,
) -> Result<ModelState> {
    let base = default_init(data, k, l, kind)?;
    let mut s = base.clone();
    for t in &mut s.tails {
        t.xi = 0.1 + rng.random_range(-0.1..0.1);
        t.sigma *= rng.random_range(0.8..1.25);
    }
    let n = data.n();
    let width = (n / (10 * k)).max(1) as i64;
    let inner: Vec<usize> = base
        .cps
        .inner()
        .iter()
        .map(|&t| (t as i64 + rng.random_range(-width..=width)).clamp(1, n as i64 - 1) as usize)
        .collect();
    match Changepoints::from_inner(&inner, n) {
        Ok(c) => s.cps = c,
        Err(_) => return Ok(base),
    }
    if s.validate(data).is_err() {
        return Ok(base);
    }
    Ok(s)
}

/// Starting proposal variances scaled to the state and data.
pub fn initial_scales(state: &ModelState, data: &Dataset) -> ProposalScales {
    let (_, var) = mean_var(data.x());
    let sd = var.sqrt();
    let n = data.n() as f64;
    let k = state.k();
    let bulk = &state.bulk;
    ProposalScales {
        xi: vec![0.01; k],
        sigma: state.tails.iter().map(|t| (0.1 * t.sigma).powi(2)).collect(),
        u: vec![(0.05 * sd).powi(2).max(1e-8); k],
        tau: vec![(n / 50.0).powi(2).max(1.0); k.saturating_sub(1)],
        spread: bulk.spreads().iter().map(|s| (0.1 * s).powi(2)).collect(),
        mean: bulk.means().iter().map(|m| (0.05 * m).powi(2).max(1e-10)).collect(),
        weights: 1000.0,
    }
}
