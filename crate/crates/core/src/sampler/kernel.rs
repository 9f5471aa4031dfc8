//! Single-site Metropolis-Hastings updates with cached per-regime terms.

use rand::Rng;

use super::blocks::{Blocks, ProposalScales};
use crate::dists::sampling::{log_gamma_interval_meanshape, sample_trunc_gamma_meanshape};
use crate::dists::special::{gamma_logpdf_meanshape, log_norm_interval, log_norm_sf};
use crate::dists::mixture::dirichlet_logpdf;
use crate::dists::{sample_dirichlet, sample_gamma_meanshape, sample_trunc_normal, BulkParams};
use crate::error::{domain, Result};
use crate::model::{
    log_prior, log_prior_bulk, log_prior_changepoints, log_prior_regime, log_tail_mass, segment_loglik, BulkEval,
    Dataset, Hyperparams, ModelState, RegimeTail, XI_PRIOR_MIN,
};

/// Weights are floored here before they enter a Dirichlet concentration.
pub const WEIGHT_FLOOR: f64 = 1e-8;

/// Outcome of one proposal.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Step {
    Accepted,
    Rejected,
    /// No admissible move exists; nothing was proposed.
    Skipped,
}

impl Step {
    fn from_bool(accepted: bool) -> Self {
        if accepted {
            Step::Accepted
        } else {
            Step::Rejected
        }
    }
}

fn mh_accept<R: Rng + ?Sized>(log_ratio: f64, rng: &mut R) -> bool {
    if log_ratio.is_nan() || log_ratio == f64::NEG_INFINITY {
        return false;
    }
    if log_ratio >= 0.0 {
        return true;
    }
    rng.random::<f64>().ln() < log_ratio
}

/// Sampler state: the current parameters plus cached likelihood pieces.
///
/// `seg_ll[j]` is the log-likelihood of regime `j`, `log_tail[j]` is
/// `ln(1 - H(u_j))`, and `seg_min`/`seg_max` are the regime's extreme
/// observations. All caches agree with `state` between calls.
#[derive(Debug, Clone)]
pub struct Kernel<'a> {
    data: &'a Dataset,
    hyper: &'a Hyperparams,
    state: ModelState,
    eval: BulkEval,
    seg_ll: Vec<f64>,
    log_tail: Vec<f64>,
    seg_min: Vec<f64>,
    seg_max: Vec<f64>,
    log_prior: f64,
}

impl<'a> Kernel<'a> {
    /// Fails unless `state` is valid for `data` with a finite log-posterior.
    pub fn new(state: ModelState, data: &'a Dataset, hyper: &'a Hyperparams) -> Result<Self> {
        state.validate(data)?;
        hyper.validate()?;
        let k = state.k();
        let eval = BulkEval::new(&state.bulk);
        let log_tail: Vec<f64> = state.tails.iter().map(|t| log_tail_mass(&state.bulk, t.u)).collect();
        let mut seg_ll = Vec::with_capacity(k);
        let (mut seg_min, mut seg_max) = (Vec::with_capacity(k), Vec::with_capacity(k));
        for j in 0..k {
            let r = state.cps.range(j);
            seg_ll.push(segment_loglik(data, r.clone(), &eval, &state.tails[j], log_tail[j]));
            let (lo, hi) = extremes(&data.x()[r]);
            seg_min.push(lo);
            seg_max.push(hi);
        }
        let lp = log_prior(&state, hyper);
        let kernel = Self { data, hyper, state, eval, seg_ll, log_tail, seg_min, seg_max, log_prior: lp };
        if !kernel.log_posterior().is_finite() {
            return domain("initial state has a non-finite log-posterior");
        }
        Ok(kernel)
    }

    pub fn state(&self) -> &ModelState {
        &self.state
    }

    pub fn into_state(self) -> ModelState {
        self.state
    }

    pub fn log_posterior(&self) -> f64 {
        self.log_prior + self.seg_ll.iter().sum::<f64>()
    }

    /// One full sweep in block order: shapes, scales and thresholds of every
    /// regime, then bulk spreads, bulk means, weights and inner changepoints.
    pub fn sweep<R: Rng + ?Sized>(&mut self, scales: &ProposalScales, rng: &mut R) -> Result<Blocks<Step>> {
        let k = self.state.k();
        let mut out = Blocks::filled(k, self.state.l(), Step::Skipped);
        for j in 0..k {
            out.xi[j] = self.update_xi(j, scales.xi[j], rng)?;
        }
        for j in 0..k {
            out.sigma[j] = self.update_sigma(j, scales.sigma[j], rng)?;
        }
        for j in 0..k {
            out.u[j] = self.update_u(j, scales.u[j], rng)?;
        }
        out.spread = self.update_bulk_shapes(&scales.spread, rng)?;
        out.mean = self.update_bulk_means(&scales.mean, rng)?;
        out.weights = self.update_weights(scales.weights, rng)?;
        for i in 1..k {
            out.tau[i - 1] = self.update_tau(i, scales.tau[i - 1], rng)?;
        }
        Ok(out)
    }

    fn try_tail<R: Rng + ?Sized>(
        &mut self,
        j: usize,
        tail: RegimeTail,
        log_tail: f64,
        hastings: f64,
        rng: &mut R,
    ) -> Step {
        let ll = segment_loglik(self.data, self.state.cps.range(j), &self.eval, &tail, log_tail);
        let dprior = log_prior_regime(&tail, self.hyper) - log_prior_regime(&self.state.tails[j], self.hyper);
        let accepted = ll != f64::NEG_INFINITY && mh_accept(ll - self.seg_ll[j] + dprior + hastings, rng);
        if accepted {
            self.state.tails[j] = tail;
            self.seg_ll[j] = ll;
            self.log_tail[j] = log_tail;
            self.log_prior = log_prior(&self.state, self.hyper);
        }
        Step::from_bool(accepted)
    }

    /// Shape update. The proposal is a Normal truncated below at the larger of
    /// `-1/2` and `-sigma / (M - u)`, so the GPD support always covers the
    /// regime maximum `M`.
    pub fn update_xi<R: Rng + ?Sized>(&mut self, j: usize, var: f64, rng: &mut R) -> Result<Step> {
        let t = self.state.tails[j];
        let m = self.seg_max[j];
        let lower = if m > t.u { (-t.sigma / (m - t.u)).max(XI_PRIOR_MIN) } else { XI_PRIOR_MIN };
        if !(t.xi > lower) {
            return Ok(Step::Skipped);
        }
        let xi = sample_trunc_normal(t.xi, var, lower, f64::INFINITY, rng)?;
        let sd = var.sqrt();
        let hastings = log_norm_sf((lower - t.xi) / sd) - log_norm_sf((lower - xi) / sd);
        Ok(self.try_tail(j, RegimeTail { xi, ..t }, self.log_tail[j], hastings, rng))
    }

    /// Scale update: mean-preserving Gamma walk when `xi >= 0`, otherwise a
    /// Normal truncated to keep the upper endpoint above the regime maximum.
    pub fn update_sigma<R: Rng + ?Sized>(&mut self, j: usize, var: f64, rng: &mut R) -> Result<Step> {
        let t = self.state.tails[j];
        let (sigma, hastings) = if t.xi >= 0.0 {
            let shape = t.sigma * t.sigma / var;
            let s = sample_gamma_meanshape(t.sigma, shape, rng)?;
            if !(s > 0.0) || !s.is_finite() {
                return Ok(Step::Rejected);
            }
            let h = gamma_logpdf_meanshape(t.sigma, s, s * s / var) - gamma_logpdf_meanshape(s, t.sigma, shape);
            (s, h)
        } else {
            let lower = (-t.xi * (self.seg_max[j] - t.u)).max(0.0);
            if !(t.sigma > lower) {
                return Ok(Step::Skipped);
            }
            let s = sample_trunc_normal(t.sigma, var, lower, f64::INFINITY, rng)?;
            let sd = var.sqrt();
            (s, log_norm_sf((lower - t.sigma) / sd) - log_norm_sf((lower - s) / sd))
        };
        Ok(self.try_tail(j, RegimeTail { sigma, ..t }, self.log_tail[j], hastings, rng))
    }

    /// Threshold update from a Normal truncated below at the regime minimum
    /// (`xi >= 0`) or at `M + sigma / xi` (`xi < 0`).
    pub fn update_u<R: Rng + ?Sized>(&mut self, j: usize, var: f64, rng: &mut R) -> Result<Step> {
        let t = self.state.tails[j];
        let a = if t.xi >= 0.0 { self.seg_min[j] } else { self.seg_max[j] + t.sigma / t.xi };
        if !(t.u > a) {
            return Ok(Step::Skipped);
        }
        let u = sample_trunc_normal(t.u, var, a, f64::INFINITY, rng)?;
        let sd = var.sqrt();
        let hastings = log_norm_sf((a - t.u) / sd) - log_norm_sf((a - u) / sd);
        let log_tail = log_tail_mass(&self.state.bulk, u);
        Ok(self.try_tail(j, RegimeTail { u, ..t }, log_tail, hastings, rng))
    }

    fn try_bulk<R: Rng + ?Sized>(&mut self, bulk: BulkParams, hastings: f64, rng: &mut R) -> Step {
        let dprior = log_prior_bulk(&bulk, self.hyper) - log_prior_bulk(&self.state.bulk, self.hyper);
        if !dprior.is_finite() {
            return Step::Rejected;
        }
        let eval = BulkEval::new(&bulk);
        let k = self.state.k();
        let mut log_tail = Vec::with_capacity(k);
        let mut seg_ll = Vec::with_capacity(k);
        for j in 0..k {
            let tail = &self.state.tails[j];
            let lt = log_tail_mass(&bulk, tail.u);
            let ll = segment_loglik(self.data, self.state.cps.range(j), &eval, tail, lt);
            if ll == f64::NEG_INFINITY {
                return Step::Rejected;
            }
            log_tail.push(lt);
            seg_ll.push(ll);
        }
        let dll = seg_ll.iter().sum::<f64>() - self.seg_ll.iter().sum::<f64>();
        let accepted = mh_accept(dll + dprior + hastings, rng);
        if accepted {
            self.state.bulk = bulk;
            self.eval = eval;
            self.seg_ll = seg_ll;
            self.log_tail = log_tail;
            self.log_prior = log_prior(&self.state, self.hyper);
        }
        Step::from_bool(accepted)
    }

    /// Mean-preserving Gamma walk on each component's shape (Gamma bulk) or
    /// variance (Normal bulk).
    pub fn update_bulk_shapes<R: Rng + ?Sized>(&mut self, vars: &[f64], rng: &mut R) -> Result<Vec<Step>> {
        let l = self.state.l();
        let mut steps = Vec::with_capacity(l);
        for (z, &var) in vars.iter().enumerate().take(l) {
            let cur = self.state.bulk.spread_of(z);
            let shape = cur * cur / var;
            let new = sample_gamma_meanshape(cur, shape, rng)?;
            if !(new > 0.0) || !new.is_finite() {
                steps.push(Step::Rejected);
                continue;
            }
            let hastings = gamma_logpdf_meanshape(cur, new, new * new / var) - gamma_logpdf_meanshape(new, cur, shape);
            let mut bulk = self.state.bulk.clone();
            bulk.set_spread(z, new);
            steps.push(self.try_bulk(bulk, hastings, rng));
        }
        Ok(steps)
    }

    /// Gamma walk on each component mean, truncated between the neighbouring
    /// means so the ordering is kept. The Hastings term includes the
    /// truncation masses of both directions.
    pub fn update_bulk_means<R: Rng + ?Sized>(&mut self, vars: &[f64], rng: &mut R) -> Result<Vec<Step>> {
        let l = self.state.l();
        let mut steps = Vec::with_capacity(l);
        for (z, &var) in vars.iter().enumerate().take(l) {
            let bulk = &self.state.bulk;
            let cur = bulk.mean_of(z);
            let lo = if z > 0 { bulk.mean_of(z - 1) } else { 0.0 };
            let hi = if z + 1 < l { bulk.mean_of(z + 1) } else { f64::INFINITY };
            let shape_fwd = cur * cur / var;
            let log_z_fwd = log_gamma_interval_meanshape(cur, shape_fwd, lo, hi);
            if !log_z_fwd.is_finite() {
                steps.push(Step::Rejected);
                continue;
            }
            let new = match sample_trunc_gamma_meanshape(cur, shape_fwd, lo, hi, rng) {
                Ok(v) if v > lo && v < hi => v,
                _ => {
                    steps.push(Step::Rejected);
                    continue;
                }
            };
            let shape_rev = new * new / var;
            let log_z_rev = log_gamma_interval_meanshape(new, shape_rev, lo, hi);
            if !log_z_rev.is_finite() {
                steps.push(Step::Rejected);
                continue;
            }
            let hastings = gamma_logpdf_meanshape(cur, new, shape_rev) - log_z_rev
                - gamma_logpdf_meanshape(new, cur, shape_fwd)
                + log_z_fwd;
            let mut cand = bulk.clone();
            cand.set_mean(z, new);
            steps.push(self.try_bulk(cand, hastings, rng));
        }
        Ok(steps)
    }

    /// Dirichlet proposal centred at the current weights with concentration
    /// `vp`. No-op when there is a single component.
    pub fn update_weights<R: Rng + ?Sized>(&mut self, vp: f64, rng: &mut R) -> Result<Step> {
        let l = self.state.l();
        if l == 1 {
            return Ok(Step::Skipped);
        }
        let cur = self.state.bulk.weights.clone();
        let alpha_fwd: Vec<f64> = cur.iter().map(|&w| vp * w.max(WEIGHT_FLOOR)).collect();
        let new = sample_dirichlet(&alpha_fwd, rng)?;
        if new.iter().any(|&w| !(w > 0.0)) {
            return Ok(Step::Rejected);
        }
        let alpha_rev: Vec<f64> = new.iter().map(|&w| vp * w.max(WEIGHT_FLOOR)).collect();
        let hastings = dirichlet_logpdf(&cur, &alpha_rev) - dirichlet_logpdf(&new, &alpha_fwd);
        let mut bulk = self.state.bulk.clone();
        bulk.weights = new;
        if bulk.validate().is_err() {
            return Ok(Step::Rejected);
        }
        Ok(self.try_bulk(bulk, hastings, rng))
    }

    /// Update of inner changepoint `tau[idx]` (`1 <= idx < k`). A continuous
    /// truncated Normal draw on `(lo + 1/2, hi - 1/2)` is rounded to the
    /// nearest integer; the Hastings term uses the exact unit-cell masses.
    pub fn update_tau<R: Rng + ?Sized>(&mut self, idx: usize, var: f64, rng: &mut R) -> Result<Step> {
        let tau = self.state.cps.tau();
        if idx == 0 || idx + 1 >= tau.len() {
            return domain(format!("changepoint index {idx} outside 1..{}", tau.len() - 1));
        }
        let (lo, cur, hi) = (tau[idx - 1], tau[idx], tau[idx + 1]);
        if hi - lo <= 2 {
            return Ok(Step::Skipped);
        }
        let (a, b) = (lo as f64 + 0.5, hi as f64 - 0.5);
        let x = sample_trunc_normal(cur as f64, var, a, b, rng)?;
        let new = (x.round() as usize).clamp(lo + 1, hi - 1);
        if new == cur {
            return Ok(Step::Accepted);
        }
        let sd = var.sqrt();
        let log_q = |from: usize, to: usize| {
            let c = from as f64;
            let t = to as f64;
            log_norm_interval((t - 0.5 - c) / sd, (t + 0.5 - c) / sd) - log_norm_interval((a - c) / sd, (b - c) / sd)
        };
        let hastings = log_q(new, cur) - log_q(cur, new);

        let mut cps = self.state.cps.clone();
        cps.set(idx, new);
        let (jl, jr) = (idx - 1, idx);
        let tails = &self.state.tails;
        let ll_l = segment_loglik(self.data, cps.range(jl), &self.eval, &tails[jl], self.log_tail[jl]);
        let ll_r = segment_loglik(self.data, cps.range(jr), &self.eval, &tails[jr], self.log_tail[jr]);
        if ll_l == f64::NEG_INFINITY || ll_r == f64::NEG_INFINITY {
            return Ok(Step::Rejected);
        }
        let dprior = log_prior_changepoints(&cps) - log_prior_changepoints(&self.state.cps);
        let dll = ll_l + ll_r - self.seg_ll[jl] - self.seg_ll[jr];
        let accepted = mh_accept(dll + dprior + hastings, rng);
        if accepted {
            for j in [jl, jr] {
                let (mn, mx) = extremes(&self.data.x()[cps.range(j)]);
                self.seg_min[j] = mn;
                self.seg_max[j] = mx;
            }
            self.state.cps = cps;
            self.seg_ll[jl] = ll_l;
            self.seg_ll[jr] = ll_r;
            self.log_prior = log_prior(&self.state, self.hyper);
        }
        Ok(Step::from_bool(accepted))
    }
}

fn extremes(xs: &[f64]) -> (f64, f64) {
    xs.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| (lo.min(x), hi.max(x)))
}
