//! Adaptive block Metropolis-Hastings sampler, multi-chain runs and
//! convergence diagnostics.

mod blocks;
mod diagnostics;
mod init;
mod kernel;

pub use blocks::{Blocks, ProposalScales, Tally};
pub use diagnostics::{detect_empty_regimes, posterior_mean_tau, rhat, split_rhat, tail_rhats, empty_margin, RHAT_THRESHOLD};
pub use init::{default_init, dispersed_init, initial_scales};
pub use kernel::{Kernel, Step, WEIGHT_FLOOR};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dists::BulkKind;
use crate::error::{domain, Result};
use crate::model::{Dataset, Hyperparams, ModelState};

/// Iterations per adaptation batch.
pub const ADAPT_BATCH: usize = 50;
/// Acceptance rate the adaptation steers each block towards.
pub const TARGET_ACCEPTANCE: f64 = 0.44;

const MIN_VARIANCE: f64 = 1e-12;
const MAX_VARIANCE: f64 = 1e12;
const MIN_CONCENTRATION: f64 = 1.0;
const MAX_CONCENTRATION: f64 = 1e9;

/// Run plan of one chain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChainConfig {
    pub iterations: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub k: usize,
    pub l: usize,
    pub kind: BulkKind,
    pub seed: u64,
    pub adapt: bool,
}

impl ChainConfig {
    /// 15000 iterations, 5000 burn-in, thinning 10: 1000 retained samples.
    pub fn new(kind: BulkKind, k: usize, l: usize, seed: u64) -> Self {
        Self { iterations: 15_000, burn_in: 5_000, thin: 10, k, l, kind, seed, adapt: true }
    }

    pub fn validate(&self) -> Result<()> {
        if self.burn_in >= self.iterations {
            return domain(format!("burn_in ({}) must be below iterations ({})", self.burn_in, self.iterations));
        }
        if self.thin == 0 {
            return domain("thin must be at least 1");
        }
        if self.k == 0 || self.l == 0 {
            return domain("k and l must be at least 1");
        }
        Ok(())
    }

    pub fn retained(&self) -> usize {
        (self.iterations - self.burn_in) / self.thin
    }
}

/// Output of one chain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Chain {
    pub config: ChainConfig,
    /// Post burn-in, thinned states.
    pub samples: Vec<ModelState>,
    /// Post burn-in acceptance rate per block; `None` for blocks never proposed.
    pub acceptance: Blocks<Option<f64>>,
    pub scales_final: ProposalScales,
    /// Log-posterior after every iteration, burn-in included.
    pub logpost_trace: Vec<f64>,
}

/// One adaptation step: every block's log standard deviation moves by
/// `min(0.05, 1/sqrt(batch_index))` towards the target acceptance rate.
/// Blocks with no proposals in the batch, or exactly on target, keep their
/// scale. The weight concentration moves the opposite way.
pub fn adapt_scales(scales: &ProposalScales, batch: &Blocks<Tally>, batch_index: usize) -> ProposalScales {
    let delta = (1.0 / (batch_index.max(1) as f64).sqrt()).min(0.05);
    let direction = |t: &Tally| match t.rate() {
        Some(r) if r > TARGET_ACCEPTANCE => 1.0,
        Some(r) if r < TARGET_ACCEPTANCE => -1.0,
        _ => 0.0,
    };
    let mut out = scales.zip_with(batch, |v, t| (v * (2.0 * delta * direction(t)).exp()).clamp(MIN_VARIANCE, MAX_VARIANCE));
    out.weights =
        (scales.weights * (-2.0 * delta * direction(&batch.weights)).exp()).clamp(MIN_CONCENTRATION, MAX_CONCENTRATION);
    out
}

fn record(tallies: &mut Blocks<Tally>, steps: &Blocks<Step>) {
    let add = |t: &mut Tally, s: &Step| match s {
        Step::Accepted => {
            t.accepted += 1;
            t.attempted += 1;
        }
        Step::Rejected => t.attempted += 1,
        Step::Skipped => {}
    };
    for (t, s) in tallies.xi.iter_mut().zip(&steps.xi) {
        add(t, s);
    }
    for (t, s) in tallies.sigma.iter_mut().zip(&steps.sigma) {
        add(t, s);
    }
    for (t, s) in tallies.u.iter_mut().zip(&steps.u) {
        add(t, s);
    }
    for (t, s) in tallies.tau.iter_mut().zip(&steps.tau) {
        add(t, s);
    }
    for (t, s) in tallies.spread.iter_mut().zip(&steps.spread) {
        add(t, s);
    }
    for (t, s) in tallies.mean.iter_mut().zip(&steps.mean) {
        add(t, s);
    }
    add(&mut tallies.weights, &steps.weights);
}

/// Runs one chain. Without `init` the chain starts from [`default_init`].
/// Output is a deterministic function of the arguments.
pub fn run_chain(config: &ChainConfig, data: &Dataset, hyper: &Hyperparams, init: Option<ModelState>) -> Result<Chain> {
    run_chain_with_scales(config, data, hyper, init, None)
}

/// As [`run_chain`], with optional starting proposal scales.
pub fn run_chain_with_scales(
    config: &ChainConfig,
    data: &Dataset,
    hyper: &Hyperparams,
    init: Option<ModelState>,
    scales: Option<ProposalScales>,
) -> Result<Chain> {
    config.validate()?;
    data.check_kind(config.kind)?;
    let state = match init {
        Some(s) => {
            if s.k() != config.k || s.l() != config.l || s.bulk.kind() != config.kind {
                return domain(format!(
                    "initial state has k={}, l={}, kind={:?} but the configuration asks for k={}, l={}, kind={:?}",
                    s.k(),
                    s.l(),
                    s.bulk.kind(),
                    config.k,
                    config.l,
                    config.kind
                ));
            }
            s
        }
        None => default_init(data, config.k, config.l, config.kind)?,
    };
    let mut kernel = Kernel::new(state, data, hyper)?;
    let mut scales = match scales {
        Some(s) => {
            if s.k() != config.k || s.l() != config.l || s.tau.len() != config.k - 1 {
                return domain("proposal scales do not match k and l");
            }
            s
        }
        None => initial_scales(kernel.state(), data),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let (k, l) = (config.k, config.l);
    let mut batch = Blocks::filled(k, l, Tally::default());
    let mut kept = Blocks::filled(k, l, Tally::default());
    let mut samples = Vec::with_capacity(config.retained());
    let mut trace = Vec::with_capacity(config.iterations);

    for it in 1..=config.iterations {
        let steps = kernel.sweep(&scales, &mut rng)?;
        debug_assert!(kernel.state().validate(data).is_ok());
        if it <= config.burn_in {
            record(&mut batch, &steps);
            if config.adapt && it % ADAPT_BATCH == 0 {
                scales = adapt_scales(&scales, &batch, it / ADAPT_BATCH);
                batch = Blocks::filled(k, l, Tally::default());
            }
        } else {
            record(&mut kept, &steps);
            if (it - config.burn_in) % config.thin == 0 {
                samples.push(kernel.state().clone());
            }
        }
        trace.push(kernel.log_posterior());
    }
    Ok(Chain {
        config: config.clone(),
        samples,
        acceptance: kept.map(Tally::rate),
        scales_final: scales,
        logpost_trace: trace,
    })
}

/// Runs `n_chains` chains in parallel. Chain `c` uses seed `config.seed + c`;
/// chain 0 starts from [`default_init`] and the others from
/// [`dispersed_init`] seeded with their own seed.
pub fn run_chains(config: &ChainConfig, n_chains: usize, data: &Dataset, hyper: &Hyperparams) -> Result<Vec<Chain>> {
    if n_chains == 0 {
        return domain("need at least one chain");
    }
    config.validate()?;
    (0..n_chains)
        .into_par_iter()
        .map(|c| {
            let mut cfg = config.clone();
            cfg.seed = config.seed.wrapping_add(c as u64);
            let init = if c == 0 {
                default_init(data, cfg.k, cfg.l, cfg.kind)?
            } else {
                let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x9e37_79b9_7f4a_7c15);
                dispersed_init(data, cfg.k, cfg.l, cfg.kind, &mut rng)?
            };
            run_chain(&cfg, data, hyper, Some(init))
        })
        .collect()
}
