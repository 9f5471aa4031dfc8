use std::path::{Path, PathBuf};

use cevmm::dists::BulkKind;
use cevmm::io::{
    read_chain_file, read_json, read_series_file, write_chain_file, write_json, write_series_file, ChainRecord,
    ChainTable, NamedValue,
};
use cevmm::model::{default_hyperparams, Changepoints, Dataset, Hyperparams, ModelState};
use cevmm::preprocess::{apply_steps, parse_steps};
use cevmm::risk::{
    backtest as count_violations, default_return_periods, normfit_var_es, posterior_risk, regime_series, RiskMeasure,
};
use cevmm::sampler::{detect_empty_regimes, posterior_mean_tau, rhat, run_chains, ChainConfig, RHAT_THRESHOLD};
use cevmm::select::criteria;
use cevmm::simulate::{design_single_regime, design_three_regimes, resolve_thresholds, simulate_series, TruthSpec};
use cevmm::Error;
use serde::Serialize;

use crate::config::PipelineConfig;
use crate::error::CliError;
use crate::{BacktestArgs, DataArgs, Design, FitArgs, PreprocessArgs, RiskArgs, SelectArgs, SimulateArgs};

const DEFAULT_SEED: u64 = 1;
const DEFAULT_GRID_POINTS: usize = 25;

pub struct Context {
    pub seed: Option<u64>,
    pub out_dir: PathBuf,
    pub quiet: bool,
}

impl Context {
    fn note(&self, msg: impl AsRef<str>) {
        if !self.quiet {
            eprintln!("{}", msg.as_ref());
        }
    }

    fn out(&self, name: &str) -> PathBuf {
        self.out_dir.join(name)
    }
}

pub fn parse_kind(s: &str) -> Result<BulkKind, String> {
    serde_json::from_value(serde_json::Value::String(s.to_ascii_lowercase()))
        .map_err(|_| format!("unknown model kind '{s}' (expected cmgpd or cmnpd)"))
}

fn required<T>(v: Option<T>, flag: &str) -> Result<T, CliError> {
    v.ok_or_else(|| CliError::Usage(format!("missing --{flag} (or the matching config key)")))
}

fn load_data(ctx: &Context, cfg: &PipelineConfig, a: &DataArgs) -> Result<Dataset, CliError> {
    let path = required(a.data.clone().or_else(|| cfg.data.clone()), "data")?;
    let series = read_series_file(&path, a.column.as_deref().or(cfg.column.as_deref()))?;
    if series.dropped > 0 {
        ctx.note(format!("{}: dropped {} non-numeric or non-finite rows", path.display(), series.dropped));
    }
    if series.values.is_empty() {
        return Err(Error::Data(format!("{}: no numeric values in column '{}'", path.display(), series.column)).into());
    }
    Ok(Dataset::new(series.values)?)
}

/// Changepoints at the rounded posterior means, pushed apart to stay
/// strictly increasing.
fn mean_changepoints(samples: &[ModelState], n: usize) -> Result<Changepoints, CliError> {
    let means = posterior_mean_tau(samples);
    let k = means.len().saturating_sub(1);
    let mut inner: Vec<usize> = Vec::with_capacity(k.saturating_sub(1));
    for (i, m) in means[1..k].iter().enumerate() {
        let prev = inner.last().copied().unwrap_or(0);
        let room = n - (k - 1 - i);
        inner.push((m.round() as usize).max(prev + 1).min(room));
    }
    Ok(Changepoints::from_inner(&inner, n)?)
}

/// Reads a chain table, checking its diagnostics record, when present,
/// against the data.
fn load_chain(path: &Path, data: &Dataset, require_record: bool) -> Result<(ChainTable, Option<ChainRecord>), CliError> {
    let record_path = path.with_extension("json");
    let record = if record_path.exists() {
        let r: ChainRecord = read_json(&record_path)?;
        let hash = data.fingerprint();
        if r.data_hash != hash {
            return Err(Error::Data(format!(
                "{} was fitted to different data (hash {} but the data hash to {})",
                path.display(),
                r.data_hash,
                hash
            ))
            .into());
        }
        Some(r)
    } else if require_record {
        return Err(Error::Data(format!("missing diagnostics {} for {}", record_path.display(), path.display())).into());
    } else {
        None
    };
    let table = read_chain_file(path, data.n())?;
    if table.samples.is_empty() {
        return Err(Error::Data(format!("{} holds no samples", path.display())).into());
    }
    Ok((table, record))
}

pub fn preprocess(ctx: &Context, cfg: &PipelineConfig, a: PreprocessArgs) -> Result<(), CliError> {
    let path = required(a.data.data.clone().or_else(|| cfg.data.clone()), "data")?;
    let steps = required(a.steps.or_else(|| cfg.steps.clone()), "steps")?;
    let steps = parse_steps(&steps).map_err(|e| CliError::Usage(e.to_string()))?;
    let series = read_series_file(&path, a.data.column.as_deref().or(cfg.column.as_deref()))?;
    let out = apply_steps(&series.values, &steps)?;
    let dropped = series.dropped + out.dropped;
    if dropped > 0 {
        ctx.note(format!("dropped {dropped} non-finite values"));
    }
    let output = a.output.unwrap_or_else(|| ctx.out("preprocessed.csv"));
    write_series_file(&output, &out.values, None)?;
    ctx.note(format!("wrote {} values to {}", out.values.len(), output.display()));
    Ok(())
}

pub fn simulate(ctx: &Context, cfg: &PipelineConfig, a: SimulateArgs) -> Result<(), CliError> {
    let (mut spec, builtin): (TruthSpec, bool) = match (a.truth, a.design, &cfg.truth) {
        (Some(p), _, _) => (read_json(&p)?, false),
        (None, Some(Design::SingleRegime), _) => (design_single_regime(DEFAULT_SEED), true),
        (None, Some(Design::ThreeRegime), _) => (design_three_regimes(DEFAULT_SEED), true),
        (None, None, Some(t)) => (t.clone(), false),
        (None, None, None) => (design_three_regimes(DEFAULT_SEED), true),
    };
    if let Some(s) = ctx.seed {
        spec.seed = s;
    }
    if let Some(n) = a.n.or(cfg.n) {
        // Built-in designs keep their changepoints at the same fractions of n.
        if builtin {
            for t in &mut spec.changepoints {
                *t = (*t as f64 * n as f64 / spec.n as f64).round() as usize;
            }
        }
        spec.n = n;
    }
    let resolved = resolve_thresholds(&spec)?;
    let data = simulate_series(&resolved)?;
    let cps = Changepoints::from_inner(&resolved.changepoints, resolved.n)?;
    write_series_file(&ctx.out("series.csv"), data.x(), Some(&cps))?;
    write_json(&ctx.out("truth.json"), &resolved)?;
    ctx.note(format!("wrote {} observations to {}", data.n(), ctx.out_dir.display()));
    Ok(())
}

#[derive(Serialize)]
struct FitSummary {
    data_hash: String,
    n: usize,
    config: ChainConfig,
    chains: usize,
    hyper: Hyperparams,
    /// Split R-hat per parameter; empty for a single chain, and parameters
    /// constant across all draws are omitted.
    rhat: Vec<NamedValue>,
    converged: bool,
    posterior_mean_tau: Vec<f64>,
    empty_regimes: Vec<Vec<bool>>,
}

pub fn fit(ctx: &Context, cfg: &PipelineConfig, a: FitArgs) -> Result<(), CliError> {
    let data = load_data(ctx, cfg, &a.data)?;
    let kind = a.kind.or(cfg.kind).unwrap_or(BulkKind::Gamma);
    data.check_kind(kind)?;
    let k = a.k.or(cfg.k).unwrap_or(1);
    let l = a.l.or(cfg.l).unwrap_or(2);
    let mut config = ChainConfig::new(kind, k, l, ctx.seed.unwrap_or(DEFAULT_SEED));
    config.iterations = a.iterations.or(cfg.iterations).unwrap_or(config.iterations);
    config.burn_in = a.burn_in.or(cfg.burn_in).unwrap_or(config.burn_in);
    config.thin = a.thin.or(cfg.thin).unwrap_or(config.thin);
    config.adapt = !a.no_adapt && cfg.adapt.unwrap_or(true);
    config.validate()?;
    let n_chains = a.chains.or(cfg.chains).unwrap_or(1);
    let hyper = cfg.hyper.apply(default_hyperparams(&data, kind)?);
    hyper.validate()?;

    ctx.note(format!(
        "fitting k={k}, l={l} ({n_chains} chain(s), {} iterations, {} retained each)",
        config.iterations,
        config.retained()
    ));
    let chains = run_chains(&config, n_chains, &data, &hyper)?;
    let hash = data.fingerprint();
    let mut empty = Vec::with_capacity(chains.len());
    for (c, chain) in chains.iter().enumerate() {
        let flags = detect_empty_regimes(chain, data.n());
        write_chain_file(&ctx.out(&format!("chain_{}.csv", c + 1)), chain)?;
        write_json(&ctx.out(&format!("chain_{}.json", c + 1)), &ChainRecord::new(chain, &hash, data.n(), flags.clone()))?;
        empty.push(flags);
    }

    let names = ModelState::param_names(kind, k, l);
    let mut rhats = Vec::new();
    let mut bad = Vec::new();
    if n_chains == 1 {
        ctx.note("single chain: R-hat not computed");
    }
    for (i, name) in names.iter().enumerate().filter(|_| n_chains > 1) {
        let first = chains[0].samples.first().map(|s| s.to_vector()[i]);
        let constant = chains.iter().all(|c| c.samples.iter().all(|s| Some(s.to_vector()[i]) == first));
        if constant {
            continue;
        }
        let r = rhat(&chains, |s| s.to_vector()[i])?;
        if !(r <= RHAT_THRESHOLD) {
            bad.push(format!("{name}={r:.3}"));
        }
        rhats.push(NamedValue::new(name.clone(), r));
    }
    let pooled: Vec<ModelState> = chains.iter().flat_map(|c| c.samples.iter().cloned()).collect();
    let summary = FitSummary {
        data_hash: hash,
        n: data.n(),
        config,
        chains: n_chains,
        hyper,
        rhat: rhats,
        converged: bad.is_empty(),
        posterior_mean_tau: posterior_mean_tau(&pooled),
        empty_regimes: empty,
    };
    write_json(&ctx.out("fit.json"), &summary)?;
    ctx.note(format!("wrote chains and diagnostics to {}", ctx.out_dir.display()));
    if !bad.is_empty() {
        let msg = format!("R-hat above {RHAT_THRESHOLD}: {}", bad.join(", "));
        if a.allow_unconverged || cfg.allow_unconverged.unwrap_or(false) {
            ctx.note(format!("warning: {msg}"));
        } else {
            return Err(CliError::Unconverged(msg));
        }
    }
    Ok(())
}

fn model_label(kind: BulkKind, k: usize, l: usize) -> String {
    let base = match kind {
        BulkKind::Gamma => "MGPD",
        BulkKind::Normal => "MNPD",
    };
    if k == 1 {
        format!("{base}_{l}")
    } else {
        format!("C{base}_{l}^{k}")
    }
}

fn flags(v: &[bool]) -> String {
    v.iter().map(|&e| if e { "1" } else { "0" }).collect::<Vec<_>>().join(";")
}

#[derive(Serialize)]
struct SelectionRow {
    model: String,
    file: String,
    k: usize,
    l: usize,
    n_params: usize,
    bic: f64,
    dic: f64,
    waic: f64,
    p_dic: f64,
    p_waic: f64,
    dic_fallback: bool,
    empty_regimes: String,
    best_waic: bool,
}

pub fn select(ctx: &Context, cfg: &PipelineConfig, a: SelectArgs) -> Result<(), CliError> {
    if a.chains.len() < 2 {
        return Err(CliError::Usage("model selection needs at least two chain tables".into()));
    }
    let data = load_data(ctx, cfg, &a.data)?;
    let mut rows = Vec::with_capacity(a.chains.len());
    for path in &a.chains {
        let (table, record) = load_chain(path, &data, true)?;
        let report = criteria(&table.samples, &data)?;
        rows.push(SelectionRow {
            model: model_label(table.kind, table.k, table.l),
            file: path.display().to_string(),
            k: table.k,
            l: table.l,
            n_params: report.n_params,
            bic: report.bic,
            dic: report.dic,
            waic: report.waic,
            p_dic: report.p_dic,
            p_waic: report.p_waic,
            dic_fallback: report.dic_fallback,
            empty_regimes: record.map(|r| flags(&r.empty_regimes)).unwrap_or_default(),
            best_waic: false,
        });
    }
    let best = rows.iter().map(|r| r.waic).fold(f64::INFINITY, f64::min);
    for r in &mut rows {
        r.best_waic = r.waic == best;
    }
    let output = a.output.unwrap_or_else(|| ctx.out("selection.csv"));
    write_csv(&output, &rows)?;
    for r in &rows {
        ctx.note(format!("{:<12} WAIC {:>12.2}{}", r.model, r.waic, if r.best_waic { "  *" } else { "" }));
    }
    Ok(())
}

#[derive(Serialize)]
struct RiskRow {
    regime: usize,
    start: usize,
    end: usize,
    measure: &'static str,
    level: f64,
    point: f64,
    lo: f64,
    hi: f64,
    dropped: usize,
    normfit: Option<f64>,
}

#[derive(Serialize)]
struct BacktestOut {
    method: &'static str,
    regime: usize,
    length: usize,
    p: f64,
    expected: usize,
    observed: usize,
}

fn nonempty(levels: Option<Vec<f64>>, flag: &str) -> Result<Option<Vec<f64>>, CliError> {
    match levels {
        Some(v) if v.is_empty() => Err(CliError::Usage(format!("--{flag} needs at least one level"))),
        other => Ok(other),
    }
}

pub fn risk(ctx: &Context, cfg: &PipelineConfig, a: RiskArgs) -> Result<(), CliError> {
    let periods = nonempty(a.return_periods.or_else(|| cfg.return_periods.clone()), "return-periods")?;
    let var = nonempty(a.var.or_else(|| cfg.var.clone()), "var")?;
    let es = nonempty(a.es.or_else(|| cfg.es.clone()), "es")?;
    let normfit = a.normfit || cfg.normfit.unwrap_or(false);
    let backtest_p = a.backtest.or(cfg.backtest);

    let data = load_data(ctx, cfg, &a.data)?;
    let chain_path = required(a.chain.or_else(|| cfg.chain.clone()), "chain")?;
    let (table, _) = load_chain(&chain_path, &data, false)?;
    let samples = &table.samples;
    let cps = mean_changepoints(samples, data.n())?;

    let explicit_grid = periods.is_some();
    let grid = periods.unwrap_or_else(|| default_return_periods(DEFAULT_GRID_POINTS));
    let mut rows = Vec::new();
    let mut skipped = 0;
    for j in 0..table.k {
        let range = cps.range(j);
        let row = |s: cevmm::risk::RiskSummary, nf: Option<f64>| RiskRow {
            regime: s.regime,
            start: range.start + 1,
            end: range.end,
            measure: s.measure.name(),
            level: s.level,
            point: s.point,
            lo: s.lo,
            hi: s.hi,
            dropped: s.dropped,
            normfit: nf,
        };
        for &t in &grid {
            match posterior_risk(samples, j, RiskMeasure::ReturnLevel, &[t]) {
                Ok(v) => rows.extend(v.into_iter().map(|s| row(s, None))),
                // Short default periods may fall below a regime's threshold.
                Err(Error::BelowThreshold { .. } | Error::TooManyDropped { .. }) if !explicit_grid => skipped += 1,
                Err(e) => return Err(e.into()),
            }
        }
        for (measure, levels) in [(RiskMeasure::Var, &var), (RiskMeasure::Es, &es)] {
            let Some(levels) = levels else { continue };
            let summaries = posterior_risk(samples, j, measure, levels).map_err(|e| match e {
                Error::TooManyDropped { .. } => Error::Data(format!("regime {}, {}: {e}", j + 1, measure.name())),
                e => e,
            })?;
            for s in summaries {
                let nf = if normfit {
                    match normfit_var_es(&data.x()[range.clone()], s.level) {
                        Ok((v, e)) => Some(if measure == RiskMeasure::Var { v } else { e }),
                        Err(e) => {
                            ctx.note(format!("regime {}: no normal fit ({e})", j + 1));
                            None
                        }
                    }
                } else {
                    None
                };
                rows.push(row(s, nf));
            }
        }
    }
    if skipped > 0 {
        ctx.note(format!("skipped {skipped} default return periods below a regime threshold"));
    }
    write_csv(&ctx.out("risk.csv"), &rows)?;
    ctx.note(format!("wrote {} rows to {}", rows.len(), ctx.out("risk.csv").display()));
    if let Some(p) = backtest_p {
        write_backtest(ctx, samples, &data, &cps, p)?;
    }
    Ok(())
}

pub fn backtest(ctx: &Context, cfg: &PipelineConfig, a: BacktestArgs) -> Result<(), CliError> {
    let p = required(a.p.or(cfg.backtest), "p")?;
    let data = load_data(ctx, cfg, &a.data)?;
    let chain_path = required(a.chain.or_else(|| cfg.chain.clone()), "chain")?;
    let (table, _) = load_chain(&chain_path, &data, false)?;
    let cps = mean_changepoints(&table.samples, data.n())?;
    write_backtest(ctx, &table.samples, &data, &cps, p)
}

/// Violations of the posterior-mean model VaR per regime and, when every
/// regime admits one, of the Normal-fit VaR.
fn write_backtest(ctx: &Context, samples: &[ModelState], data: &Dataset, cps: &Changepoints, p: f64) -> Result<(), CliError> {
    let mut per_regime = Vec::with_capacity(cps.k());
    for j in 0..cps.k() {
        per_regime.push(posterior_risk(samples, j, RiskMeasure::Var, &[p])?[0].point);
    }
    let mut methods = vec![("model", per_regime)];
    match (0..cps.k()).map(|j| normfit_var_es(&data.x()[cps.range(j)], p).map(|r| r.0)).collect::<Result<Vec<_>, _>>() {
        Ok(v) => methods.push(("normfit", v)),
        Err(e) => ctx.note(format!("normal-fit backtest skipped: {e}")),
    }
    let mut rows = Vec::new();
    for (method, levels) in methods {
        for r in count_violations(&regime_series(&levels, cps), data.x(), cps, p)? {
            rows.push(BacktestOut { method, regime: r.regime, length: r.length, p, expected: r.expected, observed: r.observed });
        }
    }
    write_csv(&ctx.out("backtest.csv"), &rows)?;
    ctx.note(format!("wrote {}", ctx.out("backtest.csv").display()));
    Ok(())
}

fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<(), CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    let mut w = csv::Writer::from_path(path).map_err(Error::from)?;
    for r in rows {
        w.serialize(r).map_err(Error::from)?;
    }
    w.flush()?;
    Ok(())
}
