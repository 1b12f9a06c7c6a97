//! Experiment configuration and the end-to-end training loop.
//!
//! A config is a TOML file with top-level run keys and a `[growth]` table.
//! Every key has a default; unknown keys are rejected. See the README for
//! the full schema.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use log::{debug, info, warn};
use rand::seq::index::sample;
use serde::{Deserialize, Serialize};

use crate::consolidation::{estimate_fisher_diag, ConsolidationState, FisherKind};
use crate::datasets::{build_stream, load_mnist, Batch, Benchmark, Dataset, TaskStream};
use crate::diagnostics::{
    accuracy, config_hash, effective_plastic_count, emit_records, locked_fraction, mean, GrowthEvent,
    MetricsRecord, RunLog, SCHEMA_VERSION,
};
pub use crate::diagnostics::RunSummary;
use crate::error::{Error, Result};
use crate::network::{ActivationTrace, GrowableMlp, GrowthOutcome};
use crate::rng::{stream, stream_rng};
use crate::trigger::{
    ablation_trigger, compute_ed, evaluate_growth, EpochContext, GrowthConfig, GrowthRefs, InitStrategy,
    TriggerVariant,
};

/// Ablation rows: trigger replacements and fan-in strategies.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Ablation {
    EdOnly,
    FsatOnly,
    FixedPerTask,
    Scheduled,
    LossPlateau,
    Init(InitStrategy),
}

impl Ablation {
    pub const ALL: [Ablation; 10] = [
        Ablation::EdOnly,
        Ablation::FsatOnly,
        Ablation::FixedPerTask,
        Ablation::Scheduled,
        Ablation::LossPlateau,
        Ablation::Init(InitStrategy::Random),
        Ablation::Init(InitStrategy::He),
        Ablation::Init(InitStrategy::Xavier),
        Ablation::Init(InitStrategy::Nullspace),
        Ablation::Init(InitStrategy::Zero),
    ];

    pub fn name(self) -> String {
        match self {
            Ablation::EdOnly => "ed_only".into(),
            Ablation::FsatOnly => "fsat_only".into(),
            Ablation::FixedPerTask => "fixed_per_task".into(),
            Ablation::Scheduled => "scheduled".into(),
            Ablation::LossPlateau => "loss_plateau".into(),
            Ablation::Init(s) => format!("init_{s}"),
        }
    }
}

impl FromStr for Ablation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ablation::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| Error::config("mode", format!("unknown ablation `{s}`")))
    }
}

/// What the run does with growth.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Mode {
    Noracl,
    StaticEwc,
    Ablation(Ablation),
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Mode::Noracl => f.write_str("noracl"),
            Mode::StaticEwc => f.write_str("static_ewc"),
            Mode::Ablation(a) => write!(f, "ablation:{}", a.name()),
        }
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "noracl" => Ok(Mode::Noracl),
            "static_ewc" => Ok(Mode::StaticEwc),
            _ => match s.strip_prefix("ablation:") {
                Some(rest) => Ok(Mode::Ablation(rest.parse()?)),
                None => Err(Error::config("mode", format!("unknown mode `{s}`"))),
            },
        }
    }
}

impl TryFrom<String> for Mode {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<Mode> for String {
    fn from(m: Mode) -> String {
        m.to_string()
    }
}

/// Parameters of the heuristic ablation triggers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeuristicParams {
    pub fixed_k: usize,
    pub schedule_tasks: Vec<usize>,
    pub schedule_k: usize,
    pub plateau_window: usize,
    pub plateau_tol: f64,
}

impl Default for HeuristicParams {
    fn default() -> Self {
        Self {
            fixed_k: 5,
            schedule_tasks: vec![0, 5, 15, 25],
            schedule_k: 32,
            plateau_window: 3,
            plateau_tol: 0.002,
        }
    }
}

/// A fully resolved experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub benchmark: Benchmark,
    pub tasks: usize,
    pub hidden: Vec<usize>,
    pub mode: Mode,
    pub lambda: f64,
    pub alpha: f64,
    pub lr_first: f64,
    pub lr: f64,
    pub epochs_first: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub clip: f64,
    pub seeds: Vec<u64>,
    pub data_dir: PathBuf,
    pub out_dir: Option<PathBuf>,
    pub fisher_batches: usize,
    pub probe_size: usize,
    pub fisher_kind: FisherKind,
    /// Growth settings; `trigger` and `init` follow from `mode`.
    pub growth: GrowthConfig,
    pub heuristics: HeuristicParams,
}

impl ExperimentConfig {
    /// Defaults for `benchmark`.
    pub fn defaults(benchmark: Benchmark) -> Self {
        resolve(toml::Table::from_iter([(
            "benchmark".to_string(),
            toml::Value::String(benchmark.name().into()),
        )]))
        .expect("defaults are valid")
    }

    pub fn with_mode(mut self, mode: Mode) -> Result<Self> {
        self.mode = mode;
        let (trigger, init) = growth_for_mode(mode, self.growth.init, &self.heuristics);
        self.growth.trigger = trigger;
        self.growth.init = init;
        Ok(self)
    }

    pub fn grows(&self) -> bool {
        self.mode != Mode::StaticEwc
    }

    pub fn hash(&self) -> Result<String> {
        config_hash(self)
    }

    /// Per-seed output directory.
    pub fn seed_dir(&self, seed: u64) -> Option<PathBuf> {
        self.out_dir.as_ref().map(|d| d.join(format!("seed-{seed}")))
    }
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    benchmark: Option<String>,
    tasks: Option<usize>,
    hidden: Option<Vec<usize>>,
    mode: Option<String>,
    lambda: Option<f64>,
    alpha: Option<f64>,
    lr_first: Option<f64>,
    lr: Option<f64>,
    epochs_first: Option<usize>,
    epochs: Option<usize>,
    batch_size: Option<usize>,
    clip: Option<f64>,
    seeds: Option<Vec<u64>>,
    data_dir: Option<PathBuf>,
    out_dir: Option<PathBuf>,
    fisher_batches: Option<usize>,
    probe_size: Option<usize>,
    fisher_kind: Option<FisherKind>,
    growth: Option<RawGrowth>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawGrowth {
    gamma: Option<f64>,
    eps: Option<f64>,
    percentile: Option<f64>,
    cooldown: Option<usize>,
    s_init: Option<f64>,
    init: Option<InitStrategy>,
    max_width: Option<usize>,
    fixed_k: Option<usize>,
    schedule_tasks: Option<Vec<usize>>,
    schedule_k: Option<usize>,
    plateau_window: Option<usize>,
    plateau_tol: Option<f64>,
}

fn growth_for_mode(mode: Mode, init: InitStrategy, h: &HeuristicParams) -> (TriggerVariant, InitStrategy) {
    match mode {
        Mode::Noracl | Mode::StaticEwc => (TriggerVariant::Full, init),
        Mode::Ablation(a) => match a {
            Ablation::EdOnly => (TriggerVariant::EdOnly, init),
            Ablation::FsatOnly => (TriggerVariant::FsatOnly, init),
            Ablation::FixedPerTask => (TriggerVariant::FixedPerTask { k: h.fixed_k }, init),
            Ablation::Scheduled => (
                TriggerVariant::Scheduled {
                    tasks: h.schedule_tasks.clone(),
                    k: h.schedule_k,
                },
                init,
            ),
            Ablation::LossPlateau => (
                TriggerVariant::LossPlateau {
                    window: h.plateau_window,
                    tol: h.plateau_tol,
                },
                init,
            ),
            Ablation::Init(s) => (TriggerVariant::Full, s),
        },
    }
}

fn default_lambda(b: Benchmark) -> f64 {
    match b {
        Benchmark::Permuted => 500.0,
        Benchmark::Rotated => 2000.0,
        Benchmark::BinarySplit => 5000.0,
    }
}

fn positive(key: &str, v: f64) -> Result<f64> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(Error::config(key, format!("{v} must be positive")))
    }
}

fn at_least_one(key: &str, v: usize) -> Result<usize> {
    if v >= 1 {
        Ok(v)
    } else {
        Err(Error::config(key, "must be >= 1"))
    }
}

/// Resolves a parsed TOML table into a validated config.
pub fn resolve(table: toml::Table) -> Result<ExperimentConfig> {
    let raw: RawConfig = toml::Value::Table(table)
        .try_into()
        .map_err(|e: toml::de::Error| Error::config("config", e.message().to_string()))?;
    let benchmark: Benchmark = raw.benchmark.as_deref().unwrap_or("permuted").parse()?;
    let mode: Mode = raw.mode.as_deref().unwrap_or("noracl").parse()?;
    let g = raw.growth.unwrap_or_default();
    let d = GrowthConfig::default();
    let h = HeuristicParams::default();
    let heuristics = HeuristicParams {
        fixed_k: at_least_one("growth.fixed_k", g.fixed_k.unwrap_or(h.fixed_k))?,
        schedule_tasks: g.schedule_tasks.unwrap_or(h.schedule_tasks),
        schedule_k: at_least_one("growth.schedule_k", g.schedule_k.unwrap_or(h.schedule_k))?,
        plateau_window: at_least_one("growth.plateau_window", g.plateau_window.unwrap_or(h.plateau_window))?,
        plateau_tol: g.plateau_tol.unwrap_or(h.plateau_tol),
    };
    if heuristics.plateau_tol.is_nan() || heuristics.plateau_tol < 0.0 {
        return Err(Error::config("growth.plateau_tol", "must be >= 0"));
    }
    let base_init = g.init.unwrap_or(d.init);
    if let (Mode::Ablation(Ablation::Init(s)), Some(explicit)) = (mode, g.init) {
        if s != explicit {
            return Err(Error::config(
                "growth.init",
                format!("`{explicit}` conflicts with mode {mode}"),
            ));
        }
    }
    let (trigger, init) = growth_for_mode(mode, base_init, &heuristics);
    let growth = GrowthConfig {
        gamma: g.gamma.unwrap_or(d.gamma),
        eps: g.eps.unwrap_or(d.eps),
        percentile: g.percentile.unwrap_or(d.percentile),
        cooldown: g.cooldown.unwrap_or(d.cooldown),
        s_init: g.s_init.unwrap_or(d.s_init),
        trigger,
        init,
        max_width: g.max_width,
    };
    growth.validate().map_err(|e| match e {
        Error::Config { key, message } => Error::config(format!("growth.{key}"), message),
        other => other,
    })?;

    let tasks = at_least_one("tasks", raw.tasks.unwrap_or(benchmark.default_tasks()))?;
    if benchmark == Benchmark::BinarySplit && tasks > 5 {
        return Err(Error::config("tasks", "binary_split has at most 5 tasks"));
    }
    let hidden = raw.hidden.unwrap_or_else(|| vec![32, 32]);
    if hidden.is_empty() || hidden.contains(&0) {
        return Err(Error::config("hidden", "need at least one layer, all widths >= 1"));
    }
    let lambda = raw.lambda.unwrap_or(default_lambda(benchmark));
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(Error::config("lambda", format!("{lambda} must be >= 0")));
    }
    let alpha = raw.alpha.unwrap_or(0.9);
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::config("alpha", format!("{alpha} not in (0, 1)")));
    }
    let seeds = raw.seeds.unwrap_or_else(|| (0..5).collect());
    if seeds.is_empty() {
        return Err(Error::config("seeds", "at least one seed required"));
    }
    Ok(ExperimentConfig {
        benchmark,
        tasks,
        hidden,
        mode,
        lambda,
        alpha,
        lr_first: positive("lr_first", raw.lr_first.unwrap_or(0.1))?,
        lr: positive("lr", raw.lr.unwrap_or(5e-3))?,
        epochs_first: at_least_one("epochs_first", raw.epochs_first.unwrap_or(10))?,
        epochs: at_least_one("epochs", raw.epochs.unwrap_or(30))?,
        batch_size: at_least_one("batch_size", raw.batch_size.unwrap_or(256))?,
        clip: positive("clip", raw.clip.unwrap_or(5.0))?,
        seeds,
        data_dir: raw.data_dir.unwrap_or_else(|| PathBuf::from("data/mnist")),
        out_dir: raw.out_dir,
        fisher_batches: at_least_one("fisher_batches", raw.fisher_batches.unwrap_or(5))?,
        probe_size: at_least_one("probe_size", raw.probe_size.unwrap_or(256))?,
        fisher_kind: raw.fisher_kind.unwrap_or_default(),
        growth,
        heuristics,
    })
}

/// Reads a TOML table from disk.
pub fn load_table(path: &Path) -> Result<toml::Table> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.parse::<toml::Table>()
        .map_err(|e| Error::config("config", format!("{}: {}", path.display(), e.message())))
}

/// Sets a dotted key (`growth.gamma`) from its TOML spelling; bare words
/// that are not valid TOML are taken as strings.
pub fn set_key(table: &mut toml::Table, key: &str, raw: &str) -> Result<()> {
    let value = format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()));
    let mut parts: Vec<&str> = key.split('.').collect();
    let last = parts.pop().filter(|s| !s.is_empty()).ok_or_else(|| Error::config(key, "empty key"))?;
    let mut cur = table;
    for p in parts {
        cur = cur
            .entry(p.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()))
            .as_table_mut()
            .ok_or_else(|| Error::config(key, format!("`{p}` is not a table")))?;
    }
    cur.insert(last.to_string(), value);
    Ok(())
}

/// Parses and validates a config file.
pub fn parse_config(path: &Path) -> Result<ExperimentConfig> {
    resolve(load_table(path)?)
}

/// Loads MNIST from `cfg.data_dir` and runs every seed.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentResult> {
    let (train, test) = load_mnist(&cfg.data_dir)?;
    run_with_data(cfg, &train, &test)
}

/// Mean and spread over seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub config_hash: String,
    pub logs: Vec<RunLog>,
}

impl ExperimentResult {
    pub fn completed(&self) -> Vec<&RunSummary> {
        self.logs.iter().map(|l| &l.summary).filter(|s| s.ok()).collect()
    }

    pub fn failed(&self) -> usize {
        self.logs.len() - self.completed().len()
    }

    /// Mean and sample standard deviation of final average accuracy.
    pub fn accuracy_stats(&self) -> (f64, f64) {
        stats(&self.completed().iter().map(|s| s.final_avg_accuracy).collect::<Vec<_>>())
    }

    pub fn param_stats(&self) -> (f64, f64) {
        stats(
            &self
                .completed()
                .iter()
                .map(|s| s.final_param_count as f64)
                .collect::<Vec<_>>(),
        )
    }
}

pub fn stats(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let m = mean(values);
    if values.len() < 2 {
        return (m, 0.0);
    }
    let var = values.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (values.len() - 1) as f64;
    (m, var.sqrt())
}

/// Runs every seed on already loaded source splits. Failing seeds are
/// recorded and do not stop the others; output files are written when
/// `out_dir` is set.
pub fn run_with_data(cfg: &ExperimentConfig, train: &Dataset, test: &Dataset) -> Result<ExperimentResult> {
    let hash = cfg.hash()?;
    let mut logs = Vec::with_capacity(cfg.seeds.len());
    for &seed in &cfg.seeds {
        let stream = build_stream(cfg.benchmark, cfg.tasks, seed, train, test)?;
        let log = run_seed(cfg, &stream, seed, &hash);
        if !log.summary.ok() {
            warn!("seed {seed} failed: {}", log.summary.error.as_deref().unwrap_or("?"));
        }
        if let Some(dir) = cfg.seed_dir(seed) {
            emit_records(&log, &dir)?;
        }
        logs.push(log);
    }
    Ok(ExperimentResult {
        config_hash: hash,
        logs,
    })
}

struct SeedState {
    mlp: GrowableMlp,
    cons: ConsolidationState,
    refs: GrowthRefs,
    records: Vec<MetricsRecord>,
    events: Vec<GrowthEvent>,
    global_epoch: usize,
}

/// Trains one seed on a built stream. Errors end up in the summary.
pub fn run_seed(cfg: &ExperimentConfig, stream: &TaskStream, seed: u64, hash: &str) -> RunLog {
    let mut rng = stream_rng(seed, &[stream::INIT]);
    let mlp = match GrowableMlp::new(stream.input_dim(), &cfg.hidden, stream.num_classes, &mut rng) {
        Ok(m) => m,
        Err(e) => return failed_log(cfg, seed, hash, &cfg.hidden, 0, e.to_string()),
    };
    let initial_widths = mlp.hidden_widths();
    let initial_params = mlp.param_count();
    let cons = match ConsolidationState::new(&mlp, cfg.alpha) {
        Ok(c) => c,
        Err(e) => return failed_log(cfg, seed, hash, &initial_widths, initial_params, e.to_string()),
    };
    let mut st = SeedState {
        refs: GrowthRefs::unset(mlp.num_hidden()),
        mlp,
        cons,
        records: Vec::new(),
        events: Vec::new(),
        global_epoch: 0,
    };
    let result = (0..stream.len()).try_for_each(|t| {
        train_task(cfg, stream, seed, t, &mut st).map_err(|(epoch, e)| format!("task {t} epoch {epoch}: {e}"))
    });
    let n_eff = effective_plastic_count(&st.cons, cfg.lambda);
    let last = st.records.last();
    RunLog {
        summary: RunSummary {
            schema_version: SCHEMA_VERSION,
            seed,
            config_hash: hash.to_string(),
            mode: cfg.mode.to_string(),
            benchmark: cfg.benchmark.to_string(),
            status: if result.is_ok() { "ok" } else { "failed" }.into(),
            error: result.err().map(|e| format!("seed {seed}, {e}")),
            final_avg_accuracy: last.map_or(f64::NAN, |r| r.avg_accuracy),
            final_task_accuracies: last.map(|r| r.task_accuracies.clone()).unwrap_or_default(),
            final_param_count: st.mlp.param_count(),
            initial_param_count: initial_params,
            final_widths: st.mlp.hidden_widths(),
            initial_widths,
            final_n_eff_plastic: n_eff,
            growth_events: st.events.iter().filter(|e| e.outcome == "grown").count(),
        },
        records: st.records,
        events: st.events,
    }
}

fn failed_log(cfg: &ExperimentConfig, seed: u64, hash: &str, widths: &[usize], params: usize, error: String) -> RunLog {
    RunLog {
        records: Vec::new(),
        events: Vec::new(),
        summary: RunSummary {
            schema_version: SCHEMA_VERSION,
            seed,
            config_hash: hash.to_string(),
            mode: cfg.mode.to_string(),
            benchmark: cfg.benchmark.to_string(),
            status: "failed".into(),
            error: Some(format!("seed {seed}: {error}")),
            final_avg_accuracy: f64::NAN,
            final_task_accuracies: Vec::new(),
            final_param_count: params,
            initial_param_count: params,
            final_widths: widths.to_vec(),
            initial_widths: widths.to_vec(),
            final_n_eff_plastic: f64::NAN,
            growth_events: 0,
        },
    }
}

/// The first `n` batches of an epoch's shuffle, as used for Fisher
/// estimates.
fn leading_batches(data: &crate::datasets::TaskData, cfg: &ExperimentConfig, seed: u64, t: usize, epoch: usize) -> Vec<Batch> {
    data.epoch_batches(cfg.batch_size, seed, t, epoch)
        .take(cfg.fisher_batches)
        .collect()
}

fn probe_batch(data: &crate::datasets::TaskData, size: usize, seed: u64, t: usize) -> Batch {
    let mut rng = stream_rng(seed, &[stream::PROBE, t as u64]);
    let n = size.min(data.len());
    let mut idx = sample(&mut rng, data.len(), n).into_vec();
    idx.sort_unstable();
    data.gather(&idx)
}

fn hidden_ed(trace: &ActivationTrace, eps: f64) -> Result<Vec<f64>> {
    trace.hidden.iter().map(|h| compute_ed(h, eps)).collect()
}

type StepError = (usize, Error);

fn train_task(cfg: &ExperimentConfig, stream: &TaskStream, seed: u64, t: usize, st: &mut SeedState) -> std::result::Result<(), StepError> {
    let task = &stream.tasks[t];
    let probe = probe_batch(&task.train, cfg.probe_size, seed, t);
    if t == 0 {
        let trace = st.mlp.forward(&probe.x).map_err(|e| (0, e))?;
        st.refs = GrowthRefs::from_trace(&trace, cfg.growth.eps).map_err(|e| (0, e))?;
    }
    let (lr, epochs) = if t == 0 {
        (cfg.lr_first, cfg.epochs_first)
    } else {
        (cfg.lr, cfg.epochs)
    };
    let mut current_acc = Vec::with_capacity(epochs);

    if cfg.grows() && !cfg.growth.trigger.uses_signals() {
        let widths = st.mlp.hidden_widths();
        let req = ablation_trigger(
            &cfg.growth,
            &EpochContext {
                task: t,
                task_start: true,
                widths: &widths,
                current_task_accuracy: &[],
            },
        );
        apply_growth(cfg, seed, t, 0, &req, None, st).map_err(|e| (0, e))?;
    }

    for epoch in 0..epochs {
        let mut loss_sum = 0.0;
        let mut batches = 0usize;
        for batch in task.train.epoch_batches(cfg.batch_size, seed, t, epoch) {
            let loss = st
                .mlp
                .train_step(&batch.x, &batch.labels, &st.cons, cfg.lambda, lr, cfg.clip)
                .map_err(|e| (epoch, e))?;
            loss_sum += loss;
            batches += 1;
        }

        let task_accuracies = stream.tasks[..=t]
            .iter()
            .map(|k| accuracy(&st.mlp, &k.test))
            .collect::<Result<Vec<_>>>()
            .map_err(|e| (epoch, e))?;
        current_acc.push(*task_accuracies.last().expect("at least one task"));
        let trace = st.mlp.forward(&probe.x).map_err(|e| (epoch, e))?;
        let ed = hidden_ed(&trace, cfg.growth.eps).map_err(|e| (epoch, e))?;

        let grown_before = st.mlp.param_count();
        if cfg.grows() {
            epoch_growth(cfg, task, seed, t, epoch, &trace, &current_acc, st).map_err(|e| (epoch, e))?;
        }
        let grown_units: usize = st
            .events
            .iter()
            .filter(|g| g.global_epoch == st.global_epoch && g.outcome == "grown")
            .map(|g| g.k)
            .sum();
        debug_assert!(grown_units > 0 || st.mlp.param_count() == grown_before);

        let layers = st.mlp.params().layers.len();
        st.records.push(MetricsRecord {
            task: t,
            epoch,
            global_epoch: st.global_epoch,
            avg_accuracy: mean(&task_accuracies),
            task_accuracies,
            param_count: st.mlp.param_count(),
            widths: st.mlp.hidden_widths(),
            ed,
            locked_fraction: (0..layers)
                .map(|l| locked_fraction(&st.cons, cfg.lambda, l, 0.1))
                .collect(),
            n_eff_plastic: effective_plastic_count(&st.cons, cfg.lambda),
            train_loss: loss_sum / batches.max(1) as f64,
            grown: grown_units,
        });
        st.global_epoch += 1;
    }

    let last_epoch = epochs - 1;
    let batches = leading_batches(&task.train, cfg, seed, t, last_epoch);
    let mut frng = stream_rng(seed, &[stream::FISHER, t as u64, u64::MAX]);
    let fisher_t = estimate_fisher_diag(&st.mlp, &batches, cfg.fisher_kind, &mut frng).map_err(|e| (last_epoch, e))?;
    st.cons
        .consolidate_after_task(&fisher_t, &st.mlp)
        .map_err(|e| (last_epoch, e))?;
    let trace = st.mlp.forward(&probe.x).map_err(|e| (last_epoch, e))?;
    st.refs.reset(&trace, cfg.growth.eps).map_err(|e| (last_epoch, e))?;
    let r = st.records.last().expect("epochs >= 1");
    info!(
        "seed {seed} task {} done: avg acc {:.4}, params {}, widths {:?}",
        t + 1,
        r.avg_accuracy,
        r.param_count,
        r.widths
    );
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn epoch_growth(
    cfg: &ExperimentConfig,
    task: &crate::datasets::Task,
    seed: u64,
    t: usize,
    epoch: usize,
    trace: &ActivationTrace,
    current_acc: &[f64],
    st: &mut SeedState,
) -> Result<()> {
    let trigger = &cfg.growth.trigger;
    let signal = trigger.uses_signals();
    if !signal && !matches!(trigger, TriggerVariant::LossPlateau { .. }) {
        return Ok(());
    }
    if st.refs.cooldown_remaining > 0 {
        st.refs.cooldown_remaining -= 1;
        return Ok(());
    }
    let grew = if signal {
        let batches = leading_batches(&task.train, cfg, seed, t, epoch);
        let mut frng = stream_rng(seed, &[stream::FISHER, t as u64, epoch as u64]);
        let fisher = estimate_fisher_diag(&st.mlp, &batches, cfg.fisher_kind, &mut frng)?;
        let per_layer: Vec<Vec<f64>> = (0..st.mlp.num_hidden())
            .map(|l| fisher.layers[l].values().collect())
            .collect();
        let signals = evaluate_growth(trace, &per_layer, &cfg.growth, &st.refs, st.cons.tau())?;
        for s in &signals {
            debug!(
                "task {} epoch {epoch} layer {}: phi {:.4} phi0 {:.4} fisher p{} {:.3e} tau {:.3e} k {}",
                t + 1,
                s.layer,
                s.phi,
                s.phi0,
                cfg.growth.percentile,
                s.fisher_percentile,
                s.tau,
                s.k
            );
        }
        let req: Vec<(usize, usize)> = signals.iter().filter(|s| s.k > 0).map(|s| (s.layer, s.k)).collect();
        apply_growth(cfg, seed, t, epoch, &req, Some(&signals), st)?
    } else {
        let widths = st.mlp.hidden_widths();
        let req = ablation_trigger(
            &cfg.growth,
            &EpochContext {
                task: t,
                task_start: false,
                widths: &widths,
                current_task_accuracy: current_acc,
            },
        );
        apply_growth(cfg, seed, t, epoch, &req, None, st)?
    };
    if grew {
        st.refs.cooldown_remaining = cfg.growth.cooldown;
    }
    Ok(())
}

/// Grows each requested layer, pads the consolidation state and logs the
/// events. Returns whether any layer grew.
fn apply_growth(
    cfg: &ExperimentConfig,
    seed: u64,
    t: usize,
    epoch: usize,
    requests: &[(usize, usize)],
    signals: Option<&[crate::trigger::LayerSignal]>,
    st: &mut SeedState,
) -> Result<bool> {
    let mut grew = false;
    for &(layer, k) in requests {
        let mut rng = stream_rng(seed, &[stream::GROWTH, t as u64, epoch as u64, layer as u64]);
        let outcome = st.mlp.grow_layer(
            layer,
            k,
            cfg.growth.init,
            cfg.growth.s_init,
            cfg.growth.max_width,
            &mut rng,
        )?;
        let outcome = match outcome {
            GrowthOutcome::Grown { .. } => {
                st.cons.pad_for_growth(layer, k)?;
                grew = true;
                "grown".to_string()
            }
            GrowthOutcome::Refused { reason, .. } => {
                info!("seed {seed} task {} layer {layer}: growth refused ({reason})", t + 1);
                format!("refused: {reason}")
            }
        };
        let s = signals.and_then(|s| s.iter().find(|s| s.layer == layer));
        st.events.push(GrowthEvent {
            task: t,
            epoch,
            global_epoch: st.global_epoch,
            layer,
            k,
            width_after: st.mlp.hidden_widths()[layer],
            param_count_after: st.mlp.param_count(),
            phi: s.map(|s| s.phi),
            phi0: s.map(|s| s.phi0),
            fisher_percentile: s.map(|s| s.fisher_percentile),
            tau: s.map(|s| s.tau),
            ed_saturated: s.map(|s| s.ed_saturated),
            fisher_saturated: s.map(|s| s.fisher_saturated),
            outcome,
        });
    }
    Ok(grew)
}
