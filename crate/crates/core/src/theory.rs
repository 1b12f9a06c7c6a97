//! Closed-form dynamics for random pattern association.
//!
//! Each task presents one random unit-norm pattern `u` with a `±1` target.
//! Hidden features are `x = σ(Q u)/√M₀` with `Q` standard normal and `σ`
//! the rectifier shifted and scaled to zero mean and unit variance under the
//! standard Gaussian. Only the linear readout `W` is learned.
//!
//! * Static EWC: the readout minimizes squared error plus an isotropic
//!   penalty of strength `t/M` on unit-normalized features, so the update
//!   coefficient for new information is `1/(t/M + 1)`.
//! * NORACL in the vanishing-prior limit: the pattern triggers growth, old
//!   readout weights stay fixed and the new weights fit the residual by
//!   least squares on the new coordinates.

use std::f64::consts::PI;
use std::fs;
use std::path::Path;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::rng::stream_rng;
use crate::trigger::{compute_ed, growth_size};

pub const NONLINEARITY: &str = "normalized_relu";

/// `(relu(z) − 1/√(2π)) / √(1/2 − 1/(2π))`.
pub fn sigma(z: f64) -> f64 {
    let mean = 1.0 / (2.0 * PI).sqrt();
    let std = (0.5 - 1.0 / (2.0 * PI)).sqrt();
    (z.max(0.0) - mean) / std
}

/// Monte-Carlo mean and variance of `σ(z)` for `z ~ N(0, 1)`.
pub fn sigma_moments<R: Rng + ?Sized>(samples: usize, rng: &mut R) -> (f64, f64) {
    let (mut s, mut s2) = (0.0, 0.0);
    for _ in 0..samples {
        let v = sigma(rng.sample(StandardNormal));
        s += v;
        s2 += v * v;
    }
    let mean = s / samples as f64;
    (mean, s2 / samples as f64 - mean * mean)
}

/// Entries `±1/√d`.
pub fn random_pattern<R: Rng + ?Sized>(d: usize, rng: &mut R) -> Vec<f64> {
    let v = 1.0 / (d as f64).sqrt();
    (0..d).map(|_| if rng.gen::<bool>() { v } else { -v }).collect()
}

pub fn random_target<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    if rng.gen::<bool>() {
        1.0
    } else {
        -1.0
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm_sq(a: &[f64]) -> f64 {
    dot(a, a)
}

/// Fixed random projection with a growable hidden layer.
#[derive(Debug, Clone)]
pub struct RandomFeatureModel {
    q: Matrix,
    m0: usize,
}

impl RandomFeatureModel {
    pub fn new<R: Rng + ?Sized>(m0: usize, d: usize, rng: &mut R) -> Result<Self> {
        if m0 == 0 || d == 0 {
            return Err(Error::invalid("width and pattern dimension must be >= 1"));
        }
        Ok(Self {
            q: Matrix::standard_normal(m0, d, rng),
            m0,
        })
    }

    pub fn width(&self) -> usize {
        self.q.rows()
    }

    pub fn pattern_dim(&self) -> usize {
        self.q.cols()
    }

    /// Adds `k` hidden units with fresh projection rows.
    pub fn grow<R: Rng + ?Sized>(&mut self, k: usize, rng: &mut R) -> Result<()> {
        let rows = Matrix::standard_normal(k, self.q.cols(), rng);
        self.q.append_rows(&rows)
    }

    /// `σ(Q u)/√M₀`.
    pub fn features(&self, u: &[f64]) -> Result<Vec<f64>> {
        if u.len() != self.q.cols() {
            return Err(Error::invalid(format!(
                "pattern of length {} for dimension {}",
                u.len(),
                self.q.cols()
            )));
        }
        let scale = 1.0 / (self.m0 as f64).sqrt();
        Ok((0..self.q.rows())
            .map(|r| sigma(dot(self.q.row(r), u)) * scale)
            .collect())
    }
}

/// New-information coefficient of the static EWC update at task `t`.
pub fn ewc_coefficient(t: usize, m: usize) -> f64 {
    1.0 / (t as f64 / m as f64 + 1.0)
}

/// Exact minimizer of `½(W·x̂ − y)² + ½(t/M)‖W − W_prev‖²` with
/// `x̂ = x/‖x‖`: `W' = W + (y − W·x̂)·x̂/(t/M + 1)`.
pub fn ewc_closed_form_step(w: &[f64], x: &[f64], y: f64, t: usize, m: usize) -> Result<Vec<f64>> {
    if t == 0 {
        return Err(Error::invalid("task index starts at 1"));
    }
    if w.len() != x.len() || w.len() != m {
        return Err(Error::invalid("weights, features and width must agree"));
    }
    let n = norm_sq(x).sqrt();
    if n == 0.0 {
        return Err(Error::Numeric("zero feature vector".into()));
    }
    let xh: Vec<f64> = x.iter().map(|v| v / n).collect();
    let c = ewc_coefficient(t, m) * (y - dot(w, &xh));
    Ok(w.iter().zip(&xh).map(|(wi, xi)| wi + c * xi).collect())
}

/// Per-parameter age in tasks; parameters added for the current task have
/// age zero and carry only the vanishing prior.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GrowthAugmentedMetric {
    ages: Vec<usize>,
}

impl GrowthAugmentedMetric {
    pub fn new(width: usize) -> Self {
        Self { ages: vec![0; width] }
    }

    pub fn width(&self) -> usize {
        self.ages.len()
    }

    pub fn ages(&self) -> &[usize] {
        &self.ages
    }

    pub fn grow(&mut self, k: usize) {
        self.ages.extend(std::iter::repeat_n(0, k));
    }

    /// End of a task: every parameter ages by one.
    pub fn advance(&mut self) {
        self.ages.iter_mut().for_each(|a| *a += 1);
    }

    /// Diagonal penalty weights with prior `eps` on age-zero parameters.
    pub fn lambdas(&self, eps: f64) -> Vec<f64> {
        self.ages
            .iter()
            .map(|&a| if a == 0 { eps } else { a as f64 })
            .collect()
    }

    pub fn new_count(&self) -> usize {
        self.ages.iter().filter(|&&a| a == 0).count()
    }
}

/// The vanishing-prior NORACL update. `w` holds the `M_prev` old weights,
/// `x` the features at the grown width. Old weights are returned
/// unchanged; the new block is `(y − W_old·x_old)·x_new/‖x_new‖²`.
pub fn noracl_closed_form_step(w: &[f64], x: &[f64], y: f64, metric: &GrowthAugmentedMetric) -> Result<Vec<f64>> {
    let m_prev = w.len();
    if x.len() <= m_prev {
        return Err(Error::invalid("no new units: the vanishing-prior limit is undefined"));
    }
    if metric.width() != x.len() || metric.ages()[m_prev..].iter().any(|&a| a != 0) {
        return Err(Error::invalid("metric does not mark exactly the grown units as new"));
    }
    let (x_old, x_new) = x.split_at(m_prev);
    let nn = norm_sq(x_new);
    if nn == 0.0 {
        return Err(Error::Numeric("new units have zero activation".into()));
    }
    let residual = y - dot(w, x_old);
    let mut out = w.to_vec();
    out.extend(x_new.iter().map(|v| residual * v / nn));
    Ok(out)
}

/// How fractional growth sizes are turned into whole units.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GrowthRounding {
    /// Accumulate the raw size and add whole units as they build up.
    #[default]
    Carry,
    /// Round any positive size below one up to one unit.
    RoundUp,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GrowthLawConfig {
    pub m0: usize,
    pub gamma: f64,
    pub tasks: usize,
    pub d: usize,
    pub eps: f64,
    pub rounding: GrowthRounding,
    pub seed: u64,
}

impl Default for GrowthLawConfig {
    fn default() -> Self {
        Self {
            m0: 100,
            gamma: 0.9,
            tasks: 1000,
            d: 64,
            eps: 0.05,
            rounding: GrowthRounding::Carry,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GrowthLawResult {
    /// Width after each task.
    pub widths: Vec<usize>,
    pub mean_increment: f64,
    /// Smallest single-pattern feature norm seen; the ED of one pattern is
    /// `1/M` only while this exceeds `eps`.
    pub min_feature_norm: f64,
}

/// Runs the ED trigger on one fresh pattern per task with the Fisher gate
/// held open, and records the width after each task.
pub fn simulate_growth_law(cfg: &GrowthLawConfig) -> Result<GrowthLawResult> {
    if cfg.tasks == 0 {
        return Err(Error::invalid("at least one task required"));
    }
    if !(cfg.gamma > 0.0 && cfg.gamma < 1.0) {
        return Err(Error::invalid("gamma must lie in (0, 1)"));
    }
    let mut rng = stream_rng(cfg.seed, &[7]);
    let mut model = RandomFeatureModel::new(cfg.m0, cfg.d, &mut rng)?;
    let mut min_norm = f64::INFINITY;
    let mut ed = |model: &RandomFeatureModel, u: &[f64]| -> Result<f64> {
        let x = model.features(u)?;
        min_norm = min_norm.min(norm_sq(&x).sqrt());
        compute_ed(&Matrix::from_vec(x.len(), 1, x)?, cfg.eps)
    };
    let first = random_pattern(cfg.d, &mut rng);
    let mut phi0 = ed(&model, &first)?;
    let mut carry = 0.0;
    let mut widths = Vec::with_capacity(cfg.tasks);
    for t in 0..cfg.tasks {
        let u = if t == 0 { first.clone() } else { random_pattern(cfg.d, &mut rng) };
        let width = model.width();
        let phi = ed(&model, &u)?;
        let threshold = cfg.gamma * phi0;
        let k = if phi > threshold {
            match cfg.rounding {
                GrowthRounding::RoundUp => growth_size(width, phi, threshold),
                GrowthRounding::Carry => {
                    carry += width as f64 * (phi - threshold);
                    let whole = carry.floor();
                    carry -= whole;
                    whole as usize
                }
            }
        } else {
            0
        };
        if k > 0 {
            model.grow(k, &mut rng)?;
        }
        phi0 = ed(&model, &u)?;
        widths.push(model.width());
    }
    let mean_increment = (model.width() - cfg.m0) as f64 / cfg.tasks as f64;
    Ok(GrowthLawResult {
        widths,
        mean_increment,
        min_feature_norm: min_norm,
    })
}

/// Settings for [`verify_theorems`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TheoryConfig {
    pub m0: usize,
    pub d: usize,
    pub tasks: usize,
    pub seeds: Vec<u64>,
    /// Units added per task by the NORACL arm.
    pub k_per_task: usize,
    pub tolerance: f64,
    /// Task counts at which the task-1 error of both arms is reported.
    pub horizons: Vec<usize>,
    pub sigma_samples: usize,
    pub growth_law: GrowthLawConfig,
}

impl Default for TheoryConfig {
    fn default() -> Self {
        Self {
            m0: 8,
            d: 32,
            tasks: 50,
            seeds: (0..5).collect(),
            k_per_task: 8,
            tolerance: 1e-10,
            horizons: vec![1, 2, 5, 10, 20, 50],
            sigma_samples: 1_000_000,
            growth_law: GrowthLawConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Assertion {
    pub name: String,
    pub passed: bool,
    pub max_error: f64,
    pub tolerance: f64,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedTrace {
    pub seed: u64,
    /// `‖W_old' − W‖₂` at each task.
    pub preservation_error: Vec<f64>,
    /// `|W'·x − y|` right after each task's step.
    pub training_error: Vec<f64>,
    /// Largest change of any earlier task's prediction at each task.
    pub prior_prediction_drift: Vec<f64>,
    /// The same drift when old patterns are re-featurized through all
    /// current units instead of their insertion-time features. Reported,
    /// not asserted.
    pub full_feature_drift: Vec<f64>,
    pub noracl_task1_error: Vec<f64>,
    pub static_task1_error: Vec<f64>,
    pub static_coefficient_error: f64,
    pub final_width: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TheoryReport {
    pub nonlinearity: String,
    pub sigma_mean: f64,
    pub sigma_var: f64,
    pub config: TheoryConfig,
    pub horizons: Vec<usize>,
    pub static_task1_error_mean: Vec<f64>,
    pub noracl_task1_error_mean: Vec<f64>,
    pub growth_law: GrowthLawResult,
    pub growth_law_round_up_increment: f64,
    pub seeds: Vec<SeedTrace>,
    pub assertions: Vec<Assertion>,
    pub passed: bool,
}

impl TheoryReport {
    pub fn assertion(&self, name: &str) -> Option<&Assertion> {
        self.assertions.iter().find(|a| a.name == name)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        let json = serde_json::to_string_pretty(self)
            .map_err(|e| Error::invalid(format!("serializing report: {e}")))?;
        fs::write(path, json).map_err(|e| Error::io(path, e))
    }
}

fn run_seed(cfg: &TheoryConfig, seed: u64) -> Result<SeedTrace> {
    let mut rng = stream_rng(seed, &[11]);
    let mut model = RandomFeatureModel::new(cfg.m0, cfg.d, &mut rng)?;
    let init: Vec<f64> = (0..cfg.m0)
        .map(|_| rng.sample::<f64, _>(StandardNormal) / (cfg.m0 as f64).sqrt())
        .collect();
    let max_h = cfg.horizons.iter().copied().max().unwrap_or(0).max(cfg.tasks);
    let patterns: Vec<(Vec<f64>, f64)> = (0..max_h)
        .map(|_| (random_pattern(cfg.d, &mut rng), random_target(&mut rng)))
        .collect();

    // NORACL arm.
    let mut w = init.clone();
    let mut metric = GrowthAugmentedMetric::new(cfg.m0);
    metric.advance();
    let mut seen: Vec<(Vec<f64>, f64)> = Vec::new();
    let mut trace = SeedTrace {
        seed,
        preservation_error: Vec::new(),
        training_error: Vec::new(),
        prior_prediction_drift: Vec::new(),
        full_feature_drift: Vec::new(),
        noracl_task1_error: Vec::new(),
        static_task1_error: Vec::new(),
        static_coefficient_error: 0.0,
        final_width: 0,
    };
    let mut noracl_t1 = Vec::new();
    for (t, (u, y)) in patterns.iter().enumerate() {
        model.grow(cfg.k_per_task, &mut rng)?;
        metric.grow(cfg.k_per_task);
        let x = model.features(u)?;
        let next = noracl_closed_form_step(&w, &x, *y, &metric)?;
        let preserved = next[..w.len()]
            .iter()
            .zip(&w)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        let fit = (dot(&next, &x) - y).abs();
        let mut drift: f64 = 0.0;
        let mut full_drift: f64 = 0.0;
        for (xj, pred) in &seen {
            drift = drift.max((dot(&next[..xj.len()], xj) - pred).abs());
        }
        for ((_, pred), (uj, _)) in seen.iter().zip(&patterns) {
            let now = model.features(uj)?;
            full_drift = full_drift.max((dot(&next, &now) - pred).abs());
        }
        w = next;
        metric.advance();
        seen.push((x.clone(), dot(&w, &x)));
        if t < cfg.tasks {
            trace.preservation_error.push(preserved);
            trace.training_error.push(fit);
            trace.prior_prediction_drift.push(drift);
            trace.full_feature_drift.push(full_drift);
        }
        if t + 1 == cfg.tasks {
            trace.final_width = model.width();
        }
        let (x1, _) = &seen[0];
        noracl_t1.push((dot(&w[..x1.len()], x1) - patterns[0].1).abs());
    }

    // Static EWC arm on the initial width.
    let static_model = RandomFeatureModel::new(cfg.m0, cfg.d, &mut stream_rng(seed, &[12]))?;
    let unit = |u: &[f64]| -> Result<Vec<f64>> {
        let x = static_model.features(u)?;
        let n = norm_sq(&x).sqrt();
        Ok(x.into_iter().map(|v| v / n).collect())
    };
    let x1 = unit(&patterns[0].0)?;
    let mut w = init;
    let mut static_t1 = Vec::new();
    for (t, (u, y)) in patterns.iter().enumerate() {
        let x = unit(u)?;
        let next = ewc_closed_form_step(&w, &x, *y, t + 1, cfg.m0)?;
        let residual = y - dot(&w, &x);
        if residual.abs() > 1e-8 {
            let measured = (dot(&next, &x) - dot(&w, &x)) / residual;
            let expected = ewc_coefficient(t + 1, cfg.m0);
            trace.static_coefficient_error = trace
                .static_coefficient_error
                .max((measured - expected).abs() / expected);
        }
        w = next;
        static_t1.push((dot(&w, &x1) - patterns[0].1).abs());
    }
    for &h in &cfg.horizons {
        trace.static_task1_error.push(static_t1[h - 1]);
        trace.noracl_task1_error.push(noracl_t1[h - 1]);
    }
    Ok(trace)
}

fn check(name: &str, max_error: f64, tolerance: f64, detail: impl Into<String>) -> Assertion {
    Assertion {
        name: name.into(),
        passed: max_error <= tolerance,
        max_error,
        tolerance,
        detail: detail.into(),
    }
}

/// Runs both arms over `cfg.tasks` random tasks per seed and checks the
/// stability and plasticity claims.
pub fn verify_theorems(cfg: &TheoryConfig) -> Result<TheoryReport> {
    if cfg.tasks == 0 || cfg.seeds.is_empty() || cfg.k_per_task == 0 {
        return Err(Error::invalid("tasks, seeds and k_per_task must be nonempty"));
    }
    if cfg.horizons.contains(&0) {
        return Err(Error::invalid("horizons start at 1"));
    }
    let seeds = cfg
        .seeds
        .iter()
        .map(|&s| run_seed(cfg, s))
        .collect::<Result<Vec<_>>>()?;
    let worst = |f: &dyn Fn(&SeedTrace) -> &Vec<f64>| -> f64 {
        seeds
            .iter()
            .flat_map(|s| f(s).iter().copied())
            .fold(0.0, f64::max)
    };
    let tol = cfg.tolerance;
    let mut assertions = vec![
        check(
            "old_weights_preserved",
            worst(&|s| &s.preservation_error),
            0.0,
            "old readout weights compared for exact equality",
        ),
        check("new_task_fit", worst(&|s| &s.training_error), tol, "|W·x − y| after each step"),
        check(
            "prior_predictions_invariant",
            worst(&|s| &s.prior_prediction_drift),
            tol,
            "earlier tasks on their insertion-time features",
        ),
        check(
            "ewc_coefficient_law",
            seeds.iter().map(|s| s.static_coefficient_error).fold(0.0, f64::max),
            1e-12,
            "measured update coefficient vs 1/(t/M + 1), relative",
        ),
        check(
            "ewc_coefficient_halves_at_m",
            (ewc_coefficient(cfg.m0, cfg.m0) - 0.5).abs(),
            0.0,
            "t = M",
        ),
    ];

    let n = seeds.len() as f64;
    let mean_at = |f: &dyn Fn(&SeedTrace) -> &Vec<f64>| -> Vec<f64> {
        (0..cfg.horizons.len())
            .map(|i| seeds.iter().map(|s| f(s)[i]).sum::<f64>() / n)
            .collect()
    };
    let static_mean = mean_at(&|s| &s.static_task1_error);
    let noracl_mean = mean_at(&|s| &s.noracl_task1_error);
    let increasing = static_mean.windows(2).all(|w| w[1] > w[0]);
    let worst_step = static_mean
        .windows(2)
        .map(|w| w[0] - w[1])
        .fold(f64::NEG_INFINITY, f64::max)
        .max(0.0);
    assertions.push(Assertion {
        name: "static_task1_error_increasing".into(),
        passed: increasing,
        max_error: worst_step,
        tolerance: 0.0,
        detail: format!("mean task-1 error over seeds at horizons {:?}: {static_mean:?}", cfg.horizons),
    });
    assertions.push(check(
        "noracl_task1_error_zero",
        noracl_mean.iter().copied().fold(0.0, f64::max),
        tol,
        "mean task-1 error of the NORACL arm at every horizon",
    ));

    let mut rng = stream_rng(cfg.growth_law.seed, &[13]);
    let (sigma_mean, sigma_var) = sigma_moments(cfg.sigma_samples, &mut rng);
    assertions.push(check("sigma_mean", sigma_mean.abs(), 5e-3, "Monte-Carlo mean of σ"));
    assertions.push(check("sigma_variance", (sigma_var - 1.0).abs(), 5e-3, "Monte-Carlo variance of σ"));

    let growth_law = simulate_growth_law(&cfg.growth_law)?;
    let round_up = simulate_growth_law(&GrowthLawConfig {
        rounding: GrowthRounding::RoundUp,
        ..cfg.growth_law.clone()
    })?;
    let target = 1.0 - cfg.growth_law.gamma;
    assertions.push(Assertion {
        name: "growth_law_slope".into(),
        passed: (0.05..=0.2).contains(&growth_law.mean_increment),
        max_error: (growth_law.mean_increment - target).abs(),
        tolerance: 0.1,
        detail: format!(
            "mean width increment {} per task, round-up variant {}",
            growth_law.mean_increment, round_up.mean_increment
        ),
    });
    assertions.push(check(
        "growth_law_feature_norm",
        if growth_law.min_feature_norm > cfg.growth_law.eps { 0.0 } else { 1.0 },
        0.0,
        format!(
            "smallest single-pattern feature norm {} must exceed eps {}",
            growth_law.min_feature_norm, cfg.growth_law.eps
        ),
    ));

    let passed = assertions.iter().all(|a| a.passed);
    Ok(TheoryReport {
        nonlinearity: NONLINEARITY.into(),
        sigma_mean,
        sigma_var,
        config: cfg.clone(),
        horizons: cfg.horizons.clone(),
        static_task1_error_mean: static_mean,
        noracl_task1_error_mean: noracl_mean,
        growth_law,
        growth_law_round_up_increment: round_up.mean_increment,
        seeds,
        assertions,
        passed,
    })
}
