//! Growth decisions: when, where and how much to grow, and how to
//! initialize the new fan-in.
//!
//! The full trigger grows hidden layer `l` when both
//!
//! * its effective dimension `φ_l` exceeds `γ·φ_l⁰`, the discounted value
//!   measured at the end of the previous task, and
//! * the `p`-th percentile of the current task's Fisher over the layer's
//!   parameters exceeds the layer threshold `τ_l`.
//!
//! It then adds `k_l = ⌊M_l·(φ_l − γ·φ_l⁰)⌋` units, at least one.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{orthonormal_columns, percentile, singular_values, Matrix};
use crate::network::ActivationTrace;

/// Fan-in initialization for new units.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitStrategy {
    /// `s_init` times random orthonormal rows.
    #[default]
    Qr,
    /// i.i.d. standard normal.
    Random,
    /// Normal with std `√(2/fan_in)`.
    He,
    /// Normal with std `√(2/(fan_in + width))`.
    Xavier,
    /// `s_init` times orthonormal rows orthogonal to the existing fan-in rows.
    Nullspace,
    /// All zeros; the unit stays inert.
    Zero,
}

impl InitStrategy {
    pub const ALL: [InitStrategy; 6] = [
        InitStrategy::Qr,
        InitStrategy::Random,
        InitStrategy::He,
        InitStrategy::Xavier,
        InitStrategy::Nullspace,
        InitStrategy::Zero,
    ];

    pub fn name(self) -> &'static str {
        match self {
            InitStrategy::Qr => "qr",
            InitStrategy::Random => "random",
            InitStrategy::He => "he",
            InitStrategy::Xavier => "xavier",
            InitStrategy::Nullspace => "nullspace",
            InitStrategy::Zero => "zero",
        }
    }
}

impl fmt::Display for InitStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for InitStrategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        InitStrategy::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| Error::config("init", format!("unknown init strategy `{s}`")))
    }
}

/// Which rule decides growth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum TriggerVariant {
    /// ED saturation and Fisher saturation.
    Full,
    /// ED saturation alone.
    EdOnly,
    /// Fisher saturation alone, fixed step `max(1, ⌊M_l(1−γ)⌋)`.
    FsatOnly,
    /// `k` units on every hidden layer at the start of every task.
    FixedPerTask { k: usize },
    /// `k` units on every hidden layer at the start of the listed (0-based)
    /// tasks.
    Scheduled { tasks: Vec<usize>, k: usize },
    /// Fixed-step growth on every hidden layer once current-task accuracy
    /// improves by less than `tol` over `window` epochs.
    LossPlateau { window: usize, tol: f64 },
}

impl TriggerVariant {
    pub fn name(&self) -> &'static str {
        match self {
            TriggerVariant::Full => "full",
            TriggerVariant::EdOnly => "ed_only",
            TriggerVariant::FsatOnly => "fsat_only",
            TriggerVariant::FixedPerTask { .. } => "fixed_per_task",
            TriggerVariant::Scheduled { .. } => "scheduled",
            TriggerVariant::LossPlateau { .. } => "loss_plateau",
        }
    }

    /// Variants driven by the per-epoch ED/Fisher signals.
    pub fn uses_signals(&self) -> bool {
        matches!(
            self,
            TriggerVariant::Full | TriggerVariant::EdOnly | TriggerVariant::FsatOnly
        )
    }
}

/// Growth hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GrowthConfig {
    /// ED discount `γ ∈ (0, 1)`.
    pub gamma: f64,
    /// Singular-value threshold `ε > 0`.
    pub eps: f64,
    /// Fisher percentile `p ∈ [0, 100]`.
    pub percentile: f64,
    /// Epochs without growth evaluation after a growth event.
    pub cooldown: usize,
    /// Fan-in scale for the QR and null-space strategies.
    pub s_init: f64,
    pub trigger: TriggerVariant,
    pub init: InitStrategy,
    pub max_width: Option<usize>,
}

impl Default for GrowthConfig {
    fn default() -> Self {
        Self {
            gamma: 0.9,
            eps: 0.05,
            percentile: 25.0,
            cooldown: 3,
            s_init: 0.2,
            trigger: TriggerVariant::Full,
            init: InitStrategy::Qr,
            max_width: None,
        }
    }
}

impl GrowthConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(Error::config("gamma", format!("{} not in (0, 1)", self.gamma)));
        }
        if self.eps.is_nan() || self.eps <= 0.0 {
            return Err(Error::config("eps", format!("{} must be > 0", self.eps)));
        }
        if !(0.0..=100.0).contains(&self.percentile) {
            return Err(Error::config(
                "percentile",
                format!("{} not in [0, 100]", self.percentile),
            ));
        }
        if self.s_init.is_nan() || self.s_init <= 0.0 {
            return Err(Error::config("s_init", format!("{} must be > 0", self.s_init)));
        }
        match &self.trigger {
            TriggerVariant::FixedPerTask { k } | TriggerVariant::Scheduled { k, .. } if *k == 0 => {
                return Err(Error::config("growth_k", "must be >= 1"));
            }
            TriggerVariant::LossPlateau { window, tol } if *window == 0 || tol.is_nan() || *tol < 0.0 => {
                return Err(Error::config("plateau_window", "window >= 1 and tol >= 0 required"));
            }
            _ => {}
        }
        Ok(())
    }

    /// Step size used by the Fisher-only and plateau variants.
    pub fn fixed_step(&self, width: usize) -> usize {
        ((width as f64 * (1.0 - self.gamma)).floor() as usize).max(1)
    }
}

/// Reference ED per hidden layer and the shared cooldown counter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GrowthRefs {
    pub phi0: Vec<Option<f64>>,
    pub cooldown_remaining: usize,
}

impl GrowthRefs {
    pub fn unset(num_hidden: usize) -> Self {
        Self {
            phi0: vec![None; num_hidden],
            cooldown_remaining: 0,
        }
    }

    /// References measured on `trace`.
    pub fn from_trace(trace: &ActivationTrace, eps: f64) -> Result<Self> {
        let mut refs = Self::unset(trace.hidden.len());
        refs.reset(trace, eps)?;
        Ok(refs)
    }

    /// End-of-task reset: `φ⁰_l ← φ_l` on the given trace, cooldown cleared.
    pub fn reset(&mut self, trace: &ActivationTrace, eps: f64) -> Result<()> {
        self.phi0 = trace
            .hidden
            .iter()
            .map(|h| compute_ed(h, eps).map(Some))
            .collect::<Result<_>>()?;
        self.cooldown_remaining = 0;
        Ok(())
    }

    /// Keeps references for layers that already have one and appends
    /// nothing; growth does not touch them.
    pub fn is_set(&self) -> bool {
        self.phi0.iter().all(Option::is_some)
    }
}

/// `post_task_reset` as a free function.
pub fn post_task_reset(refs: &GrowthRefs, trace: &ActivationTrace, eps: f64) -> Result<GrowthRefs> {
    let mut next = refs.clone();
    next.reset(trace, eps)?;
    Ok(next)
}

/// Normalized effective dimension: the fraction of singular values of
/// `H/√n` above `eps`.
pub fn compute_ed(h: &Matrix, eps: f64) -> Result<f64> {
    let n = h.cols();
    let sv = singular_values(h, 1.0 / (n as f64).sqrt())?;
    let count = sv.iter().filter(|&&s| s > eps).count();
    Ok(count as f64 / h.rows() as f64)
}

/// `Percentile(values, p) > τ`.
pub fn fisher_gate(values: &[f64], p: f64, tau: f64) -> Result<bool> {
    Ok(percentile(values, p)? > tau)
}

/// Growth size with the round-up rule: `⌊M(φ − γφ⁰)⌋`, raised to 1 when the
/// raw value lies in `(0, 1)`. Zero when the margin is not positive.
pub fn growth_size(width: usize, phi: f64, threshold: f64) -> usize {
    let raw = width as f64 * (phi - threshold);
    if raw <= 0.0 {
        0
    } else {
        (raw.floor() as usize).max(1)
    }
}

/// Signals recorded for one hidden layer at one evaluation.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LayerSignal {
    pub layer: usize,
    pub width: usize,
    pub phi: f64,
    pub phi0: f64,
    pub ed_saturated: bool,
    pub fisher_percentile: f64,
    pub tau: f64,
    pub fisher_saturated: bool,
    pub k: usize,
}

/// Evaluates the signal-driven variants (full, ED-only, Fisher-only) on
/// one epoch's measurements.
///
/// `fisher_curr[l]` holds the current-task Fisher of hidden layer `l`'s
/// parameters, `taus[l]` its threshold.
pub fn evaluate_growth(
    trace: &ActivationTrace,
    fisher_curr: &[Vec<f64>],
    cfg: &GrowthConfig,
    refs: &GrowthRefs,
    taus: &[f64],
) -> Result<Vec<LayerSignal>> {
    if !cfg.trigger.uses_signals() {
        return Err(Error::invalid(format!(
            "variant {} is not signal driven",
            cfg.trigger.name()
        )));
    }
    if !refs.is_set() || refs.phi0.len() != trace.hidden.len() {
        return Err(Error::InvalidState("reference ED not set for every hidden layer".into()));
    }
    if fisher_curr.len() < trace.hidden.len() || taus.len() < trace.hidden.len() {
        return Err(Error::invalid("one Fisher vector and tau per hidden layer required"));
    }
    let mut out = Vec::with_capacity(trace.hidden.len());
    for (l, h) in trace.hidden.iter().enumerate() {
        let width = h.rows();
        let phi = compute_ed(h, cfg.eps)?;
        let phi0 = refs.phi0[l].expect("checked above");
        let threshold = cfg.gamma * phi0;
        let fisher_percentile = percentile(&fisher_curr[l], cfg.percentile)?;
        let ed_saturated = phi > threshold;
        let fisher_saturated = fisher_percentile > taus[l];
        let k = match cfg.trigger {
            TriggerVariant::Full if ed_saturated && fisher_saturated => growth_size(width, phi, threshold),
            TriggerVariant::EdOnly if ed_saturated => growth_size(width, phi, threshold),
            TriggerVariant::FsatOnly if fisher_saturated => cfg.fixed_step(width),
            _ => 0,
        };
        out.push(LayerSignal {
            layer: l,
            width,
            phi,
            phi0,
            ed_saturated,
            fisher_percentile,
            tau: taus[l],
            fisher_saturated,
            k,
        });
    }
    Ok(out)
}

/// Where in the run a heuristic trigger is being asked.
#[derive(Debug, Clone)]
pub struct EpochContext<'a> {
    /// 0-based task index.
    pub task: usize,
    /// `true` before the first epoch of a task.
    pub task_start: bool,
    pub widths: &'a [usize],
    /// Current-task accuracy after each completed epoch of this task.
    pub current_task_accuracy: &'a [f64],
}

/// Growth requested by the heuristic variants (fixed, scheduled, plateau).
/// Signal-driven variants return nothing here.
pub fn ablation_trigger(cfg: &GrowthConfig, ctx: &EpochContext<'_>) -> Vec<(usize, usize)> {
    let all = |k: usize| ctx.widths.iter().enumerate().map(|(l, _)| (l, k)).collect();
    match &cfg.trigger {
        TriggerVariant::FixedPerTask { k } if ctx.task_start => all(*k),
        TriggerVariant::Scheduled { tasks, k } if ctx.task_start && tasks.contains(&ctx.task) => all(*k),
        TriggerVariant::LossPlateau { window, tol } if !ctx.task_start => {
            let acc = ctx.current_task_accuracy;
            if acc.len() > *window && acc[acc.len() - 1] - acc[acc.len() - 1 - window] < *tol {
                ctx.widths
                    .iter()
                    .enumerate()
                    .map(|(l, &w)| (l, cfg.fixed_step(w)))
                    .collect()
            } else {
                Vec::new()
            }
        }
        _ => Vec::new(),
    }
}

/// Fan-in rows (`k × fan_in`) for `k` new units of a layer whose current
/// incoming weights are `existing` (`width × fan_in`).
pub fn make_fanin<R: Rng + ?Sized>(
    strategy: InitStrategy,
    k: usize,
    s_init: f64,
    existing: &Matrix,
    rng: &mut R,
) -> Result<Matrix> {
    if k == 0 {
        return Err(Error::invalid("fan-in for zero units"));
    }
    let (width, fan_in) = existing.shape();
    let normal = |std: f64, rng: &mut R| -> Matrix {
        let dist = Normal::new(0.0, std).expect("positive std");
        Matrix::from_fn(k, fan_in, |_, _| dist.sample(rng))
    };
    match strategy {
        InitStrategy::Qr => {
            // More units than input dimensions: stack independent bases.
            let mut rows = Matrix::zeros(0, fan_in);
            let mut left = k;
            while left > 0 {
                let take = left.min(fan_in);
                let q = orthonormal_columns(fan_in, take, rng)?;
                rows.append_rows(&q.transpose())?;
                left -= take;
            }
            rows.scale(s_init);
            Ok(rows)
        }
        InitStrategy::Random => Ok(normal(1.0, rng)),
        InitStrategy::He => Ok(normal((2.0 / fan_in as f64).sqrt(), rng)),
        InitStrategy::Xavier => Ok(normal((2.0 / (fan_in + width) as f64).sqrt(), rng)),
        InitStrategy::Nullspace => nullspace_rows(existing, k, s_init, rng),
        InitStrategy::Zero => Ok(Matrix::zeros(k, fan_in)),
    }
}

const RANK_TOL: f64 = 1e-10;

/// Orthonormal rows orthogonal to the row space of `existing`, scaled by
/// `s_init`.
fn nullspace_rows<R: Rng + ?Sized>(existing: &Matrix, k: usize, s_init: f64, rng: &mut R) -> Result<Matrix> {
    let fan_in = existing.cols();
    let mut basis: Vec<Vec<f64>> = Vec::new();
    for r in 0..existing.rows() {
        let row = existing.row(r).to_vec();
        if let Some(v) = orthogonalize(row, &basis) {
            basis.push(v);
        }
    }
    let rank = basis.len();
    if rank + k > fan_in {
        return Err(Error::InfeasibleGrowth(format!(
            "null space has dimension {} but {k} units were requested",
            fan_in - rank
        )));
    }
    let mut out = Matrix::zeros(0, fan_in);
    let mut attempts = 0;
    while out.rows() < k {
        attempts += 1;
        if attempts > 10 * k + 10 {
            return Err(Error::Numeric("null-space sampling failed to find independent rows".into()));
        }
        let draw = Matrix::standard_normal(1, fan_in, rng).into_vec();
        if let Some(v) = orthogonalize(draw, &basis) {
            let scaled: Vec<f64> = v.iter().map(|x| x * s_init).collect();
            out.append_rows(&Matrix::from_vec(1, fan_in, scaled)?)?;
            basis.push(v);
        }
    }
    Ok(out)
}

/// Twice-iterated Gram–Schmidt against an orthonormal basis. Returns the
/// normalized remainder, or `None` if it is numerically dependent.
fn orthogonalize(mut v: Vec<f64>, basis: &[Vec<f64>]) -> Option<Vec<f64>> {
    let original = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if original == 0.0 {
        return None;
    }
    for _ in 0..2 {
        for b in basis {
            let dot: f64 = v.iter().zip(b).map(|(x, y)| x * y).sum();
            v.iter_mut().zip(b).for_each(|(x, y)| *x -= dot * y);
        }
    }
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm <= RANK_TOL * original.max(1.0) {
        return None;
    }
    v.iter_mut().for_each(|x| *x /= norm);
    Some(v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream_rng;

    fn trace_of(h: Matrix) -> ActivationTrace {
        let n = h.cols();
        ActivationTrace {
            hidden: vec![h],
            logits: Matrix::zeros(1, n),
        }
    }

    #[test]
    fn ed_examples() {
        assert_eq!(compute_ed(&Matrix::zeros(4, 10), 0.05).unwrap(), 0.0);
        let m = 6;
        let mut h = Matrix::identity(m);
        h.scale((m as f64).sqrt());
        assert_eq!(compute_ed(&h, 0.05).unwrap(), 1.0);
        // Rank one with leading singular value 2.
        let n = 25;
        let mut col = [0.0; 16];
        col[3] = 2.0;
        let h = Matrix::from_fn(16, n, |r, _| col[r]);
        assert_eq!(compute_ed(&h, 0.05).unwrap(), 1.0 / 16.0);
    }

    #[test]
    fn gate_examples() {
        assert!(fisher_gate(&[1e-9, 2.0], 25.0, 0.0).unwrap());
        assert!(!fisher_gate(&[0.0, 0.0, 0.0], 25.0, 0.0).unwrap());
        assert!(!fisher_gate(&[0.1, 0.2, 0.3, 0.4], 25.0, 0.15).unwrap());
    }

    #[test]
    fn sizing_examples() {
        assert_eq!(growth_size(32, 0.95, 0.90), 1);
        assert_eq!(growth_size(32, 0.91, 0.90), 1);
        assert_eq!(growth_size(32, 1.0, 0.5), 16);
        assert_eq!(growth_size(32, 0.5, 0.5), 0);
    }

    fn saturated_setup() -> (ActivationTrace, GrowthRefs) {
        let m = 8;
        let mut h = Matrix::identity(m);
        h.scale((m as f64).sqrt());
        let refs = GrowthRefs {
            phi0: vec![Some(0.5)],
            cooldown_remaining: 0,
        };
        (trace_of(h), refs)
    }

    #[test]
    fn conjunction_blocks_without_fisher() {
        let (trace, refs) = saturated_setup();
        let cfg = GrowthConfig::default();
        let sig = evaluate_growth(&trace, &[vec![0.0; 10]], &cfg, &refs, &[0.0]).unwrap();
        assert!(sig[0].ed_saturated && !sig[0].fisher_saturated);
        assert_eq!(sig[0].k, 0);
        let sig = evaluate_growth(&trace, &[vec![1.0; 10]], &cfg, &refs, &[0.0]).unwrap();
        // ⌊8·(1 − 0.45)⌋ = 4
        assert_eq!(sig[0].k, 4);
    }

    #[test]
    fn ed_only_ignores_fisher_gate() {
        let (trace, refs) = saturated_setup();
        let cfg = GrowthConfig {
            trigger: TriggerVariant::EdOnly,
            ..GrowthConfig::default()
        };
        let sig = evaluate_growth(&trace, &[vec![0.0; 10]], &cfg, &refs, &[1.0]).unwrap();
        assert_eq!(sig[0].k, 4);
    }

    #[test]
    fn fsat_only_uses_fixed_step() {
        let trace = trace_of(Matrix::zeros(32, 4));
        let refs = GrowthRefs {
            phi0: vec![Some(1.0)],
            cooldown_remaining: 0,
        };
        let cfg = GrowthConfig {
            trigger: TriggerVariant::FsatOnly,
            ..GrowthConfig::default()
        };
        let sig = evaluate_growth(&trace, &[vec![1.0; 4]], &cfg, &refs, &[0.5]).unwrap();
        assert!(!sig[0].ed_saturated);
        assert_eq!(sig[0].k, 3);
    }

    #[test]
    fn unset_refs_are_an_error() {
        let trace = trace_of(Matrix::zeros(3, 3));
        let err = evaluate_growth(
            &trace,
            &[vec![1.0]],
            &GrowthConfig::default(),
            &GrowthRefs::unset(1),
            &[0.0],
        );
        assert!(matches!(err, Err(Error::InvalidState(_))));
    }

    #[test]
    fn reset_is_deterministic() {
        let (trace, refs) = saturated_setup();
        let a = post_task_reset(&refs, &trace, 0.05).unwrap();
        let b = post_task_reset(&a, &trace, 0.05).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.phi0, vec![Some(1.0)]);
    }

    #[test]
    fn fixed_per_task_totals() {
        let cfg = GrowthConfig {
            trigger: TriggerVariant::FixedPerTask { k: 4 },
            ..GrowthConfig::default()
        };
        let widths = [32, 32];
        let added: usize = (0..10)
            .flat_map(|task| {
                ablation_trigger(
                    &cfg,
                    &EpochContext {
                        task,
                        task_start: true,
                        widths: &widths,
                        current_task_accuracy: &[],
                    },
                )
            })
            .map(|(_, k)| k)
            .sum();
        assert_eq!(added, 80);
    }

    #[test]
    fn schedule_fires_only_on_listed_tasks() {
        let cfg = GrowthConfig {
            trigger: TriggerVariant::Scheduled {
                tasks: vec![0, 5, 15, 25],
                k: 8,
            },
            ..GrowthConfig::default()
        };
        let fired: Vec<usize> = (0..10)
            .filter(|&task| {
                !ablation_trigger(
                    &cfg,
                    &EpochContext {
                        task,
                        task_start: true,
                        widths: &[16],
                        current_task_accuracy: &[],
                    },
                )
                .is_empty()
            })
            .collect();
        assert_eq!(fired, vec![0, 5]);
    }

    #[test]
    fn plateau_needs_a_full_window() {
        let cfg = GrowthConfig {
            trigger: TriggerVariant::LossPlateau {
                window: 3,
                tol: 0.002,
            },
            ..GrowthConfig::default()
        };
        let ctx = |acc: &'static [f64]| EpochContext {
            task: 1,
            task_start: false,
            widths: &[32, 32],
            current_task_accuracy: acc,
        };
        assert!(ablation_trigger(&cfg, &ctx(&[0.5, 0.5, 0.5])).is_empty());
        assert_eq!(
            ablation_trigger(&cfg, &ctx(&[0.5, 0.501, 0.501, 0.501])),
            vec![(0, 3), (1, 3)]
        );
        assert!(ablation_trigger(&cfg, &ctx(&[0.5, 0.6, 0.7, 0.8])).is_empty());
    }

    #[test]
    fn fanin_strategies_have_expected_structure() {
        let mut rng = stream_rng(1, &[]);
        let existing = Matrix::standard_normal(5, 12, &mut rng);
        let qr = make_fanin(InitStrategy::Qr, 2, 0.2, &existing, &mut rng).unwrap();
        let dot: f64 = qr.row(0).iter().zip(qr.row(1)).map(|(a, b)| a * b).sum();
        assert!(dot.abs() < 1e-10);
        let ns = make_fanin(InitStrategy::Nullspace, 4, 0.2, &existing, &mut rng).unwrap();
        for i in 0..4 {
            for r in 0..5 {
                let d: f64 = ns.row(i).iter().zip(existing.row(r)).map(|(a, b)| a * b).sum();
                assert!(d.abs() < 1e-8);
            }
        }
        let z = make_fanin(InitStrategy::Zero, 3, 0.2, &existing, &mut rng).unwrap();
        assert!(z.as_slice().iter().all(|&v| v == 0.0));
        assert_eq!(z.shape(), (3, 12));
    }

    #[test]
    fn nullspace_exhaustion_is_infeasible() {
        let mut rng = stream_rng(2, &[]);
        let existing = Matrix::standard_normal(10, 12, &mut rng);
        assert!(matches!(
            make_fanin(InitStrategy::Nullspace, 3, 0.2, &existing, &mut rng),
            Err(Error::InfeasibleGrowth(_))
        ));
    }

    #[test]
    fn qr_handles_more_units_than_inputs() {
        let mut rng = stream_rng(3, &[]);
        let existing = Matrix::zeros(4, 3);
        let f = make_fanin(InitStrategy::Qr, 5, 0.2, &existing, &mut rng).unwrap();
        assert_eq!(f.shape(), (5, 3));
    }

    #[test]
    fn config_validation() {
        assert!(GrowthConfig::default().validate().is_ok());
        let bad = GrowthConfig {
            gamma: 1.5,
            ..GrowthConfig::default()
        };
        assert!(matches!(bad.validate(), Err(Error::Config { key, .. }) if key == "gamma"));
        assert_eq!("nullspace".parse::<InitStrategy>().unwrap(), InitStrategy::Nullspace);
        assert!("bogus".parse::<InitStrategy>().is_err());
    }
}
