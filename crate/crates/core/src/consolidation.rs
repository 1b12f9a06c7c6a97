//! Online EWC state.
//!
//! After each task the per-task Fisher diagonal is blended into an
//! exponential moving average `F̃ ← α·F̃ + (1−α)·F_t`, the anchors are reset to
//! the current parameters, and the per-layer Fisher thresholds `τ_l` used by
//! the growth gate are updated from the mean of `F̃` over each layer.

use rand::distributions::{Distribution, WeightedIndex};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::datasets::Batch;
use crate::error::{Error, Result};
use crate::network::{softmax, softmax_xent, GradientSet, GrowableMlp, ParamSet};

/// Which label the Fisher log-likelihood gradient is taken at.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FisherKind {
    /// Gradient of `log p(y_true | x)`.
    #[default]
    Empirical,
    /// Gradient of `log p(ŷ | x)` with `ŷ` drawn from the model.
    Sampled,
}

/// Per-parameter mean of squared per-sample log-likelihood gradients.
///
/// Per-sample weight gradients are outer products `δ_j h_jᵀ`, so their
/// squares average to `(δ∘δ)(h∘h)ᵀ / N` and the whole batch is handled with
/// one product per layer.
pub fn estimate_fisher_diag<R: Rng + ?Sized>(
    mlp: &GrowableMlp,
    batches: &[Batch],
    kind: FisherKind,
    rng: &mut R,
) -> Result<ParamSet> {
    if batches.is_empty() {
        return Err(Error::invalid("Fisher estimate needs at least one batch"));
    }
    let mut fisher = ParamSet::zeros_like(mlp.params());
    let mut total = 0usize;
    for batch in batches {
        let trace = mlp.forward(&batch.x)?;
        let labels: Vec<usize> = match kind {
            FisherKind::Empirical => batch.labels.clone(),
            FisherKind::Sampled => {
                let probs = softmax(&trace.logits);
                (0..probs.cols())
                    .map(|j| {
                        let dist = WeightedIndex::new(probs.column(j))
                            .map_err(|e| Error::Numeric(format!("softmax sampling: {e}")))?;
                        Ok(dist.sample(rng))
                    })
                    .collect::<Result<_>>()?
            }
        };
        let (_, d_logits) = softmax_xent(&trace.logits, &labels);
        let deltas = mlp.backprop_deltas(&trace, d_logits)?;
        for (l, mut delta) in deltas.into_iter().enumerate() {
            let input = if l == 0 { &batch.x } else { &trace.hidden[l - 1] };
            let mut input_sq = input.clone();
            input_sq.map_inplace(|v| v * v);
            delta.map_inplace(|v| v * v);
            let f = &mut fisher.layers[l];
            crate::linalg::gemm(
                1.0,
                &delta,
                crate::linalg::Trans::No,
                &input_sq,
                crate::linalg::Trans::Yes,
                1.0,
                &mut f.weights,
            )?;
            for (b, s) in f.biases.iter_mut().zip(delta.row_sums()) {
                *b += s;
            }
        }
        total += batch.labels.len();
    }
    fisher.scale(1.0 / total as f64);
    if !fisher.is_finite() {
        return Err(Error::Numeric("non-finite Fisher estimate".into()));
    }
    Ok(fisher)
}

/// Accumulated Fisher, anchors and per-layer thresholds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsolidationState {
    fisher: ParamSet,
    anchors: ParamSet,
    tau: Vec<f64>,
    alpha: f64,
}

impl ConsolidationState {
    /// Zero Fisher, anchors at the current parameters, `τ_l = 0`.
    pub fn new(mlp: &GrowableMlp, alpha: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(Error::invalid(format!("blend factor {alpha} outside (0, 1)")));
        }
        Ok(Self {
            fisher: ParamSet::zeros_like(mlp.params()),
            anchors: mlp.params().clone(),
            tau: vec![0.0; mlp.params().layers.len()],
            alpha,
        })
    }

    pub fn from_parts(fisher: ParamSet, anchors: ParamSet, tau: Vec<f64>, alpha: f64) -> Result<Self> {
        fisher.check_shape(&anchors, "consolidation parts")?;
        if tau.len() != fisher.layers.len() {
            return Err(Error::Shape("one tau per layer required".into()));
        }
        if fisher.values().any(|f| f < 0.0 || !f.is_finite()) {
            return Err(Error::invalid("Fisher entries must be finite and >= 0"));
        }
        Ok(Self {
            fisher,
            anchors,
            tau,
            alpha,
        })
    }

    pub fn fisher(&self) -> &ParamSet {
        &self.fisher
    }

    pub fn anchors(&self) -> &ParamSet {
        &self.anchors
    }

    pub fn tau(&self) -> &[f64] {
        &self.tau
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// Accumulated Fisher of layer `l` (weights then biases).
    pub fn layer_fisher(&self, l: usize) -> Vec<f64> {
        self.fisher.layers[l].values().collect()
    }

    /// Adds `λ·F̃∘(θ − θ*)` to `grad` and returns `(λ/2)·Σ F̃(θ − θ*)²`.
    pub fn add_penalty_grad(&self, params: &ParamSet, lambda: f64, grad: &mut GradientSet) -> Result<f64> {
        params.check_shape(&self.fisher, "penalty")?;
        grad.check_shape(params, "penalty gradient")?;
        if lambda == 0.0 {
            return Ok(0.0);
        }
        let mut value = 0.0;
        for (((g, theta), anchor), f) in grad
            .values_mut()
            .zip(params.values())
            .zip(self.anchors.values())
            .zip(self.fisher.values())
        {
            if f == 0.0 {
                continue;
            }
            let diff = theta - anchor;
            value += f * diff * diff;
            *g += lambda * f * diff;
        }
        Ok(0.5 * lambda * value)
    }

    /// Penalty value and its gradient alone.
    pub fn penalty_and_grad(&self, mlp: &GrowableMlp, lambda: f64) -> Result<(f64, GradientSet)> {
        let mut grad = ParamSet::zeros_like(mlp.params());
        let value = self.add_penalty_grad(mlp.params(), lambda, &mut grad)?;
        Ok((value, grad))
    }

    /// End-of-task update: blend Fisher, move anchors, update thresholds.
    pub fn consolidate_after_task(&mut self, fisher_t: &ParamSet, mlp: &GrowableMlp) -> Result<()> {
        self.fisher.check_shape(fisher_t, "consolidation")?;
        self.fisher.check_shape(mlp.params(), "consolidation")?;
        let a = self.alpha;
        for (acc, f) in self.fisher.values_mut().zip(fisher_t.values()) {
            *acc = a * *acc + (1.0 - a) * f;
        }
        self.anchors = mlp.params().clone();
        for (l, tau) in self.tau.iter_mut().enumerate() {
            let layer = &self.fisher.layers[l];
            let mean = layer.values().sum::<f64>() / layer.len() as f64;
            *tau = a * *tau + (1.0 - a) * mean;
        }
        Ok(())
    }

    /// Zero Fisher and zero anchors for `k` units just added to hidden layer
    /// `l`; `τ` is unchanged.
    pub fn pad_for_growth(&mut self, l: usize, k: usize) -> Result<()> {
        self.fisher.pad_zero(l, k)?;
        self.anchors.pad_zero(l, k)
    }
}
