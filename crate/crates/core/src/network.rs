//! Growable ReLU multilayer perceptron.
//!
//! Inputs are column-batched: a batch of `n` samples is an
//! `input_dim × n` matrix. Hidden layers apply `relu(W h + b)`, the output
//! layer returns raw logits. Training is plain SGD on softmax cross-entropy
//! plus the EWC penalty of a [`ConsolidationState`], with global-norm
//! gradient clipping.

use std::fs;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::consolidation::ConsolidationState;
use crate::error::{Error, Result};
use crate::linalg::{gemm, Matrix, Trans};
use crate::trigger::{make_fanin, InitStrategy};

/// Weights and biases of one layer (or a tensor shaped like them).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerParams {
    /// `fan_out × fan_in`.
    pub weights: Matrix,
    pub biases: Vec<f64>,
}

impl LayerParams {
    pub fn zeros(fan_out: usize, fan_in: usize) -> Self {
        Self {
            weights: Matrix::zeros(fan_out, fan_in),
            biases: vec![0.0; fan_out],
        }
    }

    pub fn len(&self) -> usize {
        self.weights.as_slice().len() + self.biases.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Weights (row-major) followed by biases.
    pub fn values(&self) -> impl Iterator<Item = f64> + '_ {
        self.weights
            .as_slice()
            .iter()
            .chain(self.biases.iter())
            .copied()
    }

    pub fn values_mut(&mut self) -> impl Iterator<Item = &mut f64> + '_ {
        self.weights
            .as_mut_slice()
            .iter_mut()
            .chain(self.biases.iter_mut())
    }

    fn shape(&self) -> (usize, usize) {
        self.weights.shape()
    }
}

/// A full parameter tree: one [`LayerParams`] per layer, output layer last.
///
/// The same type carries model parameters, gradients, Fisher diagonals and
/// anchors, so elementwise operations between them are shape-checked once.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamSet {
    pub layers: Vec<LayerParams>,
}

/// Gradients share the parameter layout.
pub type GradientSet = ParamSet;

impl ParamSet {
    pub fn zeros_like(other: &ParamSet) -> Self {
        Self {
            layers: other
                .layers
                .iter()
                .map(|l| LayerParams::zeros(l.weights.rows(), l.weights.cols()))
                .collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.layers.iter().map(LayerParams::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn same_shape(&self, other: &ParamSet) -> bool {
        self.layers.len() == other.layers.len()
            && self
                .layers
                .iter()
                .zip(&other.layers)
                .all(|(a, b)| a.shape() == b.shape() && a.biases.len() == b.biases.len())
    }

    pub fn check_shape(&self, other: &ParamSet, what: &str) -> Result<()> {
        if self.same_shape(other) {
            Ok(())
        } else {
            Err(Error::Shape(format!(
                "{what}: parameter trees differ ({:?} vs {:?})",
                self.shapes(),
                other.shapes()
            )))
        }
    }

    pub fn shapes(&self) -> Vec<(usize, usize)> {
        self.layers.iter().map(LayerParams::shape).collect()
    }

    pub fn values(&self) -> impl Iterator<Item = f64> + '_ {
        self.layers.iter().flat_map(LayerParams::values)
    }

    pub fn values_mut(&mut self) -> impl Iterator<Item = &mut f64> + '_ {
        self.layers.iter_mut().flat_map(LayerParams::values_mut)
    }

    pub fn norm_sq(&self) -> f64 {
        self.values().map(|v| v * v).sum()
    }

    pub fn scale(&mut self, s: f64) {
        self.values_mut().for_each(|v| *v *= s);
    }

    /// `self += a · other`.
    pub fn axpy(&mut self, a: f64, other: &ParamSet) -> Result<()> {
        self.check_shape(other, "axpy")?;
        for (x, y) in self.values_mut().zip(other.values()) {
            *x += a * y;
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.values().all(f64::is_finite)
    }

    /// Grows hidden layer `l` by `k` units whose every entry is zero: `k` rows
    /// and `k` biases on layer `l`, `k` columns on layer `l + 1`.
    pub fn pad_zero(&mut self, l: usize, k: usize) -> Result<()> {
        if l + 1 >= self.layers.len() {
            return Err(Error::invalid(format!(
                "layer {l} is not a hidden layer of a {}-layer tree",
                self.layers.len()
            )));
        }
        let fan_in = self.layers[l].weights.cols();
        self.layers[l].weights.append_rows(&Matrix::zeros(k, fan_in))?;
        self.layers[l].biases.extend(std::iter::repeat_n(0.0, k));
        self.layers[l + 1].weights.append_zero_cols(k);
        Ok(())
    }
}

/// Per-layer activations of a batch.
#[derive(Debug, Clone)]
pub struct ActivationTrace {
    /// Post-rectifier activations `H_l`, each `M_l × n`.
    pub hidden: Vec<Matrix>,
    /// `output_dim × n`.
    pub logits: Matrix,
}

impl ActivationTrace {
    pub fn batch_size(&self) -> usize {
        self.logits.cols()
    }
}

/// Result of a growth request.
#[derive(Debug, Clone, PartialEq)]
pub enum GrowthOutcome {
    Grown {
        layer: usize,
        k: usize,
        added_params: usize,
    },
    /// Growth was not applied; the model is unchanged.
    Refused { layer: usize, reason: String },
}

/// ReLU MLP with mutable hidden widths.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GrowableMlp {
    input_dim: usize,
    output_dim: usize,
    params: ParamSet,
}

const CHECKPOINT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Checkpoint {
    format_version: u32,
    model: GrowableMlp,
}

impl GrowableMlp {
    /// Weights uniform in `±1/√fan_in`, biases zero.
    pub fn new<R: Rng + ?Sized>(
        input_dim: usize,
        hidden_widths: &[usize],
        output_dim: usize,
        rng: &mut R,
    ) -> Result<Self> {
        if input_dim == 0 || output_dim == 0 || hidden_widths.contains(&0) {
            return Err(Error::invalid(format!(
                "all widths must be >= 1 (input {input_dim}, hidden {hidden_widths:?}, output {output_dim})"
            )));
        }
        let mut dims = Vec::with_capacity(hidden_widths.len() + 2);
        dims.push(input_dim);
        dims.extend_from_slice(hidden_widths);
        dims.push(output_dim);
        let layers = dims
            .windows(2)
            .map(|w| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let bound = 1.0 / (fan_in as f64).sqrt();
                LayerParams {
                    weights: Matrix::from_fn(fan_out, fan_in, |_, _| rng.gen_range(-bound..bound)),
                    biases: vec![0.0; fan_out],
                }
            })
            .collect();
        Ok(Self {
            input_dim,
            output_dim,
            params: ParamSet { layers },
        })
    }

    /// Builds a model from explicit parameters.
    pub fn from_params(params: ParamSet) -> Result<Self> {
        let layers = &params.layers;
        if layers.is_empty() {
            return Err(Error::invalid("a model needs at least one layer"));
        }
        for (i, l) in layers.iter().enumerate() {
            if l.biases.len() != l.weights.rows() {
                return Err(Error::Shape(format!("layer {i}: bias length mismatch")));
            }
            if i > 0 && l.weights.cols() != layers[i - 1].weights.rows() {
                return Err(Error::Shape(format!("layer {i}: fan-in does not chain")));
            }
        }
        if !params.is_finite() {
            return Err(Error::Numeric("non-finite parameter".into()));
        }
        Ok(Self {
            input_dim: layers[0].weights.cols(),
            output_dim: layers[layers.len() - 1].weights.rows(),
            params,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn output_dim(&self) -> usize {
        self.output_dim
    }

    pub fn num_hidden(&self) -> usize {
        self.params.layers.len() - 1
    }

    pub fn hidden_widths(&self) -> Vec<usize> {
        self.params.layers[..self.num_hidden()]
            .iter()
            .map(|l| l.weights.rows())
            .collect()
    }

    pub fn params(&self) -> &ParamSet {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamSet {
        &mut self.params
    }

    /// `Σ_l (M_l·M_{l−1} + M_l)`, output layer included.
    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    pub fn forward(&self, x: &Matrix) -> Result<ActivationTrace> {
        if x.rows() != self.input_dim {
            return Err(Error::invalid(format!(
                "input has {} rows, model expects {}",
                x.rows(),
                self.input_dim
            )));
        }
        let n = x.cols();
        let last = self.params.layers.len() - 1;
        let mut hidden = Vec::with_capacity(last);
        for (i, layer) in self.params.layers.iter().enumerate() {
            let input = if i == 0 { x } else { &hidden[i - 1] };
            let mut z = Matrix::zeros(layer.weights.rows(), n);
            for (r, &b) in layer.biases.iter().enumerate() {
                z.row_mut(r).fill(b);
            }
            gemm(1.0, &layer.weights, Trans::No, input, Trans::No, 1.0, &mut z)?;
            if i == last {
                return Ok(ActivationTrace { hidden, logits: z });
            }
            z.map_inplace(|v| if v > 0.0 { v } else { 0.0 });
            hidden.push(z);
        }
        unreachable!("loop returns at the output layer")
    }

    /// Backpropagates output-layer deltas `d_logits` (`output_dim × n`)
    /// through the rectifiers. Returns the pre-activation delta of every
    /// layer, output layer last.
    pub fn backprop_deltas(&self, trace: &ActivationTrace, d_logits: Matrix) -> Result<Vec<Matrix>> {
        let layers = &self.params.layers;
        let mut deltas = vec![d_logits];
        for l in (1..layers.len()).rev() {
            let upper = deltas.last().expect("non-empty");
            let h = &trace.hidden[l - 1];
            let mut d = Matrix::zeros(h.rows(), h.cols());
            gemm(1.0, &layers[l].weights, Trans::Yes, upper, Trans::No, 0.0, &mut d)?;
            for (dv, hv) in d.as_mut_slice().iter_mut().zip(h.as_slice()) {
                if *hv <= 0.0 {
                    *dv = 0.0;
                }
            }
            deltas.push(d);
        }
        deltas.reverse();
        Ok(deltas)
    }

    /// Mean softmax cross-entropy of a batch and its gradient.
    pub fn cross_entropy_grad(&self, x: &Matrix, labels: &[usize]) -> Result<(f64, GradientSet)> {
        let trace = self.forward(x)?;
        let n = x.cols();
        check_labels(labels, n, self.output_dim)?;
        let (loss, mut d_logits) = softmax_xent(&trace.logits, labels);
        d_logits.scale(1.0 / n as f64);
        let deltas = self.backprop_deltas(&trace, d_logits)?;
        let mut grad = ParamSet::zeros_like(&self.params);
        for (l, delta) in deltas.iter().enumerate() {
            let input = if l == 0 { x } else { &trace.hidden[l - 1] };
            let g = &mut grad.layers[l];
            gemm(1.0, delta, Trans::No, input, Trans::Yes, 0.0, &mut g.weights)?;
            g.biases = delta.row_sums();
        }
        Ok((loss / n as f64, grad))
    }

    /// Total loss (cross-entropy plus the EWC penalty at strength `lambda`)
    /// and its gradient.
    pub fn loss_and_grad(
        &self,
        x: &Matrix,
        labels: &[usize],
        consolidation: &ConsolidationState,
        lambda: f64,
    ) -> Result<(f64, GradientSet)> {
        let (ce, mut grad) = self.cross_entropy_grad(x, labels)?;
        let penalty = consolidation.add_penalty_grad(&self.params, lambda, &mut grad)?;
        Ok((ce + penalty, grad))
    }

    /// One clipped SGD step. Returns the pre-step total loss.
    pub fn train_step(
        &mut self,
        x: &Matrix,
        labels: &[usize],
        consolidation: &ConsolidationState,
        lambda: f64,
        learning_rate: f64,
        clip: f64,
    ) -> Result<f64> {
        let (loss, mut grad) = self.loss_and_grad(x, labels, consolidation, lambda)?;
        if !loss.is_finite() || !grad.is_finite() {
            return Err(Error::Numeric(format!("non-finite loss {loss}")));
        }
        clip_global_norm(&mut grad, clip);
        self.params.axpy(-learning_rate, &grad)?;
        Ok(loss)
    }

    /// Adds `k` units to hidden layer `l` with fan-in drawn by `strategy`,
    /// zero biases and zero fan-out, which leaves the network function
    /// unchanged.
    ///
    /// Growth beyond `max_width`, or an infeasible null-space draw, is
    /// refused and leaves the model untouched.
    pub fn grow_layer<R: Rng + ?Sized>(
        &mut self,
        l: usize,
        k: usize,
        strategy: InitStrategy,
        s_init: f64,
        max_width: Option<usize>,
        rng: &mut R,
    ) -> Result<GrowthOutcome> {
        if l >= self.num_hidden() {
            return Err(Error::invalid(format!(
                "layer {l} is not a hidden layer (model has {})",
                self.num_hidden()
            )));
        }
        if k == 0 {
            return Err(Error::invalid("growth size must be >= 1"));
        }
        let width = self.params.layers[l].weights.rows();
        if let Some(cap) = max_width {
            if width + k > cap {
                let reason = format!("width {width} + {k} exceeds cap {cap}");
                log::info!("growth refused at layer {l}: {reason}");
                return Ok(GrowthOutcome::Refused { layer: l, reason });
            }
        }
        let fanin = match make_fanin(strategy, k, s_init, &self.params.layers[l].weights, rng) {
            Ok(f) => f,
            Err(Error::InfeasibleGrowth(reason)) => {
                log::info!("growth refused at layer {l}: {reason}");
                return Ok(GrowthOutcome::Refused { layer: l, reason });
            }
            Err(e) => return Err(e),
        };
        self.grow_with_fanin(l, &fanin)
    }

    /// Adds one unit per row of `fanin` to hidden layer `l`.
    pub fn grow_with_fanin(&mut self, l: usize, fanin: &Matrix) -> Result<GrowthOutcome> {
        if l >= self.num_hidden() {
            return Err(Error::invalid(format!("layer {l} is not a hidden layer")));
        }
        let before = self.param_count();
        let k = fanin.rows();
        self.params.layers[l].weights.append_rows(fanin)?;
        self.params.layers[l].biases.extend(std::iter::repeat_n(0.0, k));
        self.params.layers[l + 1].weights.append_zero_cols(k);
        Ok(GrowthOutcome::Grown {
            layer: l,
            k,
            added_params: self.param_count() - before,
        })
    }

    /// Predicted class of each column of `x`.
    pub fn predict(&self, x: &Matrix) -> Result<Vec<usize>> {
        let logits = self.forward(x)?.logits;
        Ok((0..logits.cols())
            .map(|j| {
                let mut best = 0;
                for r in 1..logits.rows() {
                    if logits[(r, j)] > logits[(best, j)] {
                        best = r;
                    }
                }
                best
            })
            .collect())
    }

    /// Writes a versioned JSON checkpoint.
    pub fn save_checkpoint(&self, path: &Path) -> Result<()> {
        let ck = Checkpoint {
            format_version: CHECKPOINT_VERSION,
            model: self.clone(),
        };
        let text = serde_json::to_string(&ck).map_err(|e| Error::invalid(e.to_string()))?;
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load_checkpoint(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let ck: Checkpoint = serde_json::from_str(&text).map_err(|e| Error::Format {
            path: path.to_path_buf(),
            offset: 0,
            message: e.to_string(),
        })?;
        if ck.format_version != CHECKPOINT_VERSION {
            return Err(Error::Format {
                path: path.to_path_buf(),
                offset: 0,
                message: format!("unsupported checkpoint version {}", ck.format_version),
            });
        }
        Self::from_params(ck.model.params)
    }
}

fn check_labels(labels: &[usize], n: usize, classes: usize) -> Result<()> {
    if labels.len() != n {
        return Err(Error::invalid(format!("{} labels for {n} samples", labels.len())));
    }
    if let Some(bad) = labels.iter().find(|&&y| y >= classes) {
        return Err(Error::invalid(format!("label {bad} out of range for {classes} classes")));
    }
    Ok(())
}

/// Summed cross-entropy over columns and `softmax − onehot` per column.
pub(crate) fn softmax_xent(logits: &Matrix, labels: &[usize]) -> (f64, Matrix) {
    let (classes, n) = logits.shape();
    let mut probs = Matrix::zeros(classes, n);
    let mut loss = 0.0;
    for j in 0..n {
        let max = (0..classes).map(|r| logits[(r, j)]).fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for r in 0..classes {
            let e = (logits[(r, j)] - max).exp();
            probs[(r, j)] = e;
            sum += e;
        }
        for r in 0..classes {
            probs[(r, j)] /= sum;
        }
        loss += sum.ln() + max - logits[(labels[j], j)];
        probs[(labels[j], j)] -= 1.0;
    }
    (loss, probs)
}

/// Column-wise softmax probabilities.
pub(crate) fn softmax(logits: &Matrix) -> Matrix {
    let (classes, n) = logits.shape();
    let mut probs = logits.clone();
    for j in 0..n {
        let max = (0..classes).map(|r| logits[(r, j)]).fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for r in 0..classes {
            let e = (logits[(r, j)] - max).exp();
            probs[(r, j)] = e;
            sum += e;
        }
        for r in 0..classes {
            probs[(r, j)] /= sum;
        }
    }
    probs
}

/// Rescales `grad` so its global L2 norm is at most `clip`. Returns the
/// norm before clipping.
pub fn clip_global_norm(grad: &mut GradientSet, clip: f64) -> f64 {
    let norm = grad.norm_sq().sqrt();
    if norm > clip && norm > 0.0 {
        grad.scale(clip / norm);
    }
    norm
}
