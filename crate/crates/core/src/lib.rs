//! Continual learning for growable multilayer perceptrons.
//!
//! The engine trains a ReLU MLP on a stream of domain-incremental tasks with
//! an online EWC penalty, and grows hidden layers on demand. A layer grows
//! when two signals agree: the effective dimension of its activations has
//! risen past a discounted reference, and the Fisher information of the
//! current task shows that its existing parameters are already important.
//! New neurons get orthogonal fan-in, zero fan-out and zero Fisher, so the
//! network function is unchanged at insertion and the new weights are fully
//! plastic.
//!
//! Module map:
//!
//! * [`linalg`]: dense matrices, QR-based orthonormal columns, Jacobi
//!   singular values, nearest-rank percentiles.
//! * [`network`]: the growable MLP, backpropagation, clipped SGD.
//! * [`consolidation`]: Fisher estimation and the online EWC state.
//! * [`trigger`]: effective dimension, Fisher gate, growth sizing and the
//!   ablation variants.
//! * [`datasets`]: IDX loading and the permuted / rotated / binary-split
//!   task streams.
//! * [`diagnostics`]: accuracy, plasticity metrics and CSV/JSON emission.
//! * [`theory`]: closed-form dynamics for random pattern association.
//! * [`runner`]: configuration and the end-to-end training loop.
//!
//! See `examples/` for one runnable program per capability.

pub mod consolidation;
pub mod datasets;
pub mod diagnostics;
mod error;
pub mod linalg;
pub mod network;
pub mod rng;
pub mod runner;
pub mod theory;
pub mod trigger;

pub use consolidation::{ConsolidationState, FisherKind};
pub use datasets::{Batch, Benchmark, Dataset, TaskStream};
pub use diagnostics::MetricsRecord;
pub use error::{Error, Result};
pub use linalg::Matrix;
pub use network::{ActivationTrace, GrowableMlp, GrowthOutcome, ParamSet};
pub use runner::{ExperimentConfig, Mode, RunSummary};
pub use trigger::{GrowthConfig, GrowthRefs, InitStrategy, TriggerVariant};
