//! Core library for minor-concentration analysis of linear maps and small
//! neural networks.
//!
//! The crate is organised around one diagnostic: given a linear map, enumerate
//! all `h x h` minors and measure how concentrated their mass is via the
//! L2/L1 ratio. On top of that sit:
//!
//! - [`matrix`]: a dense row-major `f64` matrix with an LU determinant.
//! - [`exterior`]: minor enumeration ([`MinorTable`]), the concentration
//!   statistic ([`mc`]), and grouped row/column variants.
//! - [`ensemble`]: seeded Gaussian baselines for calibrating observed
//!   concentration values.
//! - [`nn`]: a minimal fully-connected network with exact inter-layer
//!   Jacobians and deterministic SGD training.
//! - [`mctrain`]: concentration as a training objective, finite-difference
//!   ascent steps, and interleaved task/concentration training.
//! - [`ka`]: a piecewise-linear staircase embedding of the unit square into
//!   five coordinates, with an iterative construction of the outer function
//!   that represents continuous targets on top of the embedding.
//!
//! All randomness is routed through explicit `u64` seeds and ChaCha8; equal
//! seeds give bit-identical results on every platform.

pub mod ensemble;
pub mod exterior;
pub mod ka;
pub mod matrix;
pub mod mctrain;
pub mod nn;

pub use ensemble::{mc_baseline, random_gaussian_matrix, EnsembleSummary};
pub use ka::{
    build_embedding, build_staircase, check_distinct_plateaus, default_stop_floor,
    embedding_jacobian, good_families, outer_iteration_step, represent, resolution_floor,
    residual_sup, IterationReport, KaEmbedding, OuterFunction, RepresentOptions, Staircase,
    TargetFunction,
};
pub use exterior::{grouped_concentration, mc, minors, GroupAxis, Mc, MinorIndex, MinorTable, McReport};
pub use matrix::Matrix;
pub use mctrain::{
    compare_runs, interleaved_train, mc_gradient, mc_objective, mc_step, InterleaveSchedule,
    McGradient, McObjective, McObjectiveSpec, McStepConfig, RunComparison, RunMetrics,
};
pub use nn::{
    finite_diff_jacobian, init_mlp, jacobian_between, layer_jacobian, train_sgd, Activation,
    ActivationTrace, Mlp, MlpConfig, TrainConfig,
};
