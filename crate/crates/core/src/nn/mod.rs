//! Minimal fully-connected networks with exact Jacobians.
//!
//! Layer `j` (1-based, `1..=L`) computes `z_j = W_j a_{j-1} + b_j` and
//! `a_j = act_j(z_j)`, with `a_0` the input. Weights are Xavier-uniform at
//! init (bound `sqrt(6/(n_in+n_out))`), biases start at zero, and all
//! randomness comes from a ChaCha8 stream keyed by the config seed, so equal
//! configs give bit-identical networks.
//!
//! Jacobian orientation is fixed throughout: rows index source-layer units,
//! columns index target-layer units, so entry `(a, b)` is the derivative of
//! target unit `b` with respect to source unit `a`, and composition is plain
//! left-to-right matrix product.

mod jacobian;
mod train;

pub use jacobian::{finite_diff_jacobian, jacobian_between, layer_jacobian};
pub use train::{train_sgd, SgdDriver, TrainConfig};

use crate::matrix::{Matrix, MatrixError};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum NnError {
    #[error("need at least an input and an output layer, got {0} layer sizes")]
    TooFewLayers(usize),
    #[error("layer {index} has width 0")]
    ZeroWidthLayer { index: usize },
    #[error("expected {expected} activations for {layers} layer sizes, got {got}")]
    ActivationCount { expected: usize, got: usize, layers: usize },
    #[error("input has dimension {got}, network expects {expected}")]
    InputDimension { expected: usize, got: usize },
    #[error("target has dimension {got}, network outputs {expected}")]
    TargetDimension { expected: usize, got: usize },
    #[error("layer index {layer} out of range (network has layers 0..={max})")]
    LayerOutOfRange { layer: usize, max: usize },
    #[error("need source layer < target layer, got {i} and {j}")]
    BadLayerPair { i: usize, j: usize },
    #[error("finite-difference step must be positive and finite, got {step}")]
    BadStep { step: f64 },
    #[error("training needs a non-empty dataset")]
    EmptyDataset,
    #[error("batch size must be at least 1")]
    ZeroBatch,
    #[error("learning rate must be positive and finite, got {0}")]
    BadLearningRate(f64),
    #[error("non-finite loss at update step {step}; training diverged")]
    NonFiniteLoss { step: usize },
    #[error("checkpoint kind {got:?} is not a network checkpoint")]
    CheckpointKind { got: String },
    #[error("checkpoint is inconsistent: {0}")]
    CheckpointShape(String),
    #[error(transparent)]
    Matrix(#[from] MatrixError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Identity,
    Tanh,
    Softplus,
}

impl Activation {
    #[inline]
    pub fn eval(self, z: f64) -> f64 {
        match self {
            Activation::Identity => z,
            Activation::Tanh => z.tanh(),
            // max(z,0) + ln(1+exp(-|z|)): overflow-free for large |z|.
            Activation::Softplus => z.max(0.0) + (-z.abs()).exp().ln_1p(),
        }
    }

    #[inline]
    pub fn derivative(self, z: f64) -> f64 {
        match self {
            Activation::Identity => 1.0,
            Activation::Tanh => {
                let t = z.tanh();
                1.0 - t * t
            }
            Activation::Softplus => {
                // Logistic sigmoid, evaluated on the stable side.
                if z >= 0.0 {
                    1.0 / (1.0 + (-z).exp())
                } else {
                    let e = z.exp();
                    e / (1.0 + e)
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpConfig {
    /// Widths `n_0..n_L`, input first.
    pub layer_sizes: Vec<usize>,
    /// One activation per computed layer (`layer_sizes.len() - 1` of them).
    pub activations: Vec<Activation>,
    /// Seed for weight initialisation.
    pub seed: u64,
}

impl MlpConfig {
    pub fn validate(&self) -> Result<(), NnError> {
        if self.layer_sizes.len() < 2 {
            return Err(NnError::TooFewLayers(self.layer_sizes.len()));
        }
        if let Some(ix) = self.layer_sizes.iter().position(|&n| n == 0) {
            return Err(NnError::ZeroWidthLayer { index: ix });
        }
        if self.activations.len() != self.layer_sizes.len() - 1 {
            return Err(NnError::ActivationCount {
                expected: self.layer_sizes.len() - 1,
                got: self.activations.len(),
                layers: self.layer_sizes.len(),
            });
        }
        Ok(())
    }
}

/// A fully-connected network. `weights[l]` is the `n_{l+1} x n_l` forward map
/// of computed layer `l+1`; `biases[l]` matches its output width.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    config: MlpConfig,
    weights: Vec<Matrix>,
    biases: Vec<Vec<f64>>,
}

/// Builds a network with Xavier-uniform weights and zero biases.
pub fn init_mlp(config: &MlpConfig) -> Result<Mlp, NnError> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut weights = Vec::new();
    let mut biases = Vec::new();
    for l in 0..config.layer_sizes.len() - 1 {
        let (n_in, n_out) = (config.layer_sizes[l], config.layer_sizes[l + 1]);
        let bound = (6.0 / (n_in + n_out) as f64).sqrt();
        // Row-major fill: output unit by output unit.
        let w = Matrix::from_fn(n_out, n_in, |_, _| rng.random_range(-bound..bound));
        weights.push(w);
        biases.push(vec![0.0; n_out]);
    }
    Ok(Mlp { config: config.clone(), weights, biases })
}

/// Pre- and post-activation values for every layer of one forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct ActivationTrace {
    /// `pre[l]` is `z_{l+1}`, the pre-activation of computed layer `l+1`.
    pre: Vec<Vec<f64>>,
    /// `post[j]` is `a_j`; `post[0]` is the input.
    post: Vec<Vec<f64>>,
}

impl ActivationTrace {
    pub fn input(&self) -> &[f64] {
        &self.post[0]
    }

    pub fn output(&self) -> &[f64] {
        self.post.last().expect("trace has layers")
    }

    /// Activation value of layer `j` (0 = input).
    pub fn activation(&self, j: usize) -> &[f64] {
        &self.post[j]
    }

    /// Pre-activation of computed layer `j` (`1..=L`).
    pub fn pre_activation(&self, j: usize) -> &[f64] {
        &self.pre[j - 1]
    }

    pub fn depth(&self) -> usize {
        self.pre.len()
    }
}

impl Mlp {
    pub fn config(&self) -> &MlpConfig {
        &self.config
    }

    /// Number of computed layers `L`.
    pub fn depth(&self) -> usize {
        self.weights.len()
    }

    pub fn layer_width(&self, j: usize) -> usize {
        self.config.layer_sizes[j]
    }

    pub fn input_dim(&self) -> usize {
        self.config.layer_sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.config.layer_sizes.last().expect("validated config")
    }

    /// Forward weight matrix of computed layer `j` (`1..=L`), shape
    /// `n_j x n_{j-1}`.
    pub fn weight(&self, j: usize) -> &Matrix {
        assert!((1..=self.depth()).contains(&j), "layer {j} out of range");
        &self.weights[j - 1]
    }

    pub fn bias(&self, j: usize) -> &[f64] {
        assert!((1..=self.depth()).contains(&j), "layer {j} out of range");
        &self.biases[j - 1]
    }

    pub fn set_weight(&mut self, j: usize, w: Matrix) -> Result<(), NnError> {
        let cur = self.weight(j);
        if (w.rows(), w.cols()) != (cur.rows(), cur.cols()) {
            return Err(NnError::CheckpointShape(format!(
                "layer {j} weight must be {}x{}, got {}x{}",
                cur.rows(),
                cur.cols(),
                w.rows(),
                w.cols()
            )));
        }
        self.weights[j - 1] = w;
        Ok(())
    }

    pub fn set_bias(&mut self, j: usize, b: Vec<f64>) -> Result<(), NnError> {
        if b.len() != self.bias(j).len() || b.iter().any(|v| !v.is_finite()) {
            return Err(NnError::CheckpointShape(format!(
                "layer {j} bias must have {} finite entries",
                self.bias(j).len()
            )));
        }
        self.biases[j - 1] = b;
        Ok(())
    }

    pub(crate) fn weight_entry_mut(&mut self, j: usize, row: usize, col: usize) -> WeightSlot<'_> {
        WeightSlot { m: &mut self.weights[j - 1], row, col }
    }

    pub fn activation_of(&self, j: usize) -> Activation {
        assert!((1..=self.depth()).contains(&j));
        self.config.activations[j - 1]
    }

    /// One forward pass, recording every pre- and post-activation.
    pub fn forward(&self, x: &[f64]) -> Result<ActivationTrace, NnError> {
        if x.len() != self.input_dim() {
            return Err(NnError::InputDimension { expected: self.input_dim(), got: x.len() });
        }
        let mut post = vec![x.to_vec()];
        let mut pre = Vec::with_capacity(self.depth());
        for l in 0..self.depth() {
            let a = &post[l];
            let w = &self.weights[l];
            let mut z = self.biases[l].clone();
            for (b, zb) in z.iter_mut().enumerate() {
                let row = w.row(b);
                *zb += row.iter().zip(a).map(|(wv, av)| wv * av).sum::<f64>();
            }
            let act = self.config.activations[l];
            post.push(z.iter().map(|&v| act.eval(v)).collect());
            pre.push(z);
        }
        Ok(ActivationTrace { pre, post })
    }

    /// Runs layers `i+1..=j` starting from an activation value at layer `i`.
    pub(crate) fn propagate(&self, i: usize, a_i: &[f64], j: usize) -> Vec<f64> {
        debug_assert!(i < j && j <= self.depth());
        debug_assert_eq!(a_i.len(), self.layer_width(i));
        let mut a = a_i.to_vec();
        for l in i..j {
            let w = &self.weights[l];
            let act = self.config.activations[l];
            let mut next = Vec::with_capacity(w.rows());
            for b in 0..w.rows() {
                let z = self.biases[l][b]
                    + w.row(b).iter().zip(&a).map(|(wv, av)| wv * av).sum::<f64>();
                next.push(act.eval(z));
            }
            a = next;
        }
        a
    }
}

pub(crate) struct WeightSlot<'a> {
    m: &'a mut Matrix,
    row: usize,
    col: usize,
}

impl WeightSlot<'_> {
    pub(crate) fn get(&self) -> f64 {
        self.m.get(self.row, self.col)
    }

    pub(crate) fn set(&mut self, v: f64) {
        self.m.set(self.row, self.col, v);
    }
}

/// Serialisable snapshot of a network. Weights are row-major per layer; the
/// `kind` tag lets mixed artifact directories be loaded safely.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpCheckpoint {
    pub kind: String,
    pub layer_sizes: Vec<usize>,
    pub activations: Vec<Activation>,
    pub seed: u64,
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<Vec<f64>>,
}

pub const CHECKPOINT_KIND_MLP: &str = "mlp";

impl MlpCheckpoint {
    pub fn from_mlp(mlp: &Mlp) -> MlpCheckpoint {
        MlpCheckpoint {
            kind: CHECKPOINT_KIND_MLP.to_string(),
            layer_sizes: mlp.config.layer_sizes.clone(),
            activations: mlp.config.activations.clone(),
            seed: mlp.config.seed,
            weights: mlp.weights.iter().map(|w| w.as_slice().to_vec()).collect(),
            biases: mlp.biases.clone(),
        }
    }

    pub fn to_mlp(&self) -> Result<Mlp, NnError> {
        if self.kind != CHECKPOINT_KIND_MLP {
            return Err(NnError::CheckpointKind { got: self.kind.clone() });
        }
        let config = MlpConfig {
            layer_sizes: self.layer_sizes.clone(),
            activations: self.activations.clone(),
            seed: self.seed,
        };
        config.validate()?;
        let depth = config.layer_sizes.len() - 1;
        if self.weights.len() != depth || self.biases.len() != depth {
            return Err(NnError::CheckpointShape(format!(
                "expected {depth} weight and bias blocks, got {} and {}",
                self.weights.len(),
                self.biases.len()
            )));
        }
        let mut weights = Vec::new();
        for l in 0..depth {
            let (n_in, n_out) = (config.layer_sizes[l], config.layer_sizes[l + 1]);
            let w = Matrix::from_vec(n_out, n_in, self.weights[l].clone()).map_err(|e| {
                NnError::CheckpointShape(format!("layer {} weights: {e}", l + 1))
            })?;
            if self.biases[l].len() != n_out {
                return Err(NnError::CheckpointShape(format!(
                    "layer {} bias has {} entries, expected {n_out}",
                    l + 1,
                    self.biases[l].len()
                )));
            }
            if let Some(bad) = self.biases[l].iter().find(|v| !v.is_finite()) {
                return Err(NnError::CheckpointShape(format!(
                    "layer {} bias entry {bad} is not finite",
                    l + 1
                )));
            }
            weights.push(w);
        }
        Ok(Mlp { config, weights, biases: self.biases.clone() })
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(self).expect("checkpoint serialises")
    }

    pub fn from_json_str(s: &str) -> Result<MlpCheckpoint, NnError> {
        serde_json::from_str(s).map_err(|e| NnError::CheckpointShape(e.to_string()))
    }
}
