//! Deterministic SGD on mean-squared error.
//!
//! [`SgdDriver`] issues one weight update per call; both plain training and
//! interleaved schedules are built on it, so two runs that share a driver
//! configuration and seed take bit-identical task steps.

use super::{Mlp, NnError};
use crate::matrix::Matrix;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    /// `None` runs full-batch gradient descent in dataset order; `Some(b)`
    /// shuffles each epoch and walks batches of size `b`.
    pub batch_size: Option<usize>,
    /// Seed for the shuffle stream (unused in full-batch mode).
    pub seed: u64,
}

/// Mean-squared-error loss and its gradients for one batch, averaged over
/// batch size and output width. Accumulation order is the batch order.
fn loss_and_grads(
    mlp: &Mlp,
    batch: &[usize],
    data: &[(Vec<f64>, Vec<f64>)],
) -> Result<(f64, Vec<Matrix>, Vec<Vec<f64>>), NnError> {
    let depth = mlp.depth();
    let n_out = mlp.output_dim();
    let norm = 1.0 / (batch.len() * n_out) as f64;
    let mut g_w: Vec<Vec<f64>> = (1..=depth)
        .map(|j| vec![0.0; mlp.weight(j).rows() * mlp.weight(j).cols()])
        .collect();
    let mut g_b: Vec<Vec<f64>> = (1..=depth).map(|j| vec![0.0; mlp.bias(j).len()]).collect();
    let mut loss = 0.0;
    for &idx in batch {
        let (x, t) = &data[idx];
        let trace = mlp.forward(x)?;
        let y = trace.output();
        if t.len() != n_out {
            return Err(NnError::TargetDimension { expected: n_out, got: t.len() });
        }
        let mut delta: Vec<f64> = y
            .iter()
            .zip(t)
            .zip(trace.pre_activation(depth))
            .map(|((yv, tv), &z)| {
                let err = yv - tv;
                loss += err * err * norm;
                2.0 * err * norm * mlp.activation_of(depth).derivative(z)
            })
            .collect();
        for l in (1..=depth).rev() {
            let a_prev = trace.activation(l - 1);
            let w = mlp.weight(l);
            let gw = &mut g_w[l - 1];
            for (b, &d) in delta.iter().enumerate() {
                g_b[l - 1][b] += d;
                let row = b * w.cols();
                for (a, &ap) in a_prev.iter().enumerate() {
                    gw[row + a] += d * ap;
                }
            }
            if l > 1 {
                let act = mlp.activation_of(l - 1);
                let z_prev = trace.pre_activation(l - 1);
                delta = (0..w.cols())
                    .map(|a| {
                        let back: f64 =
                            delta.iter().enumerate().map(|(b, &d)| w.get(b, a) * d).sum();
                        back * act.derivative(z_prev[a])
                    })
                    .collect();
            }
        }
    }
    let g_w = g_w
        .into_iter()
        .enumerate()
        .map(|(l, g)| {
            let w = mlp.weight(l + 1);
            Matrix::from_vec(w.rows(), w.cols(), g).expect("gradient entries finite")
        })
        .collect();
    Ok((loss, g_w, g_b))
}

/// One-update-at-a-time SGD state over a fixed dataset.
pub struct SgdDriver<'a> {
    data: &'a [(Vec<f64>, Vec<f64>)],
    learning_rate: f64,
    batch_size: Option<usize>,
    rng: ChaCha8Rng,
    order: Vec<usize>,
    cursor: usize,
    steps_taken: usize,
    last_batch_len: usize,
}

impl<'a> SgdDriver<'a> {
    pub fn new(
        mlp: &Mlp,
        data: &'a [(Vec<f64>, Vec<f64>)],
        learning_rate: f64,
        batch_size: Option<usize>,
        seed: u64,
    ) -> Result<Self, NnError> {
        if data.is_empty() {
            return Err(NnError::EmptyDataset);
        }
        if !(learning_rate.is_finite() && learning_rate > 0.0) {
            return Err(NnError::BadLearningRate(learning_rate));
        }
        if batch_size == Some(0) {
            return Err(NnError::ZeroBatch);
        }
        for (x, t) in data {
            if x.len() != mlp.input_dim() {
                return Err(NnError::InputDimension { expected: mlp.input_dim(), got: x.len() });
            }
            if t.len() != mlp.output_dim() {
                return Err(NnError::TargetDimension {
                    expected: mlp.output_dim(),
                    got: t.len(),
                });
            }
        }
        Ok(SgdDriver {
            data,
            learning_rate,
            batch_size,
            rng: ChaCha8Rng::seed_from_u64(seed),
            order: (0..data.len()).collect(),
            cursor: 0,
            steps_taken: 0,
            last_batch_len: 0,
        })
    }

    /// Updates per pass over the dataset.
    pub fn steps_per_epoch(&self) -> usize {
        match self.batch_size {
            None => 1,
            Some(b) => self.data.len().div_ceil(b),
        }
    }

    pub fn steps_taken(&self) -> usize {
        self.steps_taken
    }

    /// Applies one SGD update and returns the batch loss measured at the
    /// pre-update weights. The batch this step used is reported alongside
    /// nothing else; callers needing per-epoch aggregates weight by
    /// [`Self::last_batch_len`].
    pub fn step(&mut self, mlp: &mut Mlp) -> Result<f64, NnError> {
        let batch: Vec<usize> = match self.batch_size {
            None => self.order.clone(),
            Some(b) => {
                if self.cursor == 0 {
                    self.order.shuffle(&mut self.rng);
                }
                let end = (self.cursor + b).min(self.data.len());
                let batch = self.order[self.cursor..end].to_vec();
                self.cursor = if end >= self.data.len() { 0 } else { end };
                batch
            }
        };
        self.last_batch_len = batch.len();
        let (loss, g_w, g_b) = loss_and_grads(mlp, &batch, self.data)?;
        if !loss.is_finite() {
            return Err(NnError::NonFiniteLoss { step: self.steps_taken });
        }
        let lr = self.learning_rate;
        for (l, g) in g_w.iter().enumerate() {
            let j = l + 1;
            let w = mlp.weight(j);
            let updated: Vec<f64> = w
                .as_slice()
                .iter()
                .zip(g.as_slice())
                .map(|(wv, gv)| wv - lr * gv)
                .collect();
            if updated.iter().any(|v| !v.is_finite()) {
                return Err(NnError::NonFiniteLoss { step: self.steps_taken });
            }
            mlp.set_weight(j, Matrix::from_vec(w.rows(), w.cols(), updated)?)?;
        }
        for (l, g) in g_b.iter().enumerate() {
            let j = l + 1;
            let updated: Vec<f64> =
                mlp.bias(j).iter().zip(g).map(|(bv, gv)| bv - lr * gv).collect();
            if updated.iter().any(|v| !v.is_finite()) {
                return Err(NnError::NonFiniteLoss { step: self.steps_taken });
            }
            mlp.set_bias(j, updated)?;
        }
        self.steps_taken += 1;
        Ok(loss)
    }

    pub fn last_batch_len(&self) -> usize {
        self.last_batch_len
    }
}

/// Trains in place and returns the per-epoch mean loss (batch losses weighted
/// by batch size, measured at pre-update weights).
pub fn train_sgd(
    mlp: &mut Mlp,
    data: &[(Vec<f64>, Vec<f64>)],
    config: &TrainConfig,
) -> Result<Vec<f64>, NnError> {
    let mut driver = SgdDriver::new(mlp, data, config.learning_rate, config.batch_size, config.seed)?;
    let per_epoch = driver.steps_per_epoch();
    let mut history = Vec::with_capacity(config.epochs);
    for _ in 0..config.epochs {
        let mut weighted = 0.0;
        let mut count = 0usize;
        for _ in 0..per_epoch {
            let loss = driver.step(mlp)?;
            weighted += loss * driver.last_batch_len() as f64;
            count += driver.last_batch_len();
        }
        history.push(weighted / count as f64);
    }
    Ok(history)
}
