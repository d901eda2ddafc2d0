//! Seeded Gaussian ensembles for calibrating concentration values.
//!
//! A raw concentration number is hard to read on its own; the baseline
//! summarises its distribution over standard-normal matrices of the same
//! shape so observed values can be z-scored against it.

use crate::exterior::{self, ExteriorError};
use crate::matrix::Matrix;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

/// SplitMix64 finaliser; decorrelates per-trial seeds drawn from one master seed.
fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Seed for trial `trial` of an ensemble keyed by `master`. Stable across
/// platforms and releases; rerunning a trial in isolation reproduces it.
pub fn derive_trial_seed(master: u64, trial: u64) -> u64 {
    splitmix64(master ^ trial.wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

/// `rows x cols` matrix of iid standard normals, filled row-major from a
/// ChaCha8 stream keyed by `seed`.
pub fn random_gaussian_matrix(rows: usize, cols: usize, seed: u64) -> Matrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Matrix::from_fn(rows, cols, |_, _| rng.sample::<f64, _>(StandardNormal))
}

/// Distribution summary of concentration over a Gaussian ensemble.
///
/// Statistics cover non-degenerate trials only; `degenerate_trials` counts
/// the excluded ones. Quantiles interpolate linearly between order
/// statistics, so `q05 <= q25 <= q50 <= q75 <= q95` always holds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleSummary {
    pub rows: usize,
    pub cols: usize,
    pub h: usize,
    pub trials: usize,
    pub degenerate_trials: usize,
    pub seed: u64,
    pub mean: f64,
    /// Sample standard deviation (n-1 denominator); 0 for a single trial.
    pub stddev: f64,
    pub min: f64,
    pub max: f64,
    pub q05: f64,
    pub q25: f64,
    pub q50: f64,
    pub q75: f64,
    pub q95: f64,
}

impl EnsembleSummary {
    pub fn z_score(&self, observed: f64) -> Option<f64> {
        if self.stddev > 0.0 {
            Some((observed - self.mean) / self.stddev)
        } else {
            None
        }
    }
}

fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    debug_assert!(!sorted.is_empty() && (0.0..=1.0).contains(&p));
    let pos = p * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let frac = pos - lo as f64;
    if lo + 1 < sorted.len() {
        sorted[lo] * (1.0 - frac) + sorted[lo + 1] * frac
    } else {
        sorted[lo]
    }
}

/// Runs `trials` independent Gaussian trials of shape `rows x cols` at order
/// `h` and summarises the concentration distribution. Also returns the raw
/// per-trial values (degenerate trials as `None`) in trial order.
pub fn mc_baseline_detailed(
    rows: usize,
    cols: usize,
    h: usize,
    trials: usize,
    seed: u64,
) -> Result<(EnsembleSummary, Vec<Option<f64>>), ExteriorError> {
    if trials == 0 {
        return Err(ExteriorError::NoTrials);
    }
    // Surface order/capacity problems before spending time on trials.
    exterior::validate_order(rows, cols, h)?;
    let mut raw = Vec::with_capacity(trials);
    let mut kept = Vec::new();
    for t in 0..trials {
        let m = random_gaussian_matrix(rows, cols, derive_trial_seed(seed, t as u64));
        let v = exterior::mc(&m, h)?.value();
        if let Some(x) = v {
            kept.push(x);
        }
        raw.push(v);
    }
    if kept.is_empty() {
        return Err(ExteriorError::AllDegenerate);
    }
    let n = kept.len();
    let mean = kept.iter().sum::<f64>() / n as f64;
    let stddev = if n > 1 {
        (kept.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64).sqrt()
    } else {
        0.0
    };
    let mut sorted = kept;
    sorted.sort_by(f64::total_cmp);
    let summary = EnsembleSummary {
        rows,
        cols,
        h,
        trials,
        degenerate_trials: trials - n,
        seed,
        mean,
        stddev,
        min: sorted[0],
        max: sorted[n - 1],
        q05: quantile_sorted(&sorted, 0.05),
        q25: quantile_sorted(&sorted, 0.25),
        q50: quantile_sorted(&sorted, 0.50),
        q75: quantile_sorted(&sorted, 0.75),
        q95: quantile_sorted(&sorted, 0.95),
    };
    Ok((summary, raw))
}

/// [`mc_baseline_detailed`] without the raw per-trial values.
pub fn mc_baseline(
    rows: usize,
    cols: usize,
    h: usize,
    trials: usize,
    seed: u64,
) -> Result<EnsembleSummary, ExteriorError> {
    mc_baseline_detailed(rows, cols, h, trials, seed).map(|(s, _)| s)
}
