//! Minor concentration as a training objective.
//!
//! The objective is the mean concentration of an inter-layer Jacobian over a
//! fixed set of probe points. Its gradient with respect to a chosen set of
//! weight layers is estimated by central finite differences, and an ascent
//! step `w += delta' * g` can be interleaved with ordinary task training:
//! `k` task steps, then one concentration step, repeating. With
//! `delta' = 0` the interleaved run takes bit-identical task steps to plain
//! SGD, which pins down that the machinery itself does not perturb training.

use crate::exterior::{self, ExteriorError, Mc};
use crate::matrix::Matrix;
use crate::nn::{jacobian_between, Mlp, MlpConfig, NnError, SgdDriver};
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use thiserror::Error;

/// Default relative scale for finite-difference weight perturbations.
pub const DEFAULT_FD_STEP: f64 = 1e-4;

#[derive(Debug, Error)]
pub enum McTrainError {
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Exterior(#[from] ExteriorError),
    #[error("objective needs at least one probe point")]
    NoProbePoints,
    #[error("probe point {index} has dimension {got}, network expects {expected}")]
    ProbeDimension { expected: usize, got: usize, index: usize },
    #[error("concentration objective is degenerate at the current weights")]
    DegenerateObjective,
    #[error("objective became degenerate while perturbing layer {layer} entry ({row},{col})")]
    DegenerateProbe { layer: usize, row: usize, col: usize },
    #[error("parameter scope is empty")]
    EmptyScope,
    #[error("parameter scope layer {layer} out of range 1..={max}")]
    ScopeLayerOutOfRange { layer: usize, max: usize },
    #[error("parameter scope must be strictly increasing layer indices")]
    ScopeNotSortedUnique,
    #[error("finite-difference step must be positive and finite, got {0}")]
    BadFdStep(f64),
    #[error("delta' must be finite, got {0}")]
    BadDeltaPrime(f64),
    #[error("schedule is invalid: {0}")]
    BadSchedule(String),
    #[error("gradient does not match the network at layer {layer}")]
    GradientShape { layer: usize },
    #[error("comparison needs at least 2 runs, got {0}")]
    FewRuns(usize),
    #[error("runs have different record counts: {lens:?}")]
    RecordLengthMismatch { lens: Vec<usize> },
    #[error("malformed run metrics: {0}")]
    MalformedMetrics(String),
}

/// Which Jacobian to concentrate, and where to probe it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McObjectiveSpec {
    pub source_layer: usize,
    pub target_layer: usize,
    pub minor_order: usize,
    pub probe_points: Vec<Vec<f64>>,
}

impl McObjectiveSpec {
    pub fn validate(&self, mlp: &Mlp) -> Result<(), McTrainError> {
        if self.target_layer > mlp.depth() {
            return Err(NnError::LayerOutOfRange {
                layer: self.target_layer,
                max: mlp.depth(),
            }
            .into());
        }
        if self.source_layer >= self.target_layer {
            return Err(NnError::BadLayerPair { i: self.source_layer, j: self.target_layer }.into());
        }
        if self.probe_points.is_empty() {
            return Err(McTrainError::NoProbePoints);
        }
        for (index, p) in self.probe_points.iter().enumerate() {
            if p.len() != mlp.input_dim() {
                return Err(McTrainError::ProbeDimension {
                    expected: mlp.input_dim(),
                    got: p.len(),
                    index,
                });
            }
        }
        exterior::validate_order(
            mlp.layer_width(self.source_layer),
            mlp.layer_width(self.target_layer),
            self.minor_order,
        )?;
        Ok(())
    }
}

/// Objective value: mean concentration over the non-degenerate probe points.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McObjective {
    pub value: Mc,
    pub probe_count: usize,
    /// Probes whose Jacobian had all minors exactly zero; excluded from the mean.
    pub degenerate_points: usize,
}

pub fn mc_objective(mlp: &Mlp, spec: &McObjectiveSpec) -> Result<McObjective, McTrainError> {
    spec.validate(mlp)?;
    let mut sum = 0.0;
    let mut kept = 0usize;
    for p in &spec.probe_points {
        let jac = jacobian_between(mlp, p, spec.source_layer, spec.target_layer)?;
        match exterior::mc(&jac, spec.minor_order)? {
            Mc::Value(v) => {
                sum += v;
                kept += 1;
            }
            Mc::Degenerate => {}
        }
    }
    let probe_count = spec.probe_points.len();
    let value = if kept == 0 { Mc::Degenerate } else { Mc::Value(sum / kept as f64) };
    Ok(McObjective { value, probe_count, degenerate_points: probe_count - kept })
}

/// How a concentration ascent step is taken.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McStepConfig {
    pub delta_prime: f64,
    /// Weight layers the gradient is taken over; strictly increasing indices
    /// in `1..=L`.
    pub parameter_scope: Vec<usize>,
    /// Per-entry perturbation is `fd_step * (1 + |w|)`.
    pub fd_step: f64,
}

impl McStepConfig {
    /// Default scope: only the weight layer feeding the objective's target.
    pub fn for_target(spec: &McObjectiveSpec, delta_prime: f64) -> McStepConfig {
        McStepConfig {
            delta_prime,
            parameter_scope: vec![spec.target_layer],
            fd_step: DEFAULT_FD_STEP,
        }
    }

    pub fn validate(&self, mlp: &Mlp) -> Result<(), McTrainError> {
        if !self.delta_prime.is_finite() {
            return Err(McTrainError::BadDeltaPrime(self.delta_prime));
        }
        if !(self.fd_step.is_finite() && self.fd_step > 0.0) {
            return Err(McTrainError::BadFdStep(self.fd_step));
        }
        if self.parameter_scope.is_empty() {
            return Err(McTrainError::EmptyScope);
        }
        if self.parameter_scope.windows(2).any(|w| w[0] >= w[1]) {
            return Err(McTrainError::ScopeNotSortedUnique);
        }
        for &layer in &self.parameter_scope {
            if layer == 0 || layer > mlp.depth() {
                return Err(McTrainError::ScopeLayerOutOfRange { layer, max: mlp.depth() });
            }
        }
        Ok(())
    }
}

/// Finite-difference gradient of the objective, one block per scoped layer.
#[derive(Debug, Clone, PartialEq)]
pub struct McGradient {
    pub layers: Vec<(usize, Matrix)>,
}

impl McGradient {
    pub fn norm(&self) -> f64 {
        self.layers
            .iter()
            .flat_map(|(_, m)| m.as_slice())
            .map(|v| v * v)
            .sum::<f64>()
            .sqrt()
    }
}

/// Central-difference gradient of [`mc_objective`] over the scoped weights.
/// The network itself is never modified; perturbations run on a scratch copy.
pub fn mc_gradient(
    mlp: &Mlp,
    spec: &McObjectiveSpec,
    cfg: &McStepConfig,
) -> Result<McGradient, McTrainError> {
    spec.validate(mlp)?;
    cfg.validate(mlp)?;
    let base = mc_objective(mlp, spec)?;
    if base.value.is_degenerate() {
        return Err(McTrainError::DegenerateObjective);
    }
    let mut scratch = mlp.clone();
    let mut layers = Vec::with_capacity(cfg.parameter_scope.len());
    for &layer in &cfg.parameter_scope {
        let (rows, cols) = (mlp.weight(layer).rows(), mlp.weight(layer).cols());
        let mut entries = vec![0.0; rows * cols];
        for r in 0..rows {
            for c in 0..cols {
                let mut slot = scratch.weight_entry_mut(layer, r, c);
                let w0 = slot.get();
                let step = cfg.fd_step * (1.0 + w0.abs());
                slot.set(w0 + step);
                let plus = mc_objective(&scratch, spec)?;
                let mut slot = scratch.weight_entry_mut(layer, r, c);
                slot.set(w0 - step);
                let minus = mc_objective(&scratch, spec)?;
                let mut slot = scratch.weight_entry_mut(layer, r, c);
                slot.set(w0);
                let (pv, mv) = match (plus.value.value(), minus.value.value()) {
                    (Some(p), Some(m)) => (p, m),
                    _ => return Err(McTrainError::DegenerateProbe { layer, row: r, col: c }),
                };
                entries[r * cols + c] = (pv - mv) / (2.0 * step);
            }
        }
        let grad = Matrix::from_vec(rows, cols, entries).expect("finite gradient entries");
        layers.push((layer, grad));
    }
    Ok(McGradient { layers })
}

/// Ascent step `w += delta' * g` on the scoped layers. `delta' = 0` leaves
/// every bit of the network untouched.
pub fn mc_step(mlp: &mut Mlp, grad: &McGradient, delta_prime: f64) -> Result<(), McTrainError> {
    if !delta_prime.is_finite() {
        return Err(McTrainError::BadDeltaPrime(delta_prime));
    }
    if delta_prime == 0.0 {
        return Ok(());
    }
    for (layer, g) in &grad.layers {
        if *layer == 0 || *layer > mlp.depth() {
            return Err(McTrainError::GradientShape { layer: *layer });
        }
        let w = mlp.weight(*layer);
        if (w.rows(), w.cols()) != (g.rows(), g.cols()) {
            return Err(McTrainError::GradientShape { layer: *layer });
        }
        let updated: Vec<f64> = w
            .as_slice()
            .iter()
            .zip(g.as_slice())
            .map(|(wv, gv)| wv + delta_prime * gv)
            .collect();
        let m = Matrix::from_vec(w.rows(), w.cols(), updated).map_err(NnError::from)?;
        mlp.set_weight(*layer, m)?;
    }
    Ok(())
}

/// `k` task steps, then one concentration step, repeating.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InterleaveSchedule {
    /// `k`: task steps between consecutive concentration steps.
    pub task_steps_per_mc: usize,
    /// Total task steps over the whole run.
    pub total_task_steps: usize,
    pub learning_rate: f64,
    pub batch_size: Option<usize>,
    /// Shuffle seed for minibatch mode.
    pub seed: u64,
}

impl InterleaveSchedule {
    pub fn validate(&self) -> Result<(), McTrainError> {
        if self.task_steps_per_mc == 0 {
            return Err(McTrainError::BadSchedule("task_steps_per_mc must be >= 1".into()));
        }
        if self.total_task_steps == 0 {
            return Err(McTrainError::BadSchedule("total_task_steps must be >= 1".into()));
        }
        Ok(())
    }
}

/// One task step of an interleaved run. `delta_prime_applied` is set exactly
/// on the steps where a concentration step ran; a step where the gradient was
/// degenerate instead sets `mc_step_skipped`. The concentration value is
/// measured after everything that happened in the step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    pub task_loss: f64,
    pub mc_value: Mc,
    pub degenerate_points: usize,
    pub delta_prime_applied: Option<f64>,
    pub mc_step_skipped: bool,
}

/// Everything a single interleaved run produced, with its full configuration
/// echoed so runs can be compared and replayed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub net_config: MlpConfig,
    pub objective: McObjectiveSpec,
    pub step_config: McStepConfig,
    pub schedule: InterleaveSchedule,
    pub records: Vec<StepRecord>,
}

impl RunMetrics {
    pub fn final_loss(&self) -> f64 {
        self.records.last().expect("runs have at least one step").task_loss
    }

    pub fn final_mc(&self) -> Mc {
        self.records.last().expect("runs have at least one step").mc_value
    }

    /// First 1-based step whose task loss is at or below `threshold`.
    pub fn steps_to_loss(&self, threshold: f64) -> Option<usize> {
        self.records.iter().find(|r| r.task_loss <= threshold).map(|r| r.step)
    }

    pub fn to_csv_string(&self) -> String {
        let mut out =
            String::from("step,task_loss,mc_value,degenerate_points,delta_prime_applied,mc_step_skipped\n");
        for r in &self.records {
            let mc = r.mc_value.value().map_or(String::new(), |v| format!("{v:.16e}"));
            let dp = r.delta_prime_applied.map_or(String::new(), |v| format!("{v:.16e}"));
            let _ = writeln!(
                out,
                "{},{:.16e},{},{},{},{}",
                r.step, r.task_loss, mc, r.degenerate_points, dp, r.mc_step_skipped
            );
        }
        out
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(self).expect("run metrics serialise")
    }

    pub fn from_json_str(s: &str) -> Result<RunMetrics, McTrainError> {
        serde_json::from_str(s).map_err(|e| McTrainError::MalformedMetrics(e.to_string()))
    }
}

/// Runs the interleaved schedule in place. Task steps are driven by the same
/// machinery as plain SGD; a degenerate concentration gradient skips that one
/// concentration step, flags the record, and training continues.
pub fn interleaved_train(
    mlp: &mut Mlp,
    data: &[(Vec<f64>, Vec<f64>)],
    spec: &McObjectiveSpec,
    step_cfg: &McStepConfig,
    schedule: &InterleaveSchedule,
) -> Result<RunMetrics, McTrainError> {
    spec.validate(mlp)?;
    step_cfg.validate(mlp)?;
    schedule.validate()?;
    let net_config = mlp.config().clone();
    let mut driver =
        SgdDriver::new(mlp, data, schedule.learning_rate, schedule.batch_size, schedule.seed)?;
    let mut records = Vec::with_capacity(schedule.total_task_steps);
    for step in 1..=schedule.total_task_steps {
        let task_loss = driver.step(mlp)?;
        let boundary = step % schedule.task_steps_per_mc == 0;
        let mut applied = None;
        let mut skipped = false;
        if boundary {
            match mc_gradient(mlp, spec, step_cfg) {
                Ok(g) => {
                    mc_step(mlp, &g, step_cfg.delta_prime)?;
                    applied = Some(step_cfg.delta_prime);
                }
                Err(McTrainError::DegenerateObjective)
                | Err(McTrainError::DegenerateProbe { .. }) => {
                    skipped = true;
                }
                Err(e) => return Err(e),
            }
        }
        let obj = mc_objective(mlp, spec)?;
        records.push(StepRecord {
            step,
            task_loss,
            mc_value: obj.value,
            degenerate_points: obj.degenerate_points,
            delta_prime_applied: applied,
            mc_step_skipped: skipped,
        });
    }
    Ok(RunMetrics {
        net_config,
        objective: spec.clone(),
        step_config: step_cfg.clone(),
        schedule: schedule.clone(),
        records,
    })
}

/// Side-by-side summary of interleaved runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunComparison {
    pub run_count: usize,
    /// True when everything except `delta_prime` and the shuffle seed agrees.
    pub configs_match: bool,
    /// Names of configuration fields that differ beyond delta_prime/seed.
    pub mismatches: Vec<String>,
    pub seeds: Vec<u64>,
    pub seeds_equal: bool,
    pub delta_primes: Vec<f64>,
    pub loss_threshold: f64,
    pub steps_to_loss_threshold: Vec<Option<usize>>,
    pub final_losses: Vec<f64>,
    pub final_mcs: Vec<Mc>,
    /// Largest aligned per-step loss difference over all run pairs.
    pub max_pairwise_loss_diff: f64,
    /// Largest aligned per-step concentration difference over run pairs where
    /// both values exist.
    pub max_pairwise_mc_diff: f64,
    /// Aligned steps where one run was degenerate and another was not.
    pub degenerate_disagreements: usize,
}

pub fn compare_runs(runs: &[RunMetrics], loss_threshold: f64) -> Result<RunComparison, McTrainError> {
    if runs.len() < 2 {
        return Err(McTrainError::FewRuns(runs.len()));
    }
    let lens: Vec<usize> = runs.iter().map(|r| r.records.len()).collect();
    if lens.iter().any(|&l| l != lens[0] || l == 0) {
        return Err(McTrainError::RecordLengthMismatch { lens });
    }
    let first = &runs[0];
    let mut mismatches = Vec::new();
    for (i, r) in runs.iter().enumerate().skip(1) {
        if r.net_config != first.net_config {
            mismatches.push(format!("net_config (run 0 vs run {i})"));
        }
        if r.objective != first.objective {
            mismatches.push(format!("objective (run 0 vs run {i})"));
        }
        if r.step_config.parameter_scope != first.step_config.parameter_scope
            || r.step_config.fd_step != first.step_config.fd_step
        {
            mismatches.push(format!("step_config (run 0 vs run {i})"));
        }
        let (a, b) = (&r.schedule, &first.schedule);
        if a.task_steps_per_mc != b.task_steps_per_mc
            || a.total_task_steps != b.total_task_steps
            || a.learning_rate != b.learning_rate
            || a.batch_size != b.batch_size
        {
            mismatches.push(format!("schedule (run 0 vs run {i})"));
        }
    }
    let seeds: Vec<u64> = runs.iter().map(|r| r.schedule.seed).collect();
    let mut max_loss_diff = 0.0_f64;
    let mut max_mc_diff = 0.0_f64;
    let mut degenerate_disagreements = 0usize;
    for step in 0..lens[0] {
        for a in 0..runs.len() {
            for b in (a + 1)..runs.len() {
                let (ra, rb) = (&runs[a].records[step], &runs[b].records[step]);
                max_loss_diff = max_loss_diff.max((ra.task_loss - rb.task_loss).abs());
                match (ra.mc_value.value(), rb.mc_value.value()) {
                    (Some(x), Some(y)) => max_mc_diff = max_mc_diff.max((x - y).abs()),
                    (None, None) => {}
                    _ => degenerate_disagreements += 1,
                }
            }
        }
    }
    Ok(RunComparison {
        run_count: runs.len(),
        configs_match: mismatches.is_empty(),
        mismatches,
        seeds_equal: seeds.windows(2).all(|w| w[0] == w[1]),
        seeds,
        delta_primes: runs.iter().map(|r| r.step_config.delta_prime).collect(),
        loss_threshold,
        steps_to_loss_threshold: runs.iter().map(|r| r.steps_to_loss(loss_threshold)).collect(),
        final_losses: runs.iter().map(|r| r.final_loss()).collect(),
        final_mcs: runs.iter().map(|r| r.final_mc()).collect(),
        max_pairwise_loss_diff: max_loss_diff,
        max_pairwise_mc_diff: max_mc_diff,
        degenerate_disagreements,
    })
}

/// Aligned per-step CSV over several runs; columns are labelled by run index.
pub fn runs_to_csv(runs: &[RunMetrics]) -> Result<String, McTrainError> {
    if runs.is_empty() {
        return Err(McTrainError::FewRuns(0));
    }
    let lens: Vec<usize> = runs.iter().map(|r| r.records.len()).collect();
    if lens.iter().any(|&l| l != lens[0]) {
        return Err(McTrainError::RecordLengthMismatch { lens });
    }
    let mut out = String::from("step");
    for i in 0..runs.len() {
        let _ = write!(out, ",task_loss_{i},mc_value_{i}");
    }
    out.push('\n');
    for step in 0..lens[0] {
        let _ = write!(out, "{}", runs[0].records[step].step);
        for r in runs {
            let rec = &r.records[step];
            let mc = rec.mc_value.value().map_or(String::new(), |v| format!("{v:.16e}"));
            let _ = write!(out, ",{:.16e},{}", rec.task_loss, mc);
        }
        out.push('\n');
    }
    Ok(out)
}
