//! Experiment configs: one JSON document per run.
//!
//! Parsing is two-stage so every rejection names the offending field: the
//! `kind` tag is dispatched by hand, then the kind-specific block is
//! deserialized with unknown fields denied. Relative paths inside a config
//! resolve against the config file's own directory.

use crate::CliError;
use minka_core::ka::TargetFunction;
use minka_core::nn::Activation;
use serde::{Deserialize, Serialize};
use std::fs;
use std::path::{Path, PathBuf};

pub const KINDS: [&str; 5] = ["minors", "mc-analyze", "baseline", "train", "ka-demo"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    Csv,
    Json,
    Svg,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MinorsConfig {
    pub seed: u64,
    /// Inline row-major matrix; exclusive with `matrix_path`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub matrix: Option<Vec<Vec<f64>>>,
    /// JSON file holding the matrix as an array of rows.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub matrix_path: Option<String>,
    pub orders: Vec<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub formats: Option<Vec<OutputFormat>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BaselineConfig {
    pub seed: u64,
    pub rows: usize,
    pub cols: usize,
    pub order: usize,
    pub trials: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub formats: Option<Vec<OutputFormat>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProbeSource {
    UniformRandom,
    TrainingData,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct McAnalyzeConfig {
    pub seed: u64,
    /// Checkpoint JSON; `kind` inside selects mlp or ka-embedding handling.
    pub checkpoint: String,
    /// Layer pairs (i, j) to probe; mlp checkpoints only.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pairs: Option<Vec<[usize; 2]>>,
    pub orders: Vec<usize>,
    pub probe_source: ProbeSource,
    pub probe_count: usize,
    /// Input vectors for `training-data` probes, as a JSON array of arrays.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub probe_data: Option<String>,
    pub baseline_trials: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub formats: Option<Vec<OutputFormat>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainDataset {
    pub samples: usize,
    /// Scalar target over the unit square; the net learns it from uniform
    /// random inputs.
    pub target: TargetFunction,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainObjective {
    pub source_layer: usize,
    pub target_layer: usize,
    pub minor_order: usize,
    pub probe_source: ProbeSource,
    pub probe_count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfigBlock {
    pub seed: u64,
    pub layer_sizes: Vec<usize>,
    pub activations: Vec<Activation>,
    pub dataset: TrainDataset,
    pub objective: TrainObjective,
    /// One interleaved run per entry; 0.0 is the plain-SGD baseline.
    pub delta_primes: Vec<f64>,
    pub task_steps_per_mc: usize,
    pub total_task_steps: usize,
    pub learning_rate: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub batch_size: Option<usize>,
    /// Loss threshold for the steps-to-threshold comparison column.
    pub loss_threshold: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub formats: Option<Vec<OutputFormat>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KaDemoConfig {
    /// The construction is deterministic; the seed is echoed into the
    /// manifest so every run record has one, but no randomness consumes it.
    pub seed: u64,
    pub level: usize,
    pub gamma: f64,
    pub target: TargetFunction,
    pub max_iterations: usize,
    pub grid_n: usize,
    pub divisor: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub formats: Option<Vec<OutputFormat>>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ExperimentConfig {
    Minors(MinorsConfig),
    McAnalyze(McAnalyzeConfig),
    Baseline(BaselineConfig),
    Train(TrainConfigBlock),
    KaDemo(KaDemoConfig),
}

impl ExperimentConfig {
    pub fn kind(&self) -> &'static str {
        match self {
            ExperimentConfig::Minors(_) => "minors",
            ExperimentConfig::McAnalyze(_) => "mc-analyze",
            ExperimentConfig::Baseline(_) => "baseline",
            ExperimentConfig::Train(_) => "train",
            ExperimentConfig::KaDemo(_) => "ka-demo",
        }
    }

    pub fn seed(&self) -> u64 {
        match self {
            ExperimentConfig::Minors(c) => c.seed,
            ExperimentConfig::McAnalyze(c) => c.seed,
            ExperimentConfig::Baseline(c) => c.seed,
            ExperimentConfig::Train(c) => c.seed,
            ExperimentConfig::KaDemo(c) => c.seed,
        }
    }

    pub fn set_seed(&mut self, seed: u64) {
        match self {
            ExperimentConfig::Minors(c) => c.seed = seed,
            ExperimentConfig::McAnalyze(c) => c.seed = seed,
            ExperimentConfig::Baseline(c) => c.seed = seed,
            ExperimentConfig::Train(c) => c.seed = seed,
            ExperimentConfig::KaDemo(c) => c.seed = seed,
        }
    }

    pub fn formats(&self) -> Vec<OutputFormat> {
        let explicit = match self {
            ExperimentConfig::Minors(c) => &c.formats,
            ExperimentConfig::McAnalyze(c) => &c.formats,
            ExperimentConfig::Baseline(c) => &c.formats,
            ExperimentConfig::Train(c) => &c.formats,
            ExperimentConfig::KaDemo(c) => &c.formats,
        };
        match explicit {
            Some(list) => {
                let mut out = list.clone();
                out.sort();
                out.dedup();
                out
            }
            // Plots are opt-out only for the kinds with a headline series.
            None => match self {
                ExperimentConfig::Train(_) | ExperimentConfig::KaDemo(_) => {
                    vec![OutputFormat::Csv, OutputFormat::Json, OutputFormat::Svg]
                }
                _ => vec![OutputFormat::Csv, OutputFormat::Json],
            },
        }
    }

    /// The effective config as JSON, for the manifest echo.
    pub fn to_echo(&self) -> serde_json::Value {
        let mut value = match self {
            ExperimentConfig::Minors(c) => serde_json::to_value(c),
            ExperimentConfig::McAnalyze(c) => serde_json::to_value(c),
            ExperimentConfig::Baseline(c) => serde_json::to_value(c),
            ExperimentConfig::Train(c) => serde_json::to_value(c),
            ExperimentConfig::KaDemo(c) => serde_json::to_value(c),
        }
        .expect("config serialises");
        let obj = value.as_object_mut().expect("configs are objects");
        obj.insert("kind".to_string(), serde_json::Value::String(self.kind().to_string()));
        value
    }
}

/// Loads and fully validates a config file. `base_dir` defaults to the
/// config file's parent and anchors every relative path inside it.
pub fn load_config(path: &Path) -> Result<(ExperimentConfig, PathBuf), CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Read { path: path.display().to_string(), source: e })?;
    let base = path.parent().unwrap_or(Path::new(".")).to_path_buf();
    let config = parse_config(&text, path)?;
    Ok((config, base))
}

pub fn parse_config(text: &str, origin: &Path) -> Result<ExperimentConfig, CliError> {
    let value: serde_json::Value = serde_json::from_str(text)
        .map_err(|e| CliError::Json { path: origin.display().to_string(), problem: e.to_string() })?;
    let obj = value
        .as_object()
        .ok_or_else(|| CliError::config("(root)", "config must be a JSON object"))?;
    let kind = obj
        .get("kind")
        .ok_or_else(|| CliError::config("kind", "missing; expected one of minors, mc-analyze, baseline, train, ka-demo"))?
        .as_str()
        .ok_or_else(|| CliError::config("kind", "must be a string"))?
        .to_string();
    let mut rest = obj.clone();
    rest.remove("kind");
    let rest = serde_json::Value::Object(rest);
    let config = match kind.as_str() {
        "minors" => ExperimentConfig::Minors(from_block(rest)?),
        "mc-analyze" => ExperimentConfig::McAnalyze(from_block(rest)?),
        "baseline" => ExperimentConfig::Baseline(from_block(rest)?),
        "train" => ExperimentConfig::Train(from_block(rest)?),
        "ka-demo" => ExperimentConfig::KaDemo(from_block(rest)?),
        other => {
            return Err(CliError::config(
                "kind",
                format!("unknown experiment kind {other:?}; expected one of {}", KINDS.join(", ")),
            ))
        }
    };
    Ok(config)
}

fn from_block<T: serde::de::DeserializeOwned>(value: serde_json::Value) -> Result<T, CliError> {
    serde_json::from_value(value).map_err(|e| {
        // serde_json error text already names the field for missing/unknown
        // field errors; keep it and tag the source.
        CliError::config("(parameters)", e.to_string())
    })
}

/// Structural checks that need the filesystem: referenced files must exist
/// before the run starts, and cross-field constraints must hold.
pub fn validate_config(config: &ExperimentConfig, base_dir: &Path) -> Result<(), CliError> {
    match config {
        ExperimentConfig::Minors(c) => {
            match (&c.matrix, &c.matrix_path) {
                (Some(_), Some(_)) => {
                    return Err(CliError::config(
                        "matrix",
                        "give either matrix or matrix_path, not both",
                    ))
                }
                (None, None) => {
                    return Err(CliError::config("matrix", "one of matrix or matrix_path is required"))
                }
                (None, Some(p)) => require_file(base_dir, p, "matrix_path")?,
                (Some(rows), None) => {
                    if rows.is_empty() || rows[0].is_empty() {
                        return Err(CliError::config("matrix", "matrix must be nonempty"));
                    }
                }
            }
            if c.orders.is_empty() {
                return Err(CliError::config("orders", "at least one minor order is required"));
            }
        }
        ExperimentConfig::Baseline(c) => {
            if c.rows == 0 || c.cols == 0 {
                return Err(CliError::config("rows", "matrix dimensions must be at least 1"));
            }
            if c.trials == 0 {
                return Err(CliError::config("trials", "at least one trial is required"));
            }
            if c.order == 0 || c.order > c.rows.min(c.cols) {
                return Err(CliError::config(
                    "order",
                    format!("order {} invalid for a {}x{} matrix", c.order, c.rows, c.cols),
                ));
            }
        }
        ExperimentConfig::McAnalyze(c) => {
            require_file(base_dir, &c.checkpoint, "checkpoint")?;
            if c.orders.is_empty() {
                return Err(CliError::config("orders", "at least one minor order is required"));
            }
            if c.probe_count == 0 {
                return Err(CliError::config("probe_count", "at least one probe point is required"));
            }
            if c.baseline_trials == 0 {
                return Err(CliError::config("baseline_trials", "at least one trial is required"));
            }
            match (c.probe_source, &c.probe_data) {
                (ProbeSource::TrainingData, None) => {
                    return Err(CliError::config(
                        "probe_data",
                        "required when probe_source is training-data",
                    ))
                }
                (ProbeSource::TrainingData, Some(p)) => require_file(base_dir, p, "probe_data")?,
                (ProbeSource::UniformRandom, Some(_)) => {
                    return Err(CliError::config(
                        "probe_data",
                        "not allowed when probe_source is uniform-random",
                    ))
                }
                (ProbeSource::UniformRandom, None) => {}
            }
        }
        ExperimentConfig::Train(c) => {
            if c.layer_sizes.first() != Some(&2) || c.layer_sizes.last() != Some(&1) {
                return Err(CliError::config(
                    "layer_sizes",
                    "the dataset targets are scalar functions on the unit square; the net must map 2 inputs to 1 output",
                ));
            }
            c.dataset.target.validate().map_err(|e| CliError::config("dataset.target", e.to_string()))?;
            if c.dataset.samples == 0 {
                return Err(CliError::config("dataset.samples", "at least one sample is required"));
            }
            if c.delta_primes.is_empty() {
                return Err(CliError::config("delta_primes", "at least one run is required"));
            }
            if c.delta_primes.iter().any(|d| !d.is_finite()) {
                return Err(CliError::config("delta_primes", "entries must be finite"));
            }
            let depth = c.layer_sizes.len() - 1;
            if c.objective.target_layer > depth {
                return Err(CliError::config(
                    "objective.target_layer",
                    format!("layer {} does not exist in a net of depth {depth}", c.objective.target_layer),
                ));
            }
            if c.objective.source_layer >= c.objective.target_layer {
                return Err(CliError::config(
                    "objective.source_layer",
                    "must be strictly below objective.target_layer",
                ));
            }
            if c.objective.minor_order == 0 {
                return Err(CliError::config("objective.minor_order", "must be at least 1"));
            }
            if c.objective.probe_count == 0 {
                return Err(CliError::config("objective.probe_count", "at least one probe point is required"));
            }
            if c.objective.probe_source == ProbeSource::TrainingData
                && c.objective.probe_count > c.dataset.samples
            {
                return Err(CliError::config(
                    "objective.probe_count",
                    "cannot exceed dataset.samples when probing training data",
                ));
            }
            if c.total_task_steps == 0 {
                return Err(CliError::config("total_task_steps", "must be positive"));
            }
            if c.task_steps_per_mc == 0 {
                return Err(CliError::config("task_steps_per_mc", "must be positive"));
            }
            if !(c.learning_rate.is_finite() && c.learning_rate > 0.0) {
                return Err(CliError::config("learning_rate", "must be positive and finite"));
            }
            if !(c.loss_threshold.is_finite() && c.loss_threshold > 0.0) {
                return Err(CliError::config("loss_threshold", "must be positive and finite"));
            }
        }
        ExperimentConfig::KaDemo(c) => {
            c.target.validate().map_err(|e| CliError::config("target", e.to_string()))?;
            if c.max_iterations == 0 {
                return Err(CliError::config("max_iterations", "must be positive"));
            }
            if c.grid_n < 2 {
                return Err(CliError::config("grid_n", "evaluation grid side must be at least 2"));
            }
            if !(c.divisor.is_finite() && c.divisor > 1.0) {
                return Err(CliError::config("divisor", "must be finite and greater than 1"));
            }
            // Level and gamma bounds are rechecked by the construction; fail
            // early here so the message carries the field name.
            if c.level < 2 {
                return Err(CliError::config("level", "staircase level must be at least 2"));
            }
            if !(c.gamma.is_finite() && c.gamma > 0.0 && c.gamma <= 0.2) {
                return Err(CliError::config("gamma", "ramp fraction must lie in (0, 0.2]"));
            }
        }
    }
    Ok(())
}

pub fn resolve(base_dir: &Path, relative: &str) -> PathBuf {
    let p = Path::new(relative);
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base_dir.join(p)
    }
}

fn require_file(base_dir: &Path, relative: &str, field: &str) -> Result<(), CliError> {
    let full = resolve(base_dir, relative);
    if !full.is_file() {
        return Err(CliError::config(field, format!("file {} does not exist", full.display())));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<ExperimentConfig, CliError> {
        parse_config(text, Path::new("test.json"))
    }

    #[test]
    fn unknown_kind_is_rejected_naming_the_field() {
        let err = parse(r#"{"kind": "frobnicate", "seed": 1}"#).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("kind") && msg.contains("frobnicate"), "{msg}");
    }

    #[test]
    fn missing_kind_is_rejected() {
        let err = parse(r#"{"seed": 1}"#).unwrap_err();
        assert!(err.to_string().contains("kind"), "{err}");
    }

    #[test]
    fn unknown_parameter_is_rejected_with_its_name() {
        let err = parse(r#"{"kind": "baseline", "seed": 1, "rows": 2, "cols": 2, "order": 1, "trials": 5, "wat": 3}"#)
            .unwrap_err();
        assert!(err.to_string().contains("wat"), "{err}");
    }

    #[test]
    fn minors_requires_exactly_one_matrix_source() {
        let both = parse(
            r#"{"kind": "minors", "seed": 1, "matrix": [[1.0]], "matrix_path": "m.json", "orders": [1]}"#,
        )
        .unwrap();
        let err = validate_config(&both, Path::new(".")).unwrap_err();
        assert!(err.to_string().contains("matrix"), "{err}");
        let neither = parse(r#"{"kind": "minors", "seed": 1, "orders": [1]}"#).unwrap();
        assert!(validate_config(&neither, Path::new(".")).is_err());
    }

    #[test]
    fn missing_referenced_file_is_an_error() {
        let c = parse(
            r#"{"kind": "mc-analyze", "seed": 1, "checkpoint": "nope.json", "pairs": [[0, 1]],
                "orders": [1], "probe_source": "uniform-random", "probe_count": 4, "baseline_trials": 10}"#,
        )
        .unwrap();
        let err = validate_config(&c, Path::new("/definitely/not/here")).unwrap_err();
        assert!(err.to_string().contains("checkpoint"), "{err}");
    }

    #[test]
    fn train_requires_two_in_one_out() {
        let c = parse(
            r#"{"kind": "train", "seed": 3, "layer_sizes": [3, 4, 1],
                "activations": ["tanh", "identity"],
                "dataset": {"samples": 8, "target": {"kind": "x_plus_y"}},
                "objective": {"source_layer": 0, "target_layer": 2, "minor_order": 1,
                              "probe_source": "training-data", "probe_count": 4},
                "delta_primes": [0.0], "task_steps_per_mc": 2, "total_task_steps": 10,
                "learning_rate": 0.05, "loss_threshold": 0.01}"#,
        )
        .unwrap();
        let err = validate_config(&c, Path::new(".")).unwrap_err();
        assert!(err.to_string().contains("layer_sizes"), "{err}");
    }

    #[test]
    fn seed_override_lands_in_echo() {
        let mut c = parse(
            r#"{"kind": "baseline", "seed": 1, "rows": 2, "cols": 3, "order": 1, "trials": 5}"#,
        )
        .unwrap();
        c.set_seed(99);
        let echo = c.to_echo();
        assert_eq!(echo["seed"], 99);
        assert_eq!(echo["kind"], "baseline");
    }

    #[test]
    fn default_formats_depend_on_kind() {
        let demo = parse(
            r#"{"kind": "ka-demo", "seed": 1, "level": 4, "gamma": 0.2,
                "target": {"kind": "zero"}, "max_iterations": 5, "grid_n": 11, "divisor": 3.0}"#,
        )
        .unwrap();
        assert!(demo.formats().contains(&OutputFormat::Svg));
        let minors = parse(r#"{"kind": "minors", "seed": 1, "matrix": [[1.0]], "orders": [1]}"#).unwrap();
        assert!(!minors.formats().contains(&OutputFormat::Svg));
    }
}
