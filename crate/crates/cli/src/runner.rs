//! Experiment execution: config in, artifact directory out.
//!
//! Every runner writes through one [`ArtifactWriter`] and finishes by writing
//! the manifest; a failure part-way removes everything already written so a
//! directory never holds a torn run. All randomness flows from the config
//! seed through fixed derivation tags, so a rerun with the same config is
//! byte-identical.

use crate::config::{
    BaselineConfig, ExperimentConfig, KaDemoConfig, McAnalyzeConfig, MinorsConfig, OutputFormat,
    ProbeSource, TrainConfigBlock,
};
use crate::manifest::{ArtifactWriter, RunManifest};
use crate::plot::{render_plot, Series};
use crate::{config, CliError};
use minka_core::ensemble::{derive_trial_seed, mc_baseline_detailed, EnsembleSummary};
use minka_core::exterior::{mc, minors, Mc, McReport};
use minka_core::ka::{build_embedding, embedding_jacobian, represent, RepresentOptions};
use minka_core::matrix::Matrix;
use minka_core::mctrain::{
    compare_runs, interleaved_train, runs_to_csv, InterleaveSchedule, McObjectiveSpec,
    McStepConfig, RunMetrics,
};
use minka_core::nn::{init_mlp, jacobian_between, Mlp, MlpCheckpoint, MlpConfig};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

/// Sub-stream tags for [`derive_trial_seed`], so the independent random
/// consumers of one run can never alias.
const STREAM_DATASET: u64 = 0;
const STREAM_PROBES: u64 = 1;

pub const CHECKPOINT_KIND_KA: &str = "ka-embedding";

/// Minimal checkpoint for the square-to-staircase embedding: the whole map
/// is reconstructed from these two numbers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KaEmbeddingCheckpoint {
    pub kind: String,
    pub level: usize,
    pub gamma: f64,
}

/// Runs a validated config against an output directory. On success the
/// directory holds the artifacts plus `manifest.json`; on failure it is
/// restored to its prior state.
pub fn run(
    config: &ExperimentConfig,
    base_dir: &Path,
    out_dir: &Path,
) -> Result<RunManifest, CliError> {
    config::validate_config(config, base_dir)?;
    let mut writer = ArtifactWriter::create(out_dir)?;
    let formats = config.formats();
    let result = match config {
        ExperimentConfig::Minors(c) => run_minors(c, base_dir, &mut writer, &formats),
        ExperimentConfig::Baseline(c) => run_baseline(c, &mut writer, &formats),
        ExperimentConfig::McAnalyze(c) => run_mc_analyze(c, base_dir, &mut writer, &formats),
        ExperimentConfig::Train(c) => run_train(c, &mut writer, &formats),
        ExperimentConfig::KaDemo(c) => run_ka_demo(c, &mut writer, &formats),
    };
    match result {
        Ok(()) => writer.finish(config.kind(), config.seed(), config.to_echo()),
        Err(e) => {
            writer.cleanup();
            Err(e)
        }
    }
}

fn wants(formats: &[OutputFormat], f: OutputFormat) -> bool {
    formats.contains(&f)
}

fn read_file(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path)
        .map_err(|e| CliError::Read { path: path.display().to_string(), source: e })
}

fn fmt_mc(v: Mc) -> String {
    match v.value() {
        Some(x) => format!("{x:.16e}"),
        None => String::new(),
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    match v {
        Some(x) => format!("{x:.16e}"),
        None => String::new(),
    }
}

// ---------------------------------------------------------------- minors --

fn load_matrix(c: &MinorsConfig, base_dir: &Path) -> Result<Matrix, CliError> {
    let rows: Vec<Vec<f64>> = match (&c.matrix, &c.matrix_path) {
        (Some(rows), None) => rows.clone(),
        (None, Some(rel)) => {
            let path = config::resolve(base_dir, rel);
            let text = read_file(&path)?;
            serde_json::from_str(&text).map_err(|e| CliError::Json {
                path: path.display().to_string(),
                problem: e.to_string(),
            })?
        }
        // validate_config enforces exactly one source.
        _ => unreachable!("validated config has exactly one matrix source"),
    };
    let height = rows.len();
    let width = rows.first().map_or(0, Vec::len);
    if height == 0 || width == 0 {
        return Err(CliError::config("matrix", "matrix must be nonempty"));
    }
    if let Some(bad) = rows.iter().position(|r| r.len() != width) {
        return Err(CliError::config(
            "matrix",
            format!("row {bad} has {} entries, expected {width}", rows[bad].len()),
        ));
    }
    Ok(Matrix::from_vec(height, width, rows.concat())?)
}

fn run_minors(
    c: &MinorsConfig,
    base_dir: &Path,
    writer: &mut ArtifactWriter,
    formats: &[OutputFormat],
) -> Result<(), CliError> {
    let m = load_matrix(c, base_dir)?;
    let max_order = m.rows().min(m.cols());
    let mut reports = Vec::new();
    for &h in &c.orders {
        if h == 0 || h > max_order {
            return Err(CliError::config(
                "orders",
                format!("order {h} invalid for a {}x{} matrix", m.rows(), m.cols()),
            ));
        }
        let table = minors(&m, h)?;
        let report = McReport::from_table(&table);
        if wants(formats, OutputFormat::Csv) {
            writer.write_str(&format!("minor_table_h{h}.csv"), &table.to_csv_string())?;
        }
        if wants(formats, OutputFormat::Json) {
            let json = serde_json::to_string_pretty(&report).expect("report serialises");
            writer.write_str(&format!("mc_report_h{h}.json"), &json)?;
        }
        reports.push(report);
    }
    if wants(formats, OutputFormat::Svg) {
        let pick = |f: fn(&McReport) -> Mc| {
            reports.iter().map(|r| f(r).value().unwrap_or(f64::NAN)).collect::<Vec<_>>()
        };
        let series = [
            Series::new("global", pick(|r| r.mc_global)),
            Series::new("row grouped", pick(|r| r.row_concentration)),
            Series::new("col grouped", pick(|r| r.col_concentration)),
        ];
        writer.write_str("concentration_by_order.svg", &render_plot(&series)?)?;
    }
    Ok(())
}

// -------------------------------------------------------------- baseline --

fn run_baseline(
    c: &BaselineConfig,
    writer: &mut ArtifactWriter,
    formats: &[OutputFormat],
) -> Result<(), CliError> {
    let (summary, raw) = mc_baseline_detailed(c.rows, c.cols, c.order, c.trials, c.seed)?;
    if wants(formats, OutputFormat::Json) {
        let json = serde_json::to_string_pretty(&summary).expect("summary serialises");
        writer.write_str("baseline_summary.json", &json)?;
    }
    if wants(formats, OutputFormat::Csv) {
        let mut csv = String::from("trial,mc\n");
        for (t, v) in raw.iter().enumerate() {
            let _ = writeln!(csv, "{t},{}", fmt_opt(*v));
        }
        writer.write_str("baseline_trials.csv", &csv)?;
    }
    if wants(formats, OutputFormat::Svg) {
        let values: Vec<f64> = raw.iter().map(|v| v.unwrap_or(f64::NAN)).collect();
        let series = [Series::new("mc per trial", values)];
        writer.write_str("baseline_trials.svg", &render_plot(&series)?)?;
    }
    Ok(())
}

// ------------------------------------------------------------ mc-analyze --

/// The Jacobian field under analysis: either a saved network or the
/// reconstructed staircase embedding.
enum JacobianSource {
    Network(Mlp),
    Embedding(minka_core::ka::KaEmbedding),
}

impl JacobianSource {
    fn input_dim(&self) -> usize {
        match self {
            JacobianSource::Network(mlp) => mlp.input_dim(),
            JacobianSource::Embedding(_) => 2,
        }
    }

    fn kind(&self) -> &'static str {
        match self {
            JacobianSource::Network(_) => minka_core::nn::CHECKPOINT_KIND_MLP,
            JacobianSource::Embedding(_) => CHECKPOINT_KIND_KA,
        }
    }

    /// Whether a freshly drawn random probe is usable. The embedding has
    /// measure-zero knot lines where one-sided slopes disagree; random draws
    /// that land on one are redrawn rather than reported.
    fn accepts(&self, point: &[f64]) -> bool {
        match self {
            JacobianSource::Network(_) => true,
            JacobianSource::Embedding(emb) => embedding_jacobian(emb, point[0], point[1]).is_ok(),
        }
    }

    fn jacobian(&self, point: &[f64], pair: [usize; 2]) -> Result<Matrix, CliError> {
        match self {
            JacobianSource::Network(mlp) => {
                Ok(jacobian_between(mlp, point, pair[0], pair[1])?)
            }
            JacobianSource::Embedding(emb) => {
                Ok(embedding_jacobian(emb, point[0], point[1])?)
            }
        }
    }
}

fn load_jacobian_source(path: &Path) -> Result<JacobianSource, CliError> {
    let text = read_file(path)?;
    let probe: serde_json::Value = serde_json::from_str(&text).map_err(|e| CliError::Json {
        path: path.display().to_string(),
        problem: e.to_string(),
    })?;
    let kind = probe
        .get("kind")
        .and_then(|k| k.as_str())
        .ok_or_else(|| CliError::Checkpoint {
            path: path.display().to_string(),
            problem: "missing string field kind".to_string(),
        })?;
    match kind {
        k if k == minka_core::nn::CHECKPOINT_KIND_MLP => {
            let cp = MlpCheckpoint::from_json_str(&text).map_err(|e| CliError::Checkpoint {
                path: path.display().to_string(),
                problem: e.to_string(),
            })?;
            let mlp = cp.to_mlp().map_err(|e| CliError::Checkpoint {
                path: path.display().to_string(),
                problem: e.to_string(),
            })?;
            Ok(JacobianSource::Network(mlp))
        }
        CHECKPOINT_KIND_KA => {
            let cp: KaEmbeddingCheckpoint =
                serde_json::from_str(&text).map_err(|e| CliError::Checkpoint {
                    path: path.display().to_string(),
                    problem: e.to_string(),
                })?;
            let emb = build_embedding(cp.level, cp.gamma)?;
            Ok(JacobianSource::Embedding(emb))
        }
        other => Err(CliError::Checkpoint {
            path: path.display().to_string(),
            problem: format!("unsupported checkpoint kind {other:?}"),
        }),
    }
}

fn uniform_point(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    (0..dim).map(|_| rng.random::<f64>()).collect()
}

fn load_probe_points(
    c: &McAnalyzeConfig,
    base_dir: &Path,
    source: &JacobianSource,
) -> Result<Vec<Vec<f64>>, CliError> {
    let dim = source.input_dim();
    match c.probe_source {
        ProbeSource::UniformRandom => {
            let mut rng =
                ChaCha8Rng::seed_from_u64(derive_trial_seed(c.seed, STREAM_PROBES));
            let mut points = Vec::with_capacity(c.probe_count);
            let mut rejected = 0usize;
            while points.len() < c.probe_count {
                let p = uniform_point(&mut rng, dim);
                if source.accepts(&p) {
                    points.push(p);
                } else {
                    rejected += 1;
                    if rejected > 1000 {
                        return Err(CliError::config(
                            "probe_count",
                            "could not draw enough interior probe points",
                        ));
                    }
                }
            }
            Ok(points)
        }
        ProbeSource::TrainingData => {
            let rel = c.probe_data.as_ref().expect("validated config has probe_data");
            let path = config::resolve(base_dir, rel);
            let text = read_file(&path)?;
            let all: Vec<Vec<f64>> = serde_json::from_str(&text).map_err(|e| CliError::Json {
                path: path.display().to_string(),
                problem: e.to_string(),
            })?;
            if all.len() < c.probe_count {
                return Err(CliError::config(
                    "probe_count",
                    format!("asked for {} probes but probe_data holds {}", c.probe_count, all.len()),
                ));
            }
            let points: Vec<Vec<f64>> = all.into_iter().take(c.probe_count).collect();
            for (i, p) in points.iter().enumerate() {
                if p.len() != dim {
                    return Err(CliError::config(
                        "probe_data",
                        format!("point {i} has {} coordinates, the checkpoint takes {dim}", p.len()),
                    ));
                }
                if p.iter().any(|v| !v.is_finite()) {
                    return Err(CliError::config(
                        "probe_data",
                        format!("point {i} contains a non-finite coordinate"),
                    ));
                }
            }
            Ok(points)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McFieldRow {
    pub probe: usize,
    pub source_layer: usize,
    pub target_layer: usize,
    pub order: usize,
    pub mc: Mc,
    pub z_score: Option<f64>,
}

/// Concentration of Jacobian minors across probe points, with Gaussian
/// ensemble context for every Jacobian shape encountered.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McFieldReport {
    pub checkpoint_kind: String,
    pub probe_points: Vec<Vec<f64>>,
    pub baselines: Vec<EnsembleSummary>,
    pub rows: Vec<McFieldRow>,
}

impl McFieldReport {
    pub fn to_csv_string(&self) -> String {
        let mut out = String::from("probe,source_layer,target_layer,order,mc,z_score\n");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{}",
                r.probe,
                r.source_layer,
                r.target_layer,
                r.order,
                fmt_mc(r.mc),
                fmt_opt(r.z_score)
            );
        }
        out
    }
}

/// Baseline seeds are keyed by Jacobian shape, not iteration order, so the
/// same shape always gets the same ensemble no matter how pairs are listed.
fn baseline_seed(master: u64, rows: usize, cols: usize, h: usize) -> u64 {
    derive_trial_seed(master, ((rows as u64) << 42) | ((cols as u64) << 21) | h as u64)
}

fn run_mc_analyze(
    c: &McAnalyzeConfig,
    base_dir: &Path,
    writer: &mut ArtifactWriter,
    formats: &[OutputFormat],
) -> Result<(), CliError> {
    let source = load_jacobian_source(&config::resolve(base_dir, &c.checkpoint))?;
    let pairs: Vec<[usize; 2]> = match (&source, &c.pairs) {
        (JacobianSource::Network(mlp), Some(pairs)) => {
            if pairs.is_empty() {
                return Err(CliError::config("pairs", "at least one layer pair is required"));
            }
            for &[i, j] in pairs {
                if i >= j || j > mlp.depth() {
                    return Err(CliError::config(
                        "pairs",
                        format!(
                            "pair [{i}, {j}] needs i < j <= {} for this checkpoint",
                            mlp.depth()
                        ),
                    ));
                }
            }
            pairs.clone()
        }
        (JacobianSource::Network(_), None) => {
            return Err(CliError::config("pairs", "required for an mlp checkpoint"))
        }
        (JacobianSource::Embedding(_), None) => vec![[0, 1]],
        (JacobianSource::Embedding(_), Some(_)) => {
            return Err(CliError::config(
                "pairs",
                "not allowed for a ka-embedding checkpoint; the embedding has one fixed map",
            ))
        }
    };
    let points = load_probe_points(c, base_dir, &source)?;

    let mut baselines: BTreeMap<(usize, usize, usize), EnsembleSummary> = BTreeMap::new();
    let mut rows = Vec::new();
    for (pi, point) in points.iter().enumerate() {
        for &pair in &pairs {
            let jac = source.jacobian(point, pair)?;
            for &h in &c.orders {
                if h == 0 || h > jac.rows().min(jac.cols()) {
                    return Err(CliError::config(
                        "orders",
                        format!(
                            "order {h} invalid for the {}x{} Jacobian of pair [{}, {}]",
                            jac.rows(),
                            jac.cols(),
                            pair[0],
                            pair[1]
                        ),
                    ));
                }
                let key = (jac.rows(), jac.cols(), h);
                if !baselines.contains_key(&key) {
                    let (summary, _) = mc_baseline_detailed(
                        key.0,
                        key.1,
                        key.2,
                        c.baseline_trials,
                        baseline_seed(c.seed, key.0, key.1, key.2),
                    )?;
                    baselines.insert(key, summary);
                }
                let value = mc(&jac, h)?;
                let z = value.value().and_then(|v| baselines[&key].z_score(v));
                rows.push(McFieldRow {
                    probe: pi,
                    source_layer: pair[0],
                    target_layer: pair[1],
                    order: h,
                    mc: value,
                    z_score: z,
                });
            }
        }
    }

    let report = McFieldReport {
        checkpoint_kind: source.kind().to_string(),
        probe_points: points,
        baselines: baselines.into_values().collect(),
        rows,
    };
    if wants(formats, OutputFormat::Csv) {
        writer.write_str("mc_field.csv", &report.to_csv_string())?;
    }
    if wants(formats, OutputFormat::Json) {
        let json = serde_json::to_string_pretty(&report).expect("field report serialises");
        writer.write_str("mc_field.json", &json)?;
    }
    if wants(formats, OutputFormat::Svg) {
        let mut series = Vec::new();
        for &pair in &pairs {
            for &h in &c.orders {
                let values: Vec<f64> = report
                    .rows
                    .iter()
                    .filter(|r| {
                        r.source_layer == pair[0] && r.target_layer == pair[1] && r.order == h
                    })
                    .map(|r| r.mc.value().unwrap_or(f64::NAN))
                    .collect();
                series.push(Series::new(
                    format!("layers {}:{} order {h}", pair[0], pair[1]),
                    values,
                ));
            }
        }
        writer.write_str("mc_field.svg", &render_plot(&series)?)?;
    }
    Ok(())
}

// ----------------------------------------------------------------- train --

fn build_dataset(c: &TrainConfigBlock) -> Vec<(Vec<f64>, Vec<f64>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_trial_seed(c.seed, STREAM_DATASET));
    (0..c.dataset.samples)
        .map(|_| {
            let x = rng.random::<f64>();
            let y = rng.random::<f64>();
            (vec![x, y], vec![c.dataset.target.eval(x, y)])
        })
        .collect()
}

fn run_train(
    c: &TrainConfigBlock,
    writer: &mut ArtifactWriter,
    formats: &[OutputFormat],
) -> Result<(), CliError> {
    let data = build_dataset(c);
    let probe_points: Vec<Vec<f64>> = match c.objective.probe_source {
        ProbeSource::TrainingData => {
            data.iter().take(c.objective.probe_count).map(|(x, _)| x.clone()).collect()
        }
        ProbeSource::UniformRandom => {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_trial_seed(c.seed, STREAM_PROBES));
            (0..c.objective.probe_count).map(|_| uniform_point(&mut rng, 2)).collect()
        }
    };
    let spec = McObjectiveSpec {
        source_layer: c.objective.source_layer,
        target_layer: c.objective.target_layer,
        minor_order: c.objective.minor_order,
        probe_points,
    };
    let net_config = MlpConfig {
        layer_sizes: c.layer_sizes.clone(),
        activations: c.activations.clone(),
        seed: c.seed,
    };
    let schedule = InterleaveSchedule {
        task_steps_per_mc: c.task_steps_per_mc,
        total_task_steps: c.total_task_steps,
        learning_rate: c.learning_rate,
        batch_size: c.batch_size,
        seed: c.seed,
    };

    // Same init and same shuffle for every run: the nudge strength is the
    // only thing that varies across runs.
    let mut runs = Vec::with_capacity(c.delta_primes.len());
    for (ri, &delta_prime) in c.delta_primes.iter().enumerate() {
        let mut mlp = init_mlp(&net_config)?;
        let step_cfg = McStepConfig::for_target(&spec, delta_prime);
        let metrics = interleaved_train(&mut mlp, &data, &spec, &step_cfg, &schedule)?;
        if wants(formats, OutputFormat::Csv) {
            writer.write_str(&format!("run{ri}_metrics.csv"), &metrics.to_csv_string())?;
        }
        if wants(formats, OutputFormat::Json) {
            writer.write_str(&format!("run{ri}_metrics.json"), &metrics.to_json_string())?;
        }
        runs.push(metrics);
    }

    if runs.len() >= 2 {
        let comparison = compare_runs(&runs, c.loss_threshold)?;
        if wants(formats, OutputFormat::Json) {
            let json = serde_json::to_string_pretty(&comparison).expect("comparison serialises");
            writer.write_str("comparison.json", &json)?;
        }
        if wants(formats, OutputFormat::Csv) {
            writer.write_str("comparison.csv", &runs_to_csv(&runs)?)?;
        }
    }
    if wants(formats, OutputFormat::Svg) {
        writer.write_str("loss_curves.svg", &render_plot(&loss_series(&runs, &c.delta_primes))?)?;
    }
    Ok(())
}

fn loss_series(runs: &[RunMetrics], delta_primes: &[f64]) -> Vec<Series> {
    let mut series = Vec::new();
    for (ri, run) in runs.iter().enumerate() {
        let label = delta_primes.get(ri).copied().unwrap_or(f64::NAN);
        let losses: Vec<f64> = run.records.iter().map(|r| r.task_loss).collect();
        series.push(Series::new(format!("loss d'={label}"), losses));
        let mcs: Vec<f64> =
            run.records.iter().map(|r| r.mc_value.value().unwrap_or(f64::NAN)).collect();
        series.push(Series::new(format!("mc d'={label}"), mcs));
    }
    series
}

// --------------------------------------------------------------- ka-demo --

fn run_ka_demo(
    c: &KaDemoConfig,
    writer: &mut ArtifactWriter,
    formats: &[OutputFormat],
) -> Result<(), CliError> {
    let emb = build_embedding(c.level, c.gamma)?;
    let opts = RepresentOptions {
        max_iterations: c.max_iterations,
        grid_n: c.grid_n,
        divisor: c.divisor,
        stop_floor: None,
    };
    let (outer, report) = represent(&emb, &c.target, &opts)?;
    if wants(formats, OutputFormat::Csv) {
        writer.write_str("iteration_report.csv", &report.to_csv_string())?;
    }
    if wants(formats, OutputFormat::Json) {
        writer.write_str("iteration_report.json", &report.to_json_string())?;
        let outer_json = serde_json::to_string_pretty(&outer).expect("outer serialises");
        writer.write_str("outer_function.json", &outer_json)?;
        let cp = KaEmbeddingCheckpoint {
            kind: CHECKPOINT_KIND_KA.to_string(),
            level: c.level,
            gamma: c.gamma,
        };
        let cp_json = serde_json::to_string_pretty(&cp).expect("checkpoint serialises");
        writer.write_str("embedding_checkpoint.json", &cp_json)?;
    }
    if wants(formats, OutputFormat::Svg) {
        let floors = vec![report.floor; report.sup_errors.len()];
        let series =
            [Series::new("sup error", report.sup_errors.clone()), Series::new("floor", floors)];
        writer.write_str("error_history.svg", &render_plot(&series)?)?;
    }
    Ok(())
}
