//! Command-line surface: train, eval, forecast, synth, corrupt,
//! export-structure. All outputs are plain delimited text and every command
//! is deterministic given its inputs and seed.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::data::{
    self, build_adjacency, chronological_split, community_incidence, distances_from_adjacency,
    fit_scaler, generate_synthetic, load_distances, load_series, make_windows, ring_adjacency,
    simulate_block_missing, simulate_point_missing, write_distances, write_series, DataError,
    ExplicitGraph, MissingScheme, MissingnessMask, RawSeries, ScalerStats, SyntheticSpec, Window,
    WindowedDataset,
};
use crate::graph_repr::normalized_adjacency;
use crate::hg_infer::{
    edge_probabilities, gumbel_sample, pairwise_similarity, HgEmbeddings, IncidenceMode,
};
use crate::model::{ModelDims, ModelState};
use crate::numeric::{NumericError, Tape, Tensor};
use crate::training::{
    self, compute_metrics, config_hash, epoch_log_to_csv, ha_baseline, predict_dataset,
    train_loop, Checkpoint, MetricReport, TrainConfig, TrainingError, CHECKPOINT_VERSION,
};

// ── configuration ────────────────────────────────────────────────────────

fn d_tau() -> usize {
    12
}
fn d_upsilon() -> usize {
    12
}
fn d_ratios() -> (f64, f64, f64) {
    (0.6, 0.2, 0.2)
}
fn d_dim() -> usize {
    18
}
fn d_hyperedges() -> usize {
    5
}
fn d_hgat_heads() -> usize {
    1
}
fn d_hgt_heads() -> usize {
    2
}
fn d_gamma() -> f64 {
    0.05
}
fn d_true() -> bool {
    true
}
fn d_kernel_threshold() -> f64 {
    0.1
}
fn d_lr() -> f64 {
    1e-3
}
fn d_batch() -> usize {
    18
}
fn d_epochs() -> usize {
    30
}
fn d_lr_patience() -> usize {
    5
}
fn d_early_patience() -> usize {
    10
}
fn d_grad_clip() -> Option<f64> {
    Some(5.0)
}
fn d_p_failure() -> f64 {
    0.0015
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSection {
    pub series_path: String,
    #[serde(default)]
    pub distance_path: Option<String>,
    #[serde(default = "d_tau")]
    pub tau: usize,
    #[serde(default = "d_upsilon")]
    pub upsilon: usize,
    #[serde(default = "d_ratios")]
    pub split_ratios: (f64, f64, f64),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    #[serde(default = "d_dim")]
    pub d: usize,
    #[serde(default = "d_hyperedges")]
    pub num_hyperedges: usize,
    #[serde(default = "d_hgat_heads")]
    pub hgat_heads: usize,
    #[serde(default = "d_hgt_heads")]
    pub hgt_heads: usize,
    #[serde(default = "d_gamma")]
    pub gamma: f64,
    #[serde(default = "d_true")]
    pub enable_explicit_graph: bool,
    #[serde(default = "d_true")]
    pub enable_implicit_hypergraph: bool,
    #[serde(default = "d_true")]
    pub enable_spatial: bool,
    #[serde(default = "d_true")]
    pub enable_temporal: bool,
    #[serde(default)]
    pub uncertainty: bool,
    #[serde(default)]
    pub lambda_sparsity: f64,
    #[serde(default)]
    pub kernel_width: Option<f64>,
    #[serde(default = "d_kernel_threshold")]
    pub kernel_threshold: f64,
}

impl Default for ModelSection {
    fn default() -> Self {
        serde_json::from_str("{}").expect("defaults")
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSection {
    #[serde(default = "d_lr")]
    pub lr: f64,
    #[serde(default = "d_batch")]
    pub batch: usize,
    #[serde(default = "d_epochs")]
    pub epochs: usize,
    #[serde(default = "d_lr_patience")]
    pub lr_patience: usize,
    #[serde(default = "d_early_patience")]
    pub early_patience: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "d_grad_clip")]
    pub grad_clip: Option<f64>,
}

impl Default for TrainSection {
    fn default() -> Self {
        serde_json::from_str("{}").expect("defaults")
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MissingSection {
    pub scheme: MissingScheme,
    pub rate: f64,
    #[serde(default = "d_p_failure")]
    pub p_failure: f64,
}

/// File-backed run configuration. Unknown keys are rejected; defaults encode
/// the 12→12 benchmark task (d = 18, 5 hyperedges, lr = 1e-3, batch 18).
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub data: DataSection,
    #[serde(default)]
    pub model: ModelSection,
    #[serde(default)]
    pub train: TrainSection,
    #[serde(default)]
    pub missing: Option<MissingSection>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
        let cfg: RunConfig = serde_json::from_str(&text)
            .map_err(|e| CliError::Config(format!("invalid config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |field: &str, why: String| Err(CliError::Config(format!("{field}: {why}")));
        if self.data.tau == 0 {
            return bad("data.tau", "must be positive".into());
        }
        if self.data.upsilon == 0 {
            return bad("data.upsilon", "must be positive".into());
        }
        let (a, b, c) = self.data.split_ratios;
        if a <= 0.0 || b <= 0.0 || c <= 0.0 || (a + b + c - 1.0).abs() > 1e-9 {
            return bad(
                "data.split_ratios",
                format!("must be positive and sum to 1, got ({a}, {b}, {c})"),
            );
        }
        if self.model.d == 0 {
            return bad("model.d", "must be positive".into());
        }
        if self.model.num_hyperedges == 0 {
            return bad("model.num_hyperedges", "must be positive".into());
        }
        if self.model.hgat_heads == 0 {
            return bad("model.hgat_heads", "must be positive".into());
        }
        if self.model.hgt_heads == 0 || self.model.d % self.model.hgt_heads != 0 {
            return bad(
                "model.hgt_heads",
                format!("must divide model.d = {}", self.model.d),
            );
        }
        if self.model.gamma <= 0.0 {
            return bad("model.gamma", "must be positive".into());
        }
        if self.model.lambda_sparsity < 0.0 {
            return bad("model.lambda_sparsity", "must be non-negative".into());
        }
        if let Some(w) = self.model.kernel_width {
            if w <= 0.0 {
                return bad("model.kernel_width", "must be positive".into());
            }
        }
        if !(0.0..=1.0).contains(&self.model.kernel_threshold) {
            return bad("model.kernel_threshold", "must lie in [0, 1]".into());
        }
        if self.model.enable_spatial
            && !self.model.enable_explicit_graph
            && !self.model.enable_implicit_hypergraph
        {
            return bad(
                "model.enable_explicit_graph",
                "spatial inference needs at least one expert enabled".into(),
            );
        }
        if self.model.enable_spatial
            && self.model.enable_explicit_graph
            && self.data.distance_path.is_none()
        {
            return bad(
                "data.distance_path",
                "required when the explicit graph is enabled".into(),
            );
        }
        if self.train.lr <= 0.0 {
            return bad("train.lr", "must be positive".into());
        }
        if self.train.batch == 0 {
            return bad("train.batch", "must be positive".into());
        }
        if self.train.epochs == 0 {
            return bad("train.epochs", "must be positive".into());
        }
        if self.train.lr_patience == 0 {
            return bad("train.lr_patience", "must be positive".into());
        }
        if self.train.early_patience == 0 {
            return bad("train.early_patience", "must be positive".into());
        }
        if let Some(clip) = self.train.grad_clip {
            if clip <= 0.0 {
                return bad("train.grad_clip", "must be positive".into());
            }
        }
        if let Some(missing) = &self.missing {
            if !(0.0..=1.0).contains(&missing.rate) {
                return bad("missing.rate", "must lie in [0, 1]".into());
            }
            if missing.p_failure < 0.0 {
                return bad("missing.p_failure", "must be non-negative".into());
            }
        }
        Ok(())
    }

    fn mask_enabled(&self) -> bool {
        self.missing.as_ref().is_some_and(|m| m.rate > 0.0)
    }

    fn dims(&self, n: usize) -> ModelDims {
        ModelDims {
            n,
            tau: self.data.tau,
            upsilon: self.data.upsilon,
            d: self.model.d,
            m: self.model.num_hyperedges,
            hgat_heads: self.model.hgat_heads,
            hgt_heads: self.model.hgt_heads,
            mask_channel: self.mask_enabled(),
            enable_spatial: self.model.enable_spatial,
            enable_explicit: self.model.enable_explicit_graph,
            enable_implicit: self.model.enable_implicit_hypergraph,
            enable_temporal: self.model.enable_temporal,
            uncertainty: self.model.uncertainty,
            gamma: self.model.gamma,
        }
    }

    pub fn to_value(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("config serializes")
    }
}

// ── error / exit codes ───────────────────────────────────────────────────

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("invalid config: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(#[from] DataError),
    #[error("non-finite loss: {0}")]
    NonFinite(String),
    #[error("checkpoint/config hash mismatch")]
    HashMismatch,
    #[error("checkpoint has no hypergraph module (ablated)")]
    AblatedExport,
    #[error("{0}")]
    Other(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Data(_) => 3,
            CliError::NonFinite(_) => 4,
            CliError::HashMismatch => 5,
            CliError::AblatedExport => 6,
            CliError::Other(_) => 1,
        }
    }
}

impl From<NumericError> for CliError {
    fn from(e: NumericError) -> Self {
        match e {
            NumericError::NonFinite { .. } => CliError::NonFinite(e.to_string()),
            other => CliError::Other(other.to_string()),
        }
    }
}

impl From<TrainingError> for CliError {
    fn from(e: TrainingError) -> Self {
        match e {
            TrainingError::Batch {
                source: NumericError::NonFinite { .. },
                ..
            } => CliError::NonFinite(e.to_string()),
            TrainingError::Numeric(NumericError::NonFinite { .. }) => {
                CliError::NonFinite(e.to_string())
            }
            other => CliError::Other(other.to_string()),
        }
    }
}

// ── argument surface ─────────────────────────────────────────────────────

#[derive(Parser, Debug)]
#[command(
    name = "eikf",
    about = "Joint explicit-graph / implicit-hypergraph forecasting for sensor networks"
)]
pub struct Cli {
    /// Run configuration (JSON).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Override the config seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory or file, depending on the command.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Train a model and write checkpoint.json + epochs.csv.
    Train,
    /// Evaluate a checkpoint on one split; prints and writes the metric table.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Split to evaluate: train, val, or test.
        #[arg(long, default_value = "test")]
        split: String,
        /// Score the historical-average baseline instead of the model.
        #[arg(long, default_value_t = false)]
        baseline_ha: bool,
        /// Re-parse the written report and verify it round-trips.
        #[arg(long, default_value_t = false)]
        check: bool,
    },
    /// Forecast from a τ-row window file.
    Forecast {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Series-format file holding exactly τ rows.
        #[arg(long)]
        window: PathBuf,
        /// Optional mask file aligned with the window rows.
        #[arg(long)]
        mask: Option<PathBuf>,
    },
    /// Generate a synthetic dataset with planted structures.
    Synth {
        #[arg(long, default_value_t = 12)]
        nodes: usize,
        #[arg(long, default_value_t = 2000)]
        steps: usize,
        /// Planted hyperedge communities.
        #[arg(long, default_value_t = 3)]
        hyperedges: usize,
        #[arg(long, default_value_t = 1)]
        ring_neighbors: usize,
        #[arg(long, default_value_t = 0.4)]
        theta: f64,
        #[arg(long, default_value_t = 1.0)]
        amplitude: f64,
        #[arg(long, default_value_t = 24.0)]
        period: f64,
        #[arg(long, default_value_t = 0.1)]
        noise: f64,
    },
    /// Corrupt a series with a missingness scheme; writes the masked series
    /// and the mask.
    Corrupt {
        #[arg(long)]
        series: PathBuf,
        #[arg(long)]
        scheme: String,
        #[arg(long)]
        rate: f64,
        #[arg(long, default_value_t = 0.0015)]
        p_failure: f64,
    },
    /// Export the learned incidence and edge probabilities from a checkpoint.
    ExportStructure {
        #[arg(long)]
        checkpoint: PathBuf,
    },
}

// ── pipeline assembly ────────────────────────────────────────────────────

struct Pipeline {
    scaler: ScalerStats,
    train: WindowedDataset,
    val: WindowedDataset,
    test: WindowedDataset,
    graph: Option<ExplicitGraph>,
    sensor_ids: Vec<String>,
    n: usize,
}

fn build_pipeline(cfg: &RunConfig, seed: u64) -> Result<Pipeline, CliError> {
    let series = load_series(Path::new(&cfg.data.series_path))?;
    let n = series.num_sensors();
    let (tau, ups) = (cfg.data.tau, cfg.data.upsilon);

    let mask = match &cfg.missing {
        Some(missing) if missing.rate > 0.0 => Some(match missing.scheme {
            MissingScheme::Point => {
                simulate_point_missing(series.len(), n, missing.rate, seed)?
            }
            MissingScheme::Block => simulate_block_missing(
                series.len(),
                n,
                missing.rate,
                missing.p_failure,
                seed,
            )?,
        }),
        _ => None,
    };

    let splits = chronological_split(&series, cfg.data.split_ratios, tau + ups)?;
    let scaler = fit_scaler(&splits.train)?;

    let window_split = |segment: &RawSeries, start: usize| -> Result<WindowedDataset, CliError> {
        let scaled = scaler.apply(segment);
        let mask_rows = mask.as_ref().map(|m| m.rows(start, segment.len()));
        Ok(make_windows(&scaled, mask_rows, tau, ups)?)
    };
    let train = window_split(&splits.train, 0)?;
    let val = window_split(&splits.val, splits.val_start)?;
    let test = window_split(&splits.test, splits.test_start)?;

    let graph = if cfg.model.enable_spatial && cfg.model.enable_explicit_graph {
        let path = cfg
            .data
            .distance_path
            .as_ref()
            .ok_or_else(|| CliError::Config("data.distance_path: required".into()))?;
        let distances = load_distances(Path::new(path), &series)?;
        Some(build_adjacency(
            &distances,
            n,
            cfg.model.kernel_width,
            cfg.model.kernel_threshold,
        )?)
    } else {
        None
    };

    Ok(Pipeline {
        scaler,
        train,
        val,
        test,
        graph,
        sensor_ids: series.sensor_ids.clone(),
        n,
    })
}

// ── commands ─────────────────────────────────────────────────────────────

fn out_dir(out: &Option<PathBuf>) -> Result<PathBuf, CliError> {
    let dir = out.clone().unwrap_or_else(|| PathBuf::from("."));
    std::fs::create_dir_all(&dir)
        .map_err(|e| CliError::Other(format!("cannot create {}: {e}", dir.display())))?;
    Ok(dir)
}

fn cmd_train(cfg: &RunConfig, seed: u64, out: &Option<PathBuf>) -> Result<(), CliError> {
    let dir = out_dir(out)?;
    let pipeline = build_pipeline(cfg, seed)?;
    let dims = cfg.dims(pipeline.n);
    let a_hat = pipeline
        .graph
        .as_ref()
        .map(|g| normalized_adjacency(&g.adjacency, pipeline.n));
    let mut model = ModelState::init(dims, a_hat, cfg.model.lambda_sparsity, seed)?;

    let train_cfg = TrainConfig {
        lr: cfg.train.lr,
        batch_size: cfg.train.batch,
        max_epochs: cfg.train.epochs,
        lr_patience: cfg.train.lr_patience,
        lr_factor: 0.5,
        early_patience: cfg.train.early_patience,
        seed,
        grad_clip: cfg.train.grad_clip,
    };
    let outcome = train_loop(
        &mut model,
        &pipeline.train,
        &pipeline.val,
        &pipeline.scaler,
        &train_cfg,
    )?;

    let config_value = config_with_seed(cfg, seed);
    let checkpoint = Checkpoint {
        version: CHECKPOINT_VERSION,
        config_hash: config_hash(&config_value),
        config: config_value,
        model,
        scaler: pipeline.scaler,
        sensor_ids: pipeline.sensor_ids,
        best_val_mae: outcome.best_val_mae,
    };
    checkpoint.save(&dir.join("checkpoint.json"))?;
    std::fs::write(dir.join("epochs.csv"), epoch_log_to_csv(&outcome.log))
        .map_err(|e| CliError::Other(format!("cannot write epoch log: {e}")))?;
    println!(
        "trained {} epochs, best validation MAE {}",
        outcome.epochs_run, outcome.best_val_mae
    );
    Ok(())
}

/// The effective config (seed override applied) — what gets hashed/echoed.
fn config_with_seed(cfg: &RunConfig, seed: u64) -> serde_json::Value {
    let mut effective = cfg.clone();
    effective.train.seed = seed;
    effective.to_value()
}

fn render_report(report: &MetricReport, mean_sigma: Option<&[f64]>) -> String {
    let fmt = |v: Option<f64>| v.map_or("NA".to_string(), |x| format!("{x}"));
    let mut out = String::from("horizon,mae,rmse,mape");
    if mean_sigma.is_some() {
        out.push_str(",mean_sigma");
    }
    out.push('\n');
    for (k, h) in report.per_horizon.iter().enumerate() {
        let _ = write!(out, "{},{},{},{}", k + 1, fmt(h.mae), fmt(h.rmse), fmt(h.mape));
        if let Some(sig) = mean_sigma {
            let _ = write!(out, ",{}", sig[k]);
        }
        out.push('\n');
    }
    let agg = &report.aggregate;
    let _ = write!(
        out,
        "all,{},{},{}",
        fmt(agg.mae),
        fmt(agg.rmse),
        fmt(agg.mape)
    );
    if let Some(sig) = mean_sigma {
        let total: f64 = sig.iter().sum::<f64>() / sig.len() as f64;
        let _ = write!(out, ",{total}");
    }
    out.push('\n');
    out
}

fn cmd_eval(
    cfg: &RunConfig,
    checkpoint_path: &Path,
    split: &str,
    baseline_ha: bool,
    check: bool,
    out: &Option<PathBuf>,
) -> Result<(), CliError> {
    let checkpoint = Checkpoint::load(checkpoint_path)?;
    let seed = checkpoint
        .config
        .pointer("/train/seed")
        .and_then(serde_json::Value::as_u64)
        .unwrap_or(0);
    let config_value = config_with_seed(cfg, seed);
    if config_hash(&config_value) != checkpoint.config_hash {
        return Err(CliError::HashMismatch);
    }
    let pipeline = build_pipeline(cfg, seed)?;
    let ds = match split {
        "train" => &pipeline.train,
        "val" => &pipeline.val,
        "test" => &pipeline.test,
        other => {
            return Err(CliError::Config(format!(
                "split: expected train|val|test, got {other:?}"
            )))
        }
    };

    let truths = training::original_targets(ds, &pipeline.scaler);
    let (preds, mean_sigma) = if baseline_ha {
        let preds: Vec<Tensor> = ds
            .windows
            .iter()
            .map(|w| {
                let hist = pipeline.scaler.invert_rows(&w.history);
                ha_baseline(
                    &hist,
                    Some(&w.history_mask),
                    &pipeline.scaler.mean,
                    ds.upsilon,
                )
            })
            .collect();
        (preds, None)
    } else {
        let out = predict_dataset(&checkpoint.model, ds, &pipeline.scaler)?;
        let mean_sigma = out.sigma.as_ref().map(|sigmas| {
            let mut per_horizon = vec![0.0; ds.upsilon];
            for s in sigmas {
                for i in 0..s.rows() {
                    for k in 0..ds.upsilon {
                        per_horizon[k] += s.at(i, k);
                    }
                }
            }
            let count = (sigmas.len() * pipeline.n) as f64;
            per_horizon.iter().map(|v| v / count).collect::<Vec<f64>>()
        });
        (out.point, mean_sigma)
    };
    let report = compute_metrics(&truths, &preds, None)?;
    let rendered = render_report(&report, mean_sigma.as_deref());
    print!("{rendered}");

    let path = out
        .clone()
        .unwrap_or_else(|| PathBuf::from(format!("report_{split}.csv")));
    std::fs::write(&path, &rendered)
        .map_err(|e| CliError::Other(format!("cannot write report: {e}")))?;
    if check {
        let reread = std::fs::read_to_string(&path)
            .map_err(|e| CliError::Other(format!("cannot re-read report: {e}")))?;
        if reread != rendered {
            return Err(CliError::Other("report failed to round-trip".into()));
        }
        println!("report round-trips");
    }
    Ok(())
}

fn cmd_forecast(
    checkpoint_path: &Path,
    window_path: &Path,
    mask_path: Option<&Path>,
    out: &Option<PathBuf>,
) -> Result<(), CliError> {
    let checkpoint = Checkpoint::load(checkpoint_path)?;
    let dims = &checkpoint.model.dims;
    let series = load_series(window_path)?;
    if series.len() != dims.tau {
        return Err(CliError::Config(format!(
            "window: expected exactly {} rows, got {}",
            dims.tau,
            series.len()
        )));
    }
    if series.num_sensors() != dims.n {
        return Err(CliError::Config(format!(
            "window: expected {} sensors, got {}",
            dims.n,
            series.num_sensors()
        )));
    }
    let mask = match mask_path {
        Some(path) => {
            let mask_series = load_series(path)?;
            if mask_series.len() != dims.tau || mask_series.num_sensors() != dims.n {
                return Err(CliError::Config("mask: shape mismatch with window".into()));
            }
            let cells: Result<Vec<u8>, CliError> = mask_series
                .values()
                .iter()
                .map(|&v| match v {
                    v if v == 0.0 => Ok(0u8),
                    v if v == 1.0 => Ok(1u8),
                    other => Err(CliError::Config(format!(
                        "mask: cells must be 0 or 1, got {other}"
                    ))),
                })
                .collect();
            Some(cells?)
        }
        None => None,
    };

    let scaled = checkpoint.scaler.apply(&series);
    let (n, tau, ups) = (dims.n, dims.tau, dims.upsilon);
    let mut history = vec![0.0; n * tau];
    let mut history_mask = vec![1.0; n * tau];
    for s in 0..tau {
        for i in 0..n {
            let observed = mask.as_ref().map_or(1.0, |m| f64::from(m[s * n + i]));
            history_mask[i * tau + s] = observed;
            history[i * tau + s] = scaled.at(s, i) * observed;
        }
    }
    let window = Window {
        history: Tensor::new(vec![n, tau], history)?,
        target: Tensor::zeros(vec![n, ups]),
        history_mask: Tensor::new(vec![n, tau], history_mask)?,
        start: 0,
    };

    let mut tape = Tape::new();
    let bound = checkpoint.model.bind(&mut tape);
    let fwd = checkpoint.model.forward_batch(
        &mut tape,
        &bound,
        &[&window],
        IncidenceMode::EvalHard,
        0,
        None,
    )?;
    let point = checkpoint.scaler.invert_rows(tape.value(fwd.predictions[0]));
    let sigma = fwd.sigma2.as_ref().map(|s2| {
        let scaled = tape.value(s2[0]);
        let sd: Vec<f64> = scaled.values().iter().map(|v| v.sqrt()).collect();
        checkpoint
            .scaler
            .scale_rows_by_std(&Tensor::new(scaled.shape().to_vec(), sd).expect("sigma shape"))
    });

    let mut rendered = String::from(if sigma.is_some() {
        "sensor,horizon_step,y_pred,sigma\n"
    } else {
        "sensor,horizon_step,y_pred\n"
    });
    for i in 0..n {
        for k in 0..ups {
            let _ = write!(
                rendered,
                "{},{},{}",
                checkpoint.sensor_ids[i],
                k + 1,
                point.at(i, k)
            );
            if let Some(s) = &sigma {
                let _ = write!(rendered, ",{}", s.at(i, k));
            }
            rendered.push('\n');
        }
    }
    let path = out
        .clone()
        .unwrap_or_else(|| PathBuf::from("forecast.csv"));
    std::fs::write(&path, &rendered)
        .map_err(|e| CliError::Other(format!("cannot write forecast: {e}")))?;
    println!("wrote {} forecast rows to {}", n * ups, path.display());
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_synth(
    nodes: usize,
    steps: usize,
    hyperedges: usize,
    ring_neighbors: usize,
    theta: f64,
    amplitude: f64,
    period: f64,
    noise: f64,
    seed: u64,
    out: &Option<PathBuf>,
) -> Result<(), CliError> {
    let dir = out_dir(out)?;
    let adjacency = ring_adjacency(nodes, ring_neighbors);
    let incidence = community_incidence(nodes, hyperedges);
    let spec = SyntheticSpec {
        n: nodes,
        t: steps,
        theta,
        season_amplitude: amplitude,
        season_period: period,
        noise_std: noise,
        seed,
    };
    let (series, truth) = generate_synthetic(&spec, &adjacency, &incidence, hyperedges)?;
    write_series(&dir.join("series.csv"), &series)?;
    let distances = distances_from_adjacency(&truth.adjacency, nodes, 1.0, 10.0);
    write_distances(&dir.join("distances.csv"), &series.sensor_ids, &distances)?;
    write_binary_matrix(
        &dir.join("truth_adjacency.csv"),
        &truth.adjacency,
        nodes,
        nodes,
    )?;
    write_binary_matrix(
        &dir.join("truth_incidence.csv"),
        &truth.incidence,
        nodes,
        hyperedges,
    )?;
    println!(
        "wrote synthetic dataset: {} sensors x {} steps, {} communities",
        nodes, steps, hyperedges
    );
    Ok(())
}

fn write_binary_matrix(path: &Path, values: &[u8], rows: usize, cols: usize) -> Result<(), CliError> {
    let mut out = String::new();
    for r in 0..rows {
        for c in 0..cols {
            if c > 0 {
                out.push(',');
            }
            let _ = write!(out, "{}", values[r * cols + c]);
        }
        out.push('\n');
    }
    std::fs::write(path, out).map_err(|e| CliError::Other(format!("cannot write matrix: {e}")))
}

fn cmd_corrupt(
    series_path: &Path,
    scheme: &str,
    rate: f64,
    p_failure: f64,
    seed: u64,
    out: &Option<PathBuf>,
) -> Result<(), CliError> {
    let dir = out_dir(out)?;
    let series = load_series(series_path)?;
    let (t, n) = (series.len(), series.num_sensors());
    let mask: MissingnessMask = match scheme {
        "point" => simulate_point_missing(t, n, rate, seed)?,
        "block" => simulate_block_missing(t, n, rate, p_failure, seed)?,
        other => {
            return Err(CliError::Config(format!(
                "scheme: expected point|block, got {other:?}"
            )))
        }
    };
    // masked dataset: unobserved cells zeroed, mask carried alongside
    let masked_values: Vec<f64> = series
        .values()
        .iter()
        .enumerate()
        .map(|(k, &v)| if mask.mask[k] == 1 { v } else { 0.0 })
        .collect();
    let masked = RawSeries::new(series.sensor_ids.clone(), masked_values)?;
    write_series(&dir.join("series_masked.csv"), &masked)?;
    mask.write(&dir.join("mask.csv"), &series.sensor_ids)?;
    println!(
        "wrote masked series and mask (achieved missing fraction {:.4})",
        mask.missing_fraction()
    );
    Ok(())
}

fn cmd_export_structure(checkpoint_path: &Path, out: &Option<PathBuf>) -> Result<(), CliError> {
    let checkpoint = Checkpoint::load(checkpoint_path)?;
    if !checkpoint.model.dims.has_hypergraph() {
        return Err(CliError::AblatedExport);
    }
    let dir = out_dir(out)?;
    let (n, m) = (checkpoint.model.dims.n, checkpoint.model.dims.m);

    let mut tape = Tape::new();
    let emb = HgEmbeddings {
        nodes: tape.leaf(
            checkpoint
                .model
                .params
                .get("hg.emb_nodes")
                .expect("hypergraph checkpoint")
                .clone(),
        ),
        edges: tape.leaf(
            checkpoint
                .model
                .params
                .get("hg.emb_edges")
                .expect("hypergraph checkpoint")
                .clone(),
        ),
    };
    let s = pairwise_similarity(&mut tape, &emb)?;
    let probs = edge_probabilities(&mut tape, s)?;
    let sample = gumbel_sample(
        &mut tape,
        &probs,
        checkpoint.model.dims.gamma,
        None,
        IncidenceMode::EvalHard,
    )?;

    write_binary_matrix(&dir.join("incidence.csv"), &sample.hard, n, m)?;
    let p0 = tape.value(probs.connected);
    let mut rendered = String::new();
    for i in 0..n {
        for j in 0..m {
            if j > 0 {
                rendered.push(',');
            }
            let _ = write!(rendered, "{}", p0.at(i, j));
        }
        rendered.push('\n');
    }
    std::fs::write(dir.join("edge_probabilities.csv"), rendered)
        .map_err(|e| CliError::Other(format!("cannot write probabilities: {e}")))?;

    for j in 0..m {
        let incident: usize = (0..n).map(|i| sample.hard[i * m + j] as usize).sum();
        println!(
            "hyperedge {}: incident fraction {}",
            j,
            incident as f64 / n as f64
        );
    }
    Ok(())
}

/// Entry point used by the binary; returns the process exit code.
pub fn run(cli: Cli) -> i32 {
    match dispatch(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    let load_cfg = |path: &Option<PathBuf>| -> Result<RunConfig, CliError> {
        let path = path
            .as_ref()
            .ok_or_else(|| CliError::Config("--config is required for this command".into()))?;
        RunConfig::load(path)
    };
    match &cli.command {
        Command::Train => {
            let cfg = load_cfg(&cli.config)?;
            let seed = cli.seed.unwrap_or(cfg.train.seed);
            cmd_train(&cfg, seed, &cli.out)
        }
        Command::Eval {
            checkpoint,
            split,
            baseline_ha,
            check,
        } => {
            let cfg = load_cfg(&cli.config)?;
            cmd_eval(&cfg, checkpoint, split, *baseline_ha, *check, &cli.out)
        }
        Command::Forecast {
            checkpoint,
            window,
            mask,
        } => cmd_forecast(checkpoint, window, mask.as_deref(), &cli.out),
        Command::Synth {
            nodes,
            steps,
            hyperedges,
            ring_neighbors,
            theta,
            amplitude,
            period,
            noise,
        } => cmd_synth(
            *nodes,
            *steps,
            *hyperedges,
            *ring_neighbors,
            *theta,
            *amplitude,
            *period,
            *noise,
            cli.seed.unwrap_or(0),
            &cli.out,
        ),
        Command::Corrupt {
            series,
            scheme,
            rate,
            p_failure,
        } => cmd_corrupt(
            series,
            scheme,
            *rate,
            *p_failure,
            cli.seed.unwrap_or(0),
            &cli.out,
        ),
        Command::ExportStructure { checkpoint } => cmd_export_structure(checkpoint, &cli.out),
    }
}
