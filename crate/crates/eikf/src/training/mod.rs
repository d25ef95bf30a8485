//! Losses, optimizer, schedule, early stopping, the training loop, and
//! dataset-level prediction/evaluation.

mod checkpoint;
mod metrics;

pub use checkpoint::{config_hash, Checkpoint, CHECKPOINT_VERSION};
pub use metrics::{compute_metrics, ha_baseline, HorizonMetrics, MetricReport, MAPE_EPS};

use std::sync::OnceLock;

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::data::{ScalerStats, Window, WindowedDataset};
use crate::hg_infer::{sparsity_penalty, IncidenceMode};
use crate::model::{derive_seed, BatchForward, ModelState, ParamStore};
use crate::numeric::{NumericError, Tape, Tensor, TensorId};
use crate::temporal::VAR_FLOOR;

#[derive(Debug, Error)]
pub enum TrainingError {
    #[error("{0}")]
    Invalid(String),
    #[error("epoch {epoch}, batch {batch}: {source}")]
    Batch {
        epoch: usize,
        batch: usize,
        #[source]
        source: NumericError,
    },
    #[error(transparent)]
    Numeric(#[from] NumericError),
}

pub type Result<T> = std::result::Result<T, TrainingError>;

// ── losses ───────────────────────────────────────────────────────────────

/// Mean of |target − prediction| over every entry (scaled domain during
/// training).
pub fn mae_loss(
    tape: &mut Tape,
    target: TensorId,
    pred: TensorId,
) -> crate::numeric::Result<TensorId> {
    if tape.shape(target) != tape.shape(pred) {
        return Err(NumericError::ShapeMismatch {
            op: "mae_loss",
            lhs: tape.shape(target).to_vec(),
            rhs: tape.shape(pred).to_vec(),
        });
    }
    let diff = tape.sub(target, pred)?;
    let abs = tape.abs(diff)?;
    tape.mean_all(abs)
}

/// Mean over entries of log(σ²)/2 + (x−μ)²/(2σ²), the Gaussian negative log
/// likelihood with the constant dropped.
pub fn gaussian_nll(
    tape: &mut Tape,
    target: TensorId,
    mu: TensorId,
    sigma2: TensorId,
) -> crate::numeric::Result<TensorId> {
    let floor_ok = tape
        .value(sigma2)
        .values()
        .iter()
        .all(|&v| v >= VAR_FLOOR * (1.0 - 1e-12));
    if !floor_ok {
        return Err(NumericError::Domain {
            op: "gaussian_nll",
            reason: format!("sigma^2 below the {VAR_FLOOR} floor"),
        });
    }
    let log_var = tape.log(sigma2)?;
    let half_log = tape.scale(log_var, 0.5)?;
    let resid = tape.sub(target, mu)?;
    let sq = tape.square(resid)?;
    let denom = tape.scale(sigma2, 2.0)?;
    let quad = tape.div(sq, denom)?;
    let per_cell = tape.add(half_log, quad)?;
    tape.mean_all(per_cell)
}

// ── optimizer ────────────────────────────────────────────────────────────

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

/// One bias-corrected Adam update over the whole store, with optional global
/// gradient-norm clipping before the step. `grads` aligns with the store's
/// entry order.
pub fn adam_step(
    params: &mut ParamStore,
    grads: &[Tensor],
    lr: f64,
    clip: Option<f64>,
) -> Result<()> {
    if grads.len() != params.entries.len() {
        return Err(TrainingError::Invalid(format!(
            "got {} gradients for {} parameters",
            grads.len(),
            params.entries.len()
        )));
    }
    let mut scale = 1.0;
    if let Some(max_norm) = clip {
        let norm_sq: f64 = grads
            .iter()
            .flat_map(|g| g.values())
            .map(|v| v * v)
            .sum();
        let norm = norm_sq.sqrt();
        if norm > max_norm {
            scale = max_norm / norm;
        }
    }
    params.step += 1;
    let t = params.step;
    let bc1 = 1.0 - ADAM_BETA1.powi(t as i32);
    let bc2 = 1.0 - ADAM_BETA2.powi(t as i32);
    for (entry, grad) in params.entries.iter_mut().zip(grads) {
        let g = grad.values();
        let m = entry.m.values_mut();
        for (mi, &gi) in m.iter_mut().zip(g) {
            *mi = ADAM_BETA1 * *mi + (1.0 - ADAM_BETA1) * gi * scale;
        }
        let v = entry.v.values_mut();
        for (vi, &gi) in v.iter_mut().zip(g) {
            let gs = gi * scale;
            *vi = ADAM_BETA2 * *vi + (1.0 - ADAM_BETA2) * gs * gs;
        }
        let (m, v) = (entry.m.values(), entry.v.values());
        for ((wi, &mi), &vi) in entry.value.values_mut().iter_mut().zip(m).zip(v) {
            let m_hat = mi / bc1;
            let v_hat = vi / bc2;
            *wi -= lr * m_hat / (v_hat.sqrt() + ADAM_EPS);
        }
    }
    Ok(())
}

// ── schedules ────────────────────────────────────────────────────────────

/// Halve-on-plateau: after `patience` consecutive epochs without improving
/// the best value, signals a cut and restarts its counter.
#[derive(Debug, Clone)]
pub struct PlateauScheduler {
    patience: usize,
    best: Option<f64>,
    bad_epochs: usize,
}

impl PlateauScheduler {
    pub fn new(patience: usize) -> Self {
        Self {
            patience,
            best: None,
            bad_epochs: 0,
        }
    }

    /// Returns true when the learning rate should be cut this epoch.
    pub fn observe(&mut self, val: f64) -> bool {
        match self.best {
            None => {
                self.best = Some(val);
                false
            }
            Some(best) if val < best => {
                self.best = Some(val);
                self.bad_epochs = 0;
                false
            }
            _ => {
                self.bad_epochs += 1;
                if self.bad_epochs >= self.patience {
                    self.bad_epochs = 0;
                    true
                } else {
                    false
                }
            }
        }
    }
}

/// Stop after `patience` consecutive epochs without a new best value.
#[derive(Debug, Clone)]
pub struct EarlyStopper {
    patience: usize,
    best: Option<f64>,
    bad_epochs: usize,
}

impl EarlyStopper {
    pub fn new(patience: usize) -> Self {
        Self {
            patience,
            best: None,
            bad_epochs: 0,
        }
    }

    pub fn observe(&mut self, val: f64) -> bool {
        match self.best {
            None => {
                self.best = Some(val);
                false
            }
            Some(best) if val < best => {
                self.best = Some(val);
                self.bad_epochs = 0;
                false
            }
            _ => {
                self.bad_epochs += 1;
                self.bad_epochs >= self.patience
            }
        }
    }
}

// ── prediction / evaluation ──────────────────────────────────────────────

/// Worker pool sized by EIKF_THREADS (default: available parallelism).
fn thread_pool() -> &'static rayon::ThreadPool {
    static POOL: OnceLock<rayon::ThreadPool> = OnceLock::new();
    POOL.get_or_init(|| {
        let threads = std::env::var("EIKF_THREADS")
            .ok()
            .and_then(|s| s.parse::<usize>().ok())
            .filter(|&t| t >= 1)
            .unwrap_or_else(|| {
                std::thread::available_parallelism()
                    .map(std::num::NonZeroUsize::get)
                    .unwrap_or(1)
            });
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .expect("thread pool")
    })
}

/// Original-scale predictions for every window (deterministic eval-hard
/// incidence). σ, when present, is also on the original scale.
#[derive(Debug)]
pub struct DatasetPrediction {
    pub point: Vec<Tensor>,
    pub sigma: Option<Vec<Tensor>>,
}

pub fn predict_dataset(
    model: &ModelState,
    ds: &WindowedDataset,
    scaler: &ScalerStats,
) -> Result<DatasetPrediction> {
    let windows: Vec<&Window> = ds.windows.iter().collect();
    let chunk_results: Vec<Result<(Vec<Tensor>, Vec<Tensor>)>> = thread_pool().install(|| {
        windows
            .par_chunks(64.max(windows.len() / thread_pool().current_num_threads().max(1) + 1))
            .map(|chunk| predict_chunk(model, chunk, scaler))
            .collect()
    });
    let mut point = Vec::with_capacity(windows.len());
    let mut sigma = Vec::with_capacity(windows.len());
    for result in chunk_results {
        let (p, s) = result?;
        point.extend(p);
        sigma.extend(s);
    }
    Ok(DatasetPrediction {
        point,
        sigma: model.dims.uncertainty.then_some(sigma),
    })
}

fn predict_chunk(
    model: &ModelState,
    chunk: &[&Window],
    scaler: &ScalerStats,
) -> Result<(Vec<Tensor>, Vec<Tensor>)> {
    let mut tape = Tape::new();
    let bound = model.bind(&mut tape);
    let out = model.forward_batch(&mut tape, &bound, chunk, IncidenceMode::EvalHard, 0, None)?;
    let mut point = Vec::with_capacity(chunk.len());
    let mut sigma = Vec::new();
    for (w, &pred) in out.predictions.iter().enumerate() {
        point.push(scaler.invert_rows(tape.value(pred)));
        if let Some(s2) = &out.sigma2 {
            let scaled = tape.value(s2[w]);
            let sd_vals: Vec<f64> = scaled.values().iter().map(|v| v.sqrt()).collect();
            let sd = Tensor::new(scaled.shape().to_vec(), sd_vals)
                .expect("sigma shape preserved");
            sigma.push(scaler.scale_rows_by_std(&sd));
        }
        let _ = w;
    }
    Ok((point, sigma))
}

/// Original-scale targets for each window of a dataset.
pub fn original_targets(ds: &WindowedDataset, scaler: &ScalerStats) -> Vec<Tensor> {
    ds.windows
        .iter()
        .map(|w| scaler.invert_rows(&w.target))
        .collect()
}

/// Aggregate original-scale MAE of the model over a dataset.
pub fn evaluate_mae(model: &ModelState, ds: &WindowedDataset, scaler: &ScalerStats) -> Result<f64> {
    let preds = predict_dataset(model, ds, scaler)?;
    let truths = original_targets(ds, scaler);
    let report = compute_metrics(&truths, &preds.point, None)?;
    report
        .aggregate
        .mae
        .ok_or_else(|| TrainingError::Invalid("empty evaluation set".into()))
}

// ── training loop ────────────────────────────────────────────────────────

#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub lr: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub lr_patience: usize,
    pub lr_factor: f64,
    pub early_patience: usize,
    pub seed: u64,
    pub grad_clip: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            batch_size: 18,
            max_epochs: 30,
            lr_patience: 5,
            lr_factor: 0.5,
            early_patience: 10,
            seed: 0,
            grad_clip: Some(5.0),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_mae: f64,
    pub lr: f64,
}

#[derive(Debug)]
pub struct TrainOutcome {
    pub best_val_mae: f64,
    pub epochs_run: usize,
    pub log: Vec<EpochRecord>,
}

/// Scaled-domain loss for one batch: MAE or Gaussian NLL over all window
/// entries, plus the sparsity penalty when the hypergraph expert is on.
fn batch_loss(
    tape: &mut Tape,
    model: &ModelState,
    windows: &[&Window],
    out: &BatchForward,
) -> crate::numeric::Result<TensorId> {
    let target_rows: usize = windows.iter().map(|w| w.target.rows()).sum();
    let upsilon = windows[0].target.cols();
    let mut target_vals = Vec::with_capacity(target_rows * upsilon);
    for w in windows {
        target_vals.extend_from_slice(w.target.values());
    }
    let targets = tape.leaf(Tensor::new(vec![target_rows, upsilon], target_vals)?);

    let preds = tape.concat(&out.predictions, 0)?;
    let mut loss = match &out.sigma2 {
        Some(sigma2) => {
            let sig = tape.concat(sigma2, 0)?;
            gaussian_nll(tape, targets, preds, sig)?
        }
        None => mae_loss(tape, targets, preds)?,
    };
    if model.lambda_sparsity > 0.0 {
        if let Some(probs) = &out.probs {
            let penalty = sparsity_penalty(tape, probs, model.lambda_sparsity)?;
            loss = tape.add(loss, penalty)?;
        }
    }
    Ok(loss)
}

/// Run one gradient step over a batch; returns the scalar loss.
pub fn train_batch(
    model: &mut ModelState,
    windows: &[&Window],
    lr: f64,
    clip: Option<f64>,
    noise_seed: u64,
    dropout_seed: Option<u64>,
) -> Result<f64> {
    let mut tape = Tape::new();
    let bound = model.bind(&mut tape);
    let out = model.forward_batch(
        &mut tape,
        &bound,
        windows,
        IncidenceMode::TrainSt,
        noise_seed,
        dropout_seed,
    )?;
    let loss = batch_loss(&mut tape, model, windows, &out)?;
    let loss_value = tape.value(loss).item();
    if !loss_value.is_finite() {
        return Err(TrainingError::Numeric(NumericError::NonFinite {
            op: "batch_loss",
        }));
    }
    let grads = tape.backward(loss)?;
    let collected: Vec<Tensor> = model
        .params
        .entries
        .iter()
        .zip(&bound.ids)
        .map(|(entry, &id)| grads.get_or_zeros(id, entry.value.shape()))
        .collect();
    adam_step(&mut model.params, &collected, lr, clip)?;
    Ok(loss_value)
}

/// Full training protocol: shuffled batches, per-batch incidence resampling,
/// Adam with global-norm clipping, per-epoch validation MAE on the original
/// scale, halve-on-plateau learning rate, early stopping, and best-model
/// restoration.
pub fn train_loop(
    model: &mut ModelState,
    train: &WindowedDataset,
    val: &WindowedDataset,
    scaler: &ScalerStats,
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    if train.windows.is_empty() || val.windows.is_empty() {
        return Err(TrainingError::Invalid(
            "training and validation splits must be non-empty".into(),
        ));
    }
    if cfg.batch_size == 0 || cfg.max_epochs == 0 {
        return Err(TrainingError::Invalid(
            "batch size and epoch count must be positive".into(),
        ));
    }
    let mut lr = cfg.lr;
    let mut scheduler = PlateauScheduler::new(cfg.lr_patience);
    let mut stopper = EarlyStopper::new(cfg.early_patience);
    let mut best_val = f64::INFINITY;
    let mut best_params: Option<ParamStore> = None;
    let mut log = Vec::new();

    let mut epochs_run = 0;
    for epoch in 1..=cfg.max_epochs {
        epochs_run = epoch;
        let mut order: Vec<usize> = (0..train.windows.len()).collect();
        shuffle(&mut order, derive_seed(cfg.seed, "shuffle", epoch as u64));

        let mut loss_sum = 0.0;
        let mut batches = 0usize;
        for (batch_idx, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let windows: Vec<&Window> = chunk.iter().map(|&i| &train.windows[i]).collect();
            let noise_seed = derive_seed(
                cfg.seed,
                "gumbel",
                (epoch as u64) << 32 | batch_idx as u64,
            );
            let dropout_seed = derive_seed(
                cfg.seed,
                "dropout",
                (epoch as u64) << 32 | batch_idx as u64,
            );
            let loss = train_batch(
                model,
                &windows,
                lr,
                cfg.grad_clip,
                noise_seed,
                Some(dropout_seed),
            )
            .map_err(|e| match e {
                TrainingError::Numeric(source) => TrainingError::Batch {
                    epoch,
                    batch: batch_idx,
                    source,
                },
                other => other,
            })?;
            loss_sum += loss;
            batches += 1;
        }

        let val_mae = evaluate_mae(model, val, scaler)?;
        log.push(EpochRecord {
            epoch,
            train_loss: loss_sum / batches as f64,
            val_mae,
            lr,
        });
        if val_mae < best_val {
            best_val = val_mae;
            best_params = Some(model.params.clone());
        }
        if scheduler.observe(val_mae) {
            lr *= cfg.lr_factor;
        }
        if stopper.observe(val_mae) {
            break;
        }
    }

    if let Some(best) = best_params {
        model.params = best;
    }
    Ok(TrainOutcome {
        best_val_mae: best_val,
        epochs_run,
        log,
    })
}

/// Fisher-Yates with a dedicated stream so epoch order is reproducible.
fn shuffle(indices: &mut [usize], seed: u64) {
    use rand::Rng;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for i in (1..indices.len()).rev() {
        let j = rng.gen_range(0..=i);
        indices.swap(i, j);
    }
}

/// Render the epoch log as the delimited text the train command writes.
pub fn epoch_log_to_csv(log: &[EpochRecord]) -> String {
    let mut out = String::from("epoch,train_loss,val_mae,lr\n");
    for rec in log {
        out.push_str(&format!(
            "{},{},{},{}\n",
            rec.epoch, rec.train_loss, rec.val_mae, rec.lr
        ));
    }
    out
}
