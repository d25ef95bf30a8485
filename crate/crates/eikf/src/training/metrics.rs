//! Forecast accuracy metrics (MAE, RMSE, MAPE) per horizon and aggregate,
//! always on the original scale, plus the historical-average baseline.

use crate::numeric::Tensor;

use super::{Result, TrainingError};

/// Metrics for one horizon (or the aggregate). `None` marks an undefined
/// metric: every cell masked, or (for MAPE) no nonzero-truth cells.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HorizonMetrics {
    pub mae: Option<f64>,
    pub rmse: Option<f64>,
    pub mape: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct MetricReport {
    /// One entry per horizon step, in order.
    pub per_horizon: Vec<HorizonMetrics>,
    pub aggregate: HorizonMetrics,
    /// Cells excluded by the target mask.
    pub excluded_cells: usize,
}

/// Truth cells with |y| below this are excluded from MAPE.
pub const MAPE_EPS: f64 = 1e-4;

#[derive(Default, Clone, Copy)]
struct Accumulator {
    abs: f64,
    sq: f64,
    count: usize,
    ape: f64,
    ape_count: usize,
}

impl Accumulator {
    fn push(&mut self, truth: f64, pred: f64) {
        let e = pred - truth;
        self.abs += e.abs();
        self.sq += e * e;
        self.count += 1;
        if truth.abs() > MAPE_EPS {
            self.ape += (e / truth).abs();
            self.ape_count += 1;
        }
    }

    fn report(&self) -> HorizonMetrics {
        if self.count == 0 {
            return HorizonMetrics {
                mae: None,
                rmse: None,
                mape: None,
            };
        }
        HorizonMetrics {
            mae: Some(self.abs / self.count as f64),
            rmse: Some((self.sq / self.count as f64).sqrt()),
            mape: (self.ape_count > 0).then(|| 100.0 * self.ape / self.ape_count as f64),
        }
    }
}

/// Per-horizon and aggregate metrics over windows of n×υ truth/prediction
/// pairs (original scale). `masks`, when given, marks target cells to keep
/// (1 = evaluate), one n×υ tensor per window.
pub fn compute_metrics(
    truths: &[Tensor],
    preds: &[Tensor],
    masks: Option<&[Tensor]>,
) -> Result<MetricReport> {
    if truths.len() != preds.len() || truths.is_empty() {
        return Err(TrainingError::Invalid(format!(
            "metric inputs mismatch: {} truths vs {} predictions",
            truths.len(),
            preds.len()
        )));
    }
    let upsilon = truths[0].cols();
    let mut horizons = vec![Accumulator::default(); upsilon];
    let mut total = Accumulator::default();
    let mut excluded = 0usize;
    for (w, (truth, pred)) in truths.iter().zip(preds).enumerate() {
        if truth.shape() != pred.shape() {
            return Err(TrainingError::Invalid(format!(
                "window {w}: truth {:?} vs prediction {:?}",
                truth.shape(),
                pred.shape()
            )));
        }
        let mask = masks.map(|m| &m[w]);
        for i in 0..truth.rows() {
            for k in 0..upsilon {
                if let Some(m) = mask {
                    if m.at(i, k) == 0.0 {
                        excluded += 1;
                        continue;
                    }
                }
                horizons[k].push(truth.at(i, k), pred.at(i, k));
                total.push(truth.at(i, k), pred.at(i, k));
            }
        }
    }
    Ok(MetricReport {
        per_horizon: horizons.iter().map(Accumulator::report).collect(),
        aggregate: total.report(),
        excluded_cells: excluded,
    })
}

/// Historical average: per-node mean of the observed history repeated across
/// all υ horizons. A fully masked history row falls back to that node's
/// training mean.
pub fn ha_baseline(
    history: &Tensor,
    history_mask: Option<&Tensor>,
    train_mean: &[f64],
    upsilon: usize,
) -> Tensor {
    let (n, tau) = (history.rows(), history.cols());
    let mut out = Tensor::zeros(vec![n, upsilon]);
    for i in 0..n {
        let mut sum = 0.0;
        let mut count = 0usize;
        for s in 0..tau {
            let observed = history_mask.map_or(true, |m| m.at(i, s) != 0.0);
            if observed {
                sum += history.at(i, s);
                count += 1;
            }
        }
        let level = if count > 0 {
            sum / count as f64
        } else {
            train_mean[i]
        };
        for k in 0..upsilon {
            out.set(i, k, level);
        }
    }
    out
}
