//! Raw series storage, delimited-text loading, chronological splits, and the
//! per-column z-score scaler.

use std::fmt::Write as _;
use std::path::Path;

use crate::numeric::Tensor;
use serde::{Deserialize, Serialize};

use super::{DataError, Result};

/// Multivariate series: `t` rows of observations for `n` sensors, row-major.
/// Missingness is represented by a separate mask, never by NaN.
#[derive(Debug, Clone)]
pub struct RawSeries {
    pub sensor_ids: Vec<String>,
    values: Vec<f64>,
    t: usize,
    n: usize,
}

impl RawSeries {
    pub fn new(sensor_ids: Vec<String>, values: Vec<f64>) -> Result<Self> {
        let n = sensor_ids.len();
        if n < 2 {
            return Err(DataError::Invalid(format!(
                "a series needs at least 2 sensors, got {n}"
            )));
        }
        if values.len() % n != 0 {
            return Err(DataError::Invalid(format!(
                "value count {} is not a multiple of sensor count {n}",
                values.len()
            )));
        }
        let t = values.len() / n;
        Ok(Self {
            sensor_ids,
            values,
            t,
            n,
        })
    }

    pub fn len(&self) -> usize {
        self.t
    }

    pub fn is_empty(&self) -> bool {
        self.t == 0
    }

    pub fn num_sensors(&self) -> usize {
        self.n
    }

    pub fn at(&self, t: usize, i: usize) -> f64 {
        self.values[t * self.n + i]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn row(&self, t: usize) -> &[f64] {
        &self.values[t * self.n..(t + 1) * self.n]
    }

    /// Contiguous sub-series covering rows `[start, start + len)`.
    pub fn segment(&self, start: usize, len: usize) -> RawSeries {
        RawSeries {
            sensor_ids: self.sensor_ids.clone(),
            values: self.values[start * self.n..(start + len) * self.n].to_vec(),
            t: len,
            n: self.n,
        }
    }
}

/// Parse a delimited series file: header row of sensor ids, one row per step.
/// Row/col positions in errors are 1-based over data rows.
pub fn load_series(path: &Path) -> Result<RawSeries> {
    let text = std::fs::read_to_string(path).map_err(|source| DataError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let path_s = path.display().to_string();
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header = lines.next().ok_or_else(|| DataError::Parse {
        path: path_s.clone(),
        row: 0,
        col: 0,
        reason: "empty file".into(),
    })?;
    let sensor_ids: Vec<String> = header.split(',').map(|s| s.trim().to_string()).collect();
    let n = sensor_ids.len();
    if n < 2 {
        return Err(DataError::Parse {
            path: path_s,
            row: 0,
            col: n,
            reason: format!("need at least 2 columns, got {n}"),
        });
    }

    let mut values = Vec::new();
    for (r, line) in lines.enumerate() {
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() != n {
            return Err(DataError::Parse {
                path: path_s,
                row: r + 1,
                col: cells.len(),
                reason: format!("ragged row: expected {n} cells, got {}", cells.len()),
            });
        }
        for (c, cell) in cells.iter().enumerate() {
            let v: f64 = cell.trim().parse().map_err(|_| DataError::Parse {
                path: path_s.clone(),
                row: r + 1,
                col: c + 1,
                reason: format!("non-numeric cell {cell:?}"),
            })?;
            if !v.is_finite() {
                return Err(DataError::Parse {
                    path: path_s.clone(),
                    row: r + 1,
                    col: c + 1,
                    reason: "non-finite value".into(),
                });
            }
            values.push(v);
        }
    }
    if values.is_empty() {
        return Err(DataError::Parse {
            path: path_s,
            row: 1,
            col: 0,
            reason: "no data rows".into(),
        });
    }
    RawSeries::new(sensor_ids, values)
}

pub fn write_series(path: &Path, series: &RawSeries) -> Result<()> {
    let mut out = String::new();
    out.push_str(&series.sensor_ids.join(","));
    out.push('\n');
    for t in 0..series.len() {
        let mut first = true;
        for i in 0..series.num_sensors() {
            if !first {
                out.push(',');
            }
            let _ = write!(out, "{}", series.at(t, i));
            first = false;
        }
        out.push('\n');
    }
    std::fs::write(path, out).map_err(|source| DataError::Io {
        path: path.display().to_string(),
        source,
    })
}

/// A chronological split segment and its start offset in the parent series.
#[derive(Debug, Clone)]
pub struct Splits {
    pub train: RawSeries,
    pub val: RawSeries,
    pub test: RawSeries,
    pub val_start: usize,
    pub test_start: usize,
}

/// Split a series into contiguous, ordered train/val/test segments. Lengths
/// are a floor allocation with the remainder going to train. `min_len` is the
/// smallest viable segment (τ + υ).
pub fn chronological_split(
    series: &RawSeries,
    ratios: (f64, f64, f64),
    min_len: usize,
) -> Result<Splits> {
    let (a, b, c) = ratios;
    if a <= 0.0 || b <= 0.0 || c <= 0.0 {
        return Err(DataError::Invalid(format!(
            "split ratios must be positive, got {ratios:?}"
        )));
    }
    if (a + b + c - 1.0).abs() > 1e-9 {
        return Err(DataError::Invalid(format!(
            "split ratios must sum to 1, got {ratios:?}"
        )));
    }
    let t = series.len();
    let len_val = (t as f64 * b).floor() as usize;
    let len_test = (t as f64 * c).floor() as usize;
    let mut len_train = (t as f64 * a).floor() as usize;
    len_train += t - (len_train + len_val + len_test); // remainder to train
    for (name, len) in [("train", len_train), ("val", len_val), ("test", len_test)] {
        if len < min_len {
            return Err(DataError::Invalid(format!(
                "{name} segment too short: {len} rows < minimum window span {min_len}"
            )));
        }
    }
    Ok(Splits {
        train: series.segment(0, len_train),
        val: series.segment(len_train, len_val),
        test: series.segment(len_train + len_val, len_test),
        val_start: len_train,
        test_start: len_train + len_val,
    })
}

/// Per-column z-score statistics, fit exclusively on the training split.
/// Population (divide-by-N) standard deviation.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ScalerStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

pub fn fit_scaler(train: &RawSeries) -> Result<ScalerStats> {
    let (t, n) = (train.len(), train.num_sensors());
    let mut mean = vec![0.0; n];
    for row in 0..t {
        for i in 0..n {
            mean[i] += train.at(row, i);
        }
    }
    for m in mean.iter_mut() {
        *m /= t as f64;
    }
    let mut var = vec![0.0; n];
    for row in 0..t {
        for i in 0..n {
            let d = train.at(row, i) - mean[i];
            var[i] += d * d;
        }
    }
    let mut std = vec![0.0; n];
    for i in 0..n {
        std[i] = (var[i] / t as f64).sqrt();
        if std[i] <= 0.0 {
            return Err(DataError::Invalid(format!(
                "constant column: sensor {:?} (index {i}) has zero variance",
                train.sensor_ids[i]
            )));
        }
    }
    Ok(ScalerStats { mean, std })
}

impl ScalerStats {
    pub fn apply(&self, series: &RawSeries) -> RawSeries {
        self.map(series, |v, m, s| (v - m) / s)
    }

    pub fn invert(&self, series: &RawSeries) -> RawSeries {
        self.map(series, |v, m, s| v * s + m)
    }

    fn map(&self, series: &RawSeries, f: impl Fn(f64, f64, f64) -> f64) -> RawSeries {
        let n = series.num_sensors();
        let values = series
            .values()
            .iter()
            .enumerate()
            .map(|(k, &v)| f(v, self.mean[k % n], self.std[k % n]))
            .collect();
        RawSeries::new(series.sensor_ids.clone(), values).expect("shape preserved")
    }

    /// Invert a per-node matrix (row i belongs to sensor i): x·std_i + mean_i.
    pub fn invert_rows(&self, m: &Tensor) -> Tensor {
        self.map_rows(m, |v, mu, s| v * s + mu)
    }

    /// Scale a per-node matrix by each sensor's std (used for σ outputs).
    pub fn scale_rows_by_std(&self, m: &Tensor) -> Tensor {
        self.map_rows(m, |v, _, s| v * s)
    }

    fn map_rows(&self, m: &Tensor, f: impl Fn(f64, f64, f64) -> f64) -> Tensor {
        let cols = m.cols();
        let values = m
            .values()
            .iter()
            .enumerate()
            .map(|(k, &v)| {
                let row = k / cols;
                f(v, self.mean[row], self.std[row])
            })
            .collect();
        Tensor::new(m.shape().to_vec(), values).expect("shape preserved")
    }
}
