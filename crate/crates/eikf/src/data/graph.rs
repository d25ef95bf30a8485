//! Explicit sensor graph: Gaussian-kernel thresholding of road-network
//! distances into a binary adjacency.

use std::fmt::Write as _;
use std::path::Path;

use super::series::RawSeries;
use super::{DataError, Result};

/// Binary adjacency over n sensors (zero diagonal, symmetric) plus the
/// distances it came from. Distances may be infinite for unknown pairs.
#[derive(Debug, Clone)]
pub struct ExplicitGraph {
    pub adjacency: Vec<u8>,
    pub distances: Vec<f64>,
    pub n: usize,
}

impl ExplicitGraph {
    pub fn edge(&self, i: usize, j: usize) -> bool {
        self.adjacency[i * self.n + j] == 1
    }

    pub fn num_edges(&self) -> usize {
        self.adjacency.iter().map(|&a| a as usize).sum::<usize>() / 2
    }
}

/// Kernel weights wᵢⱼ = exp(−dᵢⱼ²/σ_d²); edge iff wᵢⱼ ≥ ε_A and i ≠ j.
/// `kernel_width = None` defaults σ_d to the population std of all finite
/// off-diagonal distances.
pub fn build_adjacency(
    distances: &[f64],
    n: usize,
    kernel_width: Option<f64>,
    threshold: f64,
) -> Result<ExplicitGraph> {
    if distances.len() != n * n {
        return Err(DataError::Invalid(format!(
            "distance matrix must be {n}x{n}, got {} entries",
            distances.len()
        )));
    }
    for i in 0..n {
        if distances[i * n + i] != 0.0 {
            return Err(DataError::Invalid(format!(
                "distance diagonal must be zero (sensor {i})"
            )));
        }
        for j in 0..n {
            let d = distances[i * n + j];
            if d < 0.0 {
                return Err(DataError::Invalid(format!(
                    "negative distance at ({i}, {j})"
                )));
            }
            if d != distances[j * n + i] {
                return Err(DataError::Invalid(format!(
                    "asymmetric distances at ({i}, {j})"
                )));
            }
        }
    }
    let sigma = match kernel_width {
        Some(s) if s > 0.0 => s,
        Some(s) => {
            return Err(DataError::Invalid(format!(
                "kernel width must be positive, got {s}"
            )))
        }
        None => default_kernel_width(distances, n)?,
    };
    let mut adjacency = vec![0u8; n * n];
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let d = distances[i * n + j];
            let w = (-(d * d) / (sigma * sigma)).exp();
            if w >= threshold {
                adjacency[i * n + j] = 1;
            }
        }
    }
    Ok(ExplicitGraph {
        adjacency,
        distances: distances.to_vec(),
        n,
    })
}

fn default_kernel_width(distances: &[f64], n: usize) -> Result<f64> {
    let mut finite = Vec::new();
    for i in 0..n {
        for j in 0..n {
            if i != j && distances[i * n + j].is_finite() {
                finite.push(distances[i * n + j]);
            }
        }
    }
    if finite.is_empty() {
        return Err(DataError::Invalid(
            "no finite pairwise distances; cannot derive a kernel width".into(),
        ));
    }
    let mean = finite.iter().sum::<f64>() / finite.len() as f64;
    let var = finite.iter().map(|d| (d - mean) * (d - mean)).sum::<f64>() / finite.len() as f64;
    let std = var.sqrt();
    if std > 0.0 {
        Ok(std)
    } else if mean > 0.0 {
        Ok(mean)
    } else {
        Ok(1.0)
    }
}

/// Read an undirected distance list: header `from_id,to_id,distance`, one row
/// per pair. Pairs absent from the file are treated as infinitely far apart.
pub fn load_distances(path: &Path, series: &RawSeries) -> Result<Vec<f64>> {
    let text = std::fs::read_to_string(path).map_err(|source| DataError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let path_s = path.display().to_string();
    let n = series.num_sensors();
    let index = |id: &str| series.sensor_ids.iter().position(|s| s == id);

    let mut dist = vec![f64::INFINITY; n * n];
    for i in 0..n {
        dist[i * n + i] = 0.0;
    }
    for (r, line) in text.lines().enumerate().skip(1) {
        if line.trim().is_empty() {
            continue;
        }
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() != 3 {
            return Err(DataError::Parse {
                path: path_s,
                row: r,
                col: cells.len(),
                reason: "expected from_id,to_id,distance".into(),
            });
        }
        let from = index(cells[0].trim()).ok_or_else(|| DataError::Parse {
            path: path_s.clone(),
            row: r,
            col: 1,
            reason: format!("unknown sensor id {:?}", cells[0].trim()),
        })?;
        let to = index(cells[1].trim()).ok_or_else(|| DataError::Parse {
            path: path_s.clone(),
            row: r,
            col: 2,
            reason: format!("unknown sensor id {:?}", cells[1].trim()),
        })?;
        let d: f64 = cells[2].trim().parse().map_err(|_| DataError::Parse {
            path: path_s.clone(),
            row: r,
            col: 3,
            reason: format!("non-numeric distance {:?}", cells[2].trim()),
        })?;
        dist[from * n + to] = d;
        dist[to * n + from] = d;
    }
    Ok(dist)
}

pub fn write_distances(path: &Path, sensor_ids: &[String], distances: &[f64]) -> Result<()> {
    let n = sensor_ids.len();
    let mut out = String::from("from_id,to_id,distance\n");
    for i in 0..n {
        for j in i + 1..n {
            let d = distances[i * n + j];
            if d.is_finite() {
                let _ = writeln!(out, "{},{},{}", sensor_ids[i], sensor_ids[j], d);
            }
        }
    }
    std::fs::write(path, out).map_err(|source| DataError::Io {
        path: path.display().to_string(),
        source,
    })
}
