//! Missingness simulation: i.i.d. point dropout and per-sensor contiguous
//! outage blocks, both reproducible from a seed.

use std::fmt::Write as _;
use std::path::Path;

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use serde::{Deserialize, Serialize};

use super::{DataError, Result};

pub const BLOCK_MIN_LEN: usize = 4;
/// Calibration tolerance on the achieved missing fraction.
const RATE_TOL: f64 = 0.005;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MissingScheme {
    Point,
    Block,
}

impl std::fmt::Display for MissingScheme {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            MissingScheme::Point => write!(f, "point"),
            MissingScheme::Block => write!(f, "block"),
        }
    }
}

/// T×n observation mask, row-major over time; 1 = observed.
#[derive(Debug, Clone)]
pub struct MissingnessMask {
    pub mask: Vec<u8>,
    pub scheme: MissingScheme,
    pub rate: f64,
    pub t: usize,
    pub n: usize,
}

impl MissingnessMask {
    pub fn missing_fraction(&self) -> f64 {
        let zeros = self.mask.iter().filter(|&&m| m == 0).count();
        zeros as f64 / self.mask.len() as f64
    }

    pub fn observed(&self, t: usize, i: usize) -> bool {
        self.mask[t * self.n + i] == 1
    }

    /// Rows `[start, start+len)` of the mask, for windowing one split.
    pub fn rows(&self, start: usize, len: usize) -> &[u8] {
        &self.mask[start * self.n..(start + len) * self.n]
    }

    /// Mean length of unobserved runs along time, per sensor, averaged.
    pub fn mean_zero_run_length(&self) -> f64 {
        let mut total = 0usize;
        let mut runs = 0usize;
        for i in 0..self.n {
            let mut len = 0usize;
            for t in 0..self.t {
                if self.mask[t * self.n + i] == 0 {
                    len += 1;
                } else if len > 0 {
                    total += len;
                    runs += 1;
                    len = 0;
                }
            }
            if len > 0 {
                total += len;
                runs += 1;
            }
        }
        if runs == 0 {
            0.0
        } else {
            total as f64 / runs as f64
        }
    }

    pub fn write(&self, path: &Path, sensor_ids: &[String]) -> Result<()> {
        let mut out = String::new();
        out.push_str(&sensor_ids.join(","));
        out.push('\n');
        for t in 0..self.t {
            for i in 0..self.n {
                if i > 0 {
                    out.push(',');
                }
                let _ = write!(out, "{}", self.mask[t * self.n + i]);
            }
            out.push('\n');
        }
        std::fs::write(path, out).map_err(|source| DataError::Io {
            path: path.display().to_string(),
            source,
        })
    }
}

fn check_rate(rate: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&rate) {
        return Err(DataError::Invalid(format!(
            "missing rate must lie in [0, 1], got {rate}"
        )));
    }
    Ok(())
}

/// I.i.d. Bernoulli(1−rate) mask per (time, sensor) cell.
pub fn simulate_point_missing(
    t: usize,
    n: usize,
    rate: f64,
    seed: u64,
) -> Result<MissingnessMask> {
    check_rate(rate)?;
    let mut rng = StdRng::seed_from_u64(seed);
    let mask = (0..t * n)
        .map(|_| u8::from(rng.gen_range(0.0..1.0) >= rate))
        .collect();
    Ok(MissingnessMask {
        mask,
        scheme: MissingScheme::Point,
        rate,
        t,
        n,
    })
}

/// Per-sensor contiguous outages. Failures start i.i.d. with probability
/// `p_failure` per step (with a warm-up margin so coverage is stationary from
/// t = 0); block lengths are uniform on [L_min, L_max] with L_max solved from
/// the expected-coverage equation rate = 1 − exp(−p·E[L]); overlapping blocks
/// merge. A calibration pass then adds or trims whole blocks until the
/// achieved fraction matches the target.
pub fn simulate_block_missing(
    t: usize,
    n: usize,
    rate: f64,
    p_failure: f64,
    seed: u64,
) -> Result<MissingnessMask> {
    check_rate(rate)?;
    if rate == 0.0 {
        return Ok(MissingnessMask {
            mask: vec![1; t * n],
            scheme: MissingScheme::Block,
            rate,
            t,
            n,
        });
    }
    if p_failure <= 0.0 {
        return Err(DataError::Invalid(format!(
            "target rate {rate} unachievable with p_failure {p_failure}"
        )));
    }
    if rate >= 1.0 {
        return Err(DataError::Invalid(
            "block scheme cannot reach a 100% missing rate".into(),
        ));
    }
    let expected_len = -(1.0 - rate).ln() / p_failure;
    let l_max = ((2.0 * expected_len - BLOCK_MIN_LEN as f64).ceil() as usize).max(BLOCK_MIN_LEN);
    if l_max > t {
        return Err(DataError::Invalid(format!(
            "target rate {rate} needs blocks up to {l_max} steps but the series has only {t}"
        )));
    }

    let mut rng = StdRng::seed_from_u64(seed);
    let mut mask = vec![1u8; t * n];
    let mut lay_block = |mask: &mut Vec<u8>, sensor: usize, start: i64, len: usize| {
        let lo = start.max(0) as usize;
        let hi = ((start + len as i64).min(t as i64)).max(0) as usize;
        for step in lo..hi {
            mask[step * n + sensor] = 0;
        }
    };

    for sensor in 0..n {
        let mut step = -(l_max as i64);
        while step < t as i64 {
            if rng.gen_range(0.0..1.0) < p_failure {
                let len = rng.gen_range(BLOCK_MIN_LEN..=l_max);
                lay_block(&mut mask, sensor, step, len);
            }
            step += 1;
        }
    }

    // Calibration: top up with extra blocks while under target, then trim
    // run ends while over. Keeps runs contiguous and the seed deterministic.
    let target = (rate * (t * n) as f64).round() as usize;
    let tol = (RATE_TOL * (t * n) as f64).ceil() as usize;
    let zeros = |mask: &[u8]| mask.iter().filter(|&&m| m == 0).count();
    let mut guard = 0;
    while zeros(&mask) + tol < target && guard < 100_000 {
        let sensor = rng.gen_range(0..n);
        let start = rng.gen_range(-(l_max as i64)..t as i64);
        let len = rng.gen_range(BLOCK_MIN_LEN..=l_max);
        lay_block(&mut mask, sensor, start, len);
        guard += 1;
    }
    let mut excess = zeros(&mask).saturating_sub(target);
    'trim: for sensor in (0..n).rev() {
        for step in (0..t).rev() {
            if excess == 0 {
                break 'trim;
            }
            if mask[step * n + sensor] == 0 {
                mask[step * n + sensor] = 1;
                excess -= 1;
            }
        }
    }

    Ok(MissingnessMask {
        mask,
        scheme: MissingScheme::Block,
        rate,
        t,
        n,
    })
}
