//! Synthetic dataset generator with planted structures: a diffusion term over
//! a known graph, per-community sinusoidal seasonality, and Gaussian noise.
//! Acceptance runs train against these series because the ground truth is
//! known exactly.

use rand::rngs::StdRng;
use rand::SeedableRng;
use rand_distr::{Distribution, Normal};

use crate::graph_repr::normalized_adjacency;
use crate::numeric::Tensor;

use super::series::RawSeries;
use super::{DataError, Result};

#[derive(Debug, Clone)]
pub struct SyntheticSpec {
    pub n: usize,
    pub t: usize,
    /// Diffusion strength θ in x_{t+1} = θ·Â*·x_t + s(t) + η_t.
    pub theta: f64,
    pub season_amplitude: f64,
    pub season_period: f64,
    pub noise_std: f64,
    pub seed: u64,
}

/// The planted structures a generated series was built from.
#[derive(Debug, Clone)]
pub struct SyntheticTruth {
    /// n×n binary adjacency A*.
    pub adjacency: Vec<u8>,
    /// n×m binary incidence I*; column j is hyperedge/community j.
    pub incidence: Vec<u8>,
    pub num_hyperedges: usize,
}

/// Ring lattice: each node linked to its k nearest neighbors on each side.
pub fn ring_adjacency(n: usize, k: usize) -> Vec<u8> {
    let mut adj = vec![0u8; n * n];
    for i in 0..n {
        for step in 1..=k {
            let j = (i + step) % n;
            adj[i * n + j] = 1;
            adj[j * n + i] = 1;
        }
    }
    adj
}

/// One-hot incidence splitting n nodes into m contiguous communities.
pub fn community_incidence(n: usize, m: usize) -> Vec<u8> {
    let mut inc = vec![0u8; n * m];
    for i in 0..n {
        let c = (i * m) / n;
        inc[i * m + c] = 1;
    }
    inc
}

/// Distances that make the kernel threshold recover `adjacency` exactly:
/// planted edges sit `near`, everything else `far`.
pub fn distances_from_adjacency(adjacency: &[u8], n: usize, near: f64, far: f64) -> Vec<f64> {
    let mut d = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            if i != j {
                d[i * n + j] = if adjacency[i * n + j] == 1 { near } else { far };
            }
        }
    }
    d
}

fn spectral_radius(m: &Tensor) -> f64 {
    let n = m.rows();
    let mut v = vec![1.0 / (n as f64).sqrt(); n];
    let mut lambda = 0.0;
    for _ in 0..200 {
        let mut next = vec![0.0; n];
        for (i, slot) in next.iter_mut().enumerate() {
            for j in 0..n {
                *slot += m.at(i, j) * v[j];
            }
        }
        let norm = next.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm == 0.0 {
            return 0.0;
        }
        for x in next.iter_mut() {
            *x /= norm;
        }
        lambda = norm;
        v = next;
    }
    lambda
}

/// Simulate x_{t+1} = θ·Â*·x_t + s(t) + η_t from x₀ = 0, where Â* is the
/// symmetrically normalized planted adjacency and s gives each hyperedge
/// community a phase-shifted sinusoid. Errors if θ·ρ(Â*) ≥ 1 (unstable).
pub fn generate_synthetic(
    spec: &SyntheticSpec,
    adjacency: &[u8],
    incidence: &[u8],
    num_hyperedges: usize,
) -> Result<(RawSeries, SyntheticTruth)> {
    let (n, t, m) = (spec.n, spec.t, num_hyperedges);
    if adjacency.len() != n * n || incidence.len() != n * m {
        return Err(DataError::Invalid(
            "planted structure shapes mismatch n/m".into(),
        ));
    }
    if spec.season_period <= 0.0 {
        return Err(DataError::Invalid("season period must be positive".into()));
    }
    let a_hat = normalized_adjacency(adjacency, n);
    let rho = spectral_radius(&a_hat);
    if spec.theta.abs() * rho >= 1.0 {
        return Err(DataError::Invalid(format!(
            "unstable dynamics: |theta|·rho = {:.4} must stay below 1",
            spec.theta.abs() * rho
        )));
    }

    // community of node i = first hyperedge containing it; phases evenly
    // spaced so communities are distinguishable
    let community: Vec<Option<usize>> = (0..n)
        .map(|i| (0..m).find(|&j| incidence[i * m + j] == 1))
        .collect();
    let phase = |i: usize| {
        community[i].map_or(0.0, |c| 2.0 * std::f64::consts::PI * c as f64 / m as f64)
    };

    let mut rng = StdRng::seed_from_u64(spec.seed);
    let normal = Normal::new(0.0, spec.noise_std.max(0.0)).map_err(|e| {
        DataError::Invalid(format!("bad noise std {}: {e}", spec.noise_std))
    })?;

    let mut values = vec![0.0; t * n];
    let mut state = vec![0.0; n];
    for step in 1..t {
        let mut next = vec![0.0; n];
        for (i, slot) in next.iter_mut().enumerate() {
            let mut diffused = 0.0;
            for j in 0..n {
                diffused += a_hat.at(i, j) * state[j];
            }
            let season = spec.season_amplitude
                * (2.0 * std::f64::consts::PI * (step - 1) as f64 / spec.season_period
                    + phase(i))
                .sin();
            let noise = if spec.noise_std > 0.0 {
                normal.sample(&mut rng)
            } else {
                0.0
            };
            *slot = spec.theta * diffused + season + noise;
        }
        values[step * n..(step + 1) * n].copy_from_slice(&next);
        state = next;
    }

    let ids = (0..n).map(|i| format!("s{i}")).collect();
    let series = RawSeries::new(ids, values)?;
    Ok((
        series,
        SyntheticTruth {
            adjacency: adjacency.to_vec(),
            incidence: incidence.to_vec(),
            num_hyperedges: m,
        },
    ))
}
