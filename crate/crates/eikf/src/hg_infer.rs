//! Hypergraph inference: score hypernode/hyperedge embedding compatibility
//! and sample a differentiable discrete incidence matrix via the
//! Gumbel-softmax trick.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::numeric::{NumericError, Result, Tape, Tensor, TensorId};

/// Additive guard in the similarity denominator against zero-norm embeddings.
pub const EPS_NORM: f64 = 1e-8;
/// Entries of the incidence below this never count as support.
pub const SUPPORT_EPS: f64 = 1e-6;

/// Trainable embeddings: hypernodes n×d, hyperedges m×d.
#[derive(Debug, Clone, Copy)]
pub struct HgEmbeddings {
    pub nodes: TensorId,
    pub edges: TensorId,
}

/// Sᵢⱼ = (cos(zᵢ, zⱼ) + 1)/2 ∈ [0, 1], with EPS_NORM added to the norm
/// product. Invariant to positive rescaling of any embedding row.
pub fn pairwise_similarity(tape: &mut Tape, emb: &HgEmbeddings) -> Result<TensorId> {
    let (dn, de) = (tape.shape(emb.nodes)[1], tape.shape(emb.edges)[1]);
    if dn != de {
        return Err(NumericError::ShapeMismatch {
            op: "pairwise_similarity",
            lhs: tape.shape(emb.nodes).to_vec(),
            rhs: tape.shape(emb.edges).to_vec(),
        });
    }
    let edges_t = tape.transpose(emb.edges)?;
    let dots = tape.matmul(emb.nodes, edges_t)?; // n×m

    let row_norm = |tape: &mut Tape, z: TensorId| -> Result<TensorId> {
        let sq = tape.square(z)?;
        let sum = tape.sum_axis(sq, 1)?;
        tape.sqrt(sum)
    };
    let nn = row_norm(tape, emb.nodes)?; // n×1
    let ne = row_norm(tape, emb.edges)?; // m×1
    let ne_row = tape.transpose(ne)?; // 1×m
    let norms = tape.mul(nn, ne_row)?; // n×m outer product via broadcast
    // floor the norm product at EPS_NORM (relu(x−ε)+ε): guards zero-norm rows
    // while leaving realistic embeddings exactly scale-invariant
    let shifted = tape.add_scalar(norms, -EPS_NORM)?;
    let clipped = tape.relu(shifted)?;
    let norms = tape.add_scalar(clipped, EPS_NORM)?;
    let cos = tape.div(dots, norms)?;
    let shifted = tape.add_scalar(cos, 1.0)?;
    tape.scale(shifted, 0.5)
}

/// Two-channel sigmoid of [S ‖ 1−S]: P⁽⁰⁾ = probability connected,
/// P⁽¹⁾ = probability not connected (both n×m).
#[derive(Debug, Clone, Copy)]
pub struct EdgeProbabilities {
    pub connected: TensorId,
    pub not_connected: TensorId,
}

pub fn edge_probabilities(tape: &mut Tape, similarity: TensorId) -> Result<EdgeProbabilities> {
    let connected = tape.sigmoid(similarity)?;
    let flipped = tape.one_minus(similarity)?;
    let not_connected = tape.sigmoid(flipped)?;
    Ok(EdgeProbabilities {
        connected,
        not_connected,
    })
}

/// How the incidence enters the model.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IncidenceMode {
    /// Straight-through: forward uses the hard sample, gradients flow
    /// through the soft relaxation. The training default.
    TrainSt,
    /// Pure soft relaxation; used by gradient checks, which need a smooth
    /// forward.
    TrainSoft,
    /// Deterministic argmax of the probability channels; no noise.
    EvalHard,
}

/// Per-cell Gumbel(0,1) noise for the two categories, frozen so a sample can
/// be replayed (gradient checks) or resampled per batch (training).
#[derive(Debug, Clone)]
pub struct GumbelNoise {
    pub connected: Tensor,
    pub not_connected: Tensor,
}

impl GumbelNoise {
    pub fn sample(n: usize, m: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut draw = |rng: &mut ChaCha8Rng| -> f64 {
            let u: f64 = rng.gen_range(1e-12..1.0);
            -(-u.ln()).ln()
        };
        let g0: Vec<f64> = (0..n * m).map(|_| draw(&mut rng)).collect();
        let g1: Vec<f64> = (0..n * m).map(|_| draw(&mut rng)).collect();
        Self {
            connected: Tensor::new(vec![n, m], g0).expect("noise shape"),
            not_connected: Tensor::new(vec![n, m], g1).expect("noise shape"),
        }
    }
}

/// A sampled incidence. `incidence` is what downstream message passing
/// consumes; `support` marks entries that count as present (> SUPPORT_EPS on
/// the forward values).
#[derive(Debug, Clone)]
pub struct IncidenceSample {
    pub incidence: TensorId,
    pub support: Vec<bool>,
    pub hard: Vec<u8>,
    pub mode: IncidenceMode,
}

/// Sample the incidence from edge probabilities. Train modes require noise;
/// eval mode ignores it and takes the deterministic channel argmax (ties go
/// to "connected", the first channel).
///
/// The two-category Gumbel-softmax over channels k ∈ {connected, not} reduces
/// to Ĩ = σ(((g⁰+P⁰) − (g¹+P¹))/γ), the connected component.
pub fn gumbel_sample(
    tape: &mut Tape,
    probs: &EdgeProbabilities,
    gamma: f64,
    noise: Option<&GumbelNoise>,
    mode: IncidenceMode,
) -> Result<IncidenceSample> {
    if gamma <= 0.0 {
        return Err(NumericError::Domain {
            op: "gumbel_sample",
            reason: format!("temperature must be positive, got {gamma}"),
        });
    }
    let shape = tape.shape(probs.connected).to_vec();
    let numel: usize = shape.iter().product();

    if mode == IncidenceMode::EvalHard {
        let p0 = tape.value(probs.connected).values();
        let p1 = tape.value(probs.not_connected).values();
        let hard: Vec<u8> = p0
            .iter()
            .zip(p1)
            .map(|(a, b)| u8::from(a >= b))
            .collect();
        let values: Vec<f64> = hard.iter().map(|&h| f64::from(h)).collect();
        let incidence = tape.leaf(Tensor::new(shape, values)?);
        let support = hard.iter().map(|&h| h == 1).collect();
        return Ok(IncidenceSample {
            incidence,
            support,
            hard,
            mode,
        });
    }

    let noise = noise.ok_or_else(|| NumericError::Domain {
        op: "gumbel_sample",
        reason: "train modes need Gumbel noise".into(),
    })?;
    let diff = tape.sub(probs.connected, probs.not_connected)?;
    let noise_diff: Vec<f64> = noise
        .connected
        .values()
        .iter()
        .zip(noise.not_connected.values())
        .map(|(a, b)| a - b)
        .collect();
    let gn = tape.leaf(Tensor::new(shape.clone(), noise_diff)?);
    let logits = tape.add(diff, gn)?;
    let logits = tape.scale(logits, 1.0 / gamma)?;
    let soft = tape.sigmoid(logits)?;

    let soft_vals = tape.value(soft).values().to_vec();
    let hard: Vec<u8> = soft_vals.iter().map(|&v| u8::from(v > 0.5)).collect();

    let (incidence, support) = match mode {
        IncidenceMode::TrainSoft => {
            let support = soft_vals.iter().map(|&v| v > SUPPORT_EPS).collect();
            (soft, support)
        }
        _ => {
            // straight-through: value = hard, gradient = soft's
            let correction: Vec<f64> = hard
                .iter()
                .zip(&soft_vals)
                .map(|(&h, &s)| f64::from(h) - s)
                .collect();
            let corr = tape.leaf(Tensor::new(shape, correction)?);
            let st = tape.add(soft, corr)?;
            let support = hard.iter().map(|&h| h == 1).collect();
            (st, support)
        }
    };
    debug_assert_eq!(tape.value(incidence).numel(), numel);
    Ok(IncidenceSample {
        incidence,
        support,
        hard,
        mode,
    })
}

/// λ_s · mean(P⁽⁰⁾): pushes connection probabilities down when λ_s > 0.
pub fn sparsity_penalty(tape: &mut Tape, probs: &EdgeProbabilities, lambda: f64) -> Result<TensorId> {
    if lambda < 0.0 {
        return Err(NumericError::Domain {
            op: "sparsity_penalty",
            reason: format!("lambda must be non-negative, got {lambda}"),
        });
    }
    let mean = tape.mean_all(probs.connected)?;
    tape.scale(mean, lambda)
}
