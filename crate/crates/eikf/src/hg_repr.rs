//! Hypergraph representation learning: HgAT two-stage attention message
//! passing over the sampled incidence, HgT full self-attention over
//! hypernodes, and the gating that fuses both streams.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::hg_infer::SUPPORT_EPS;
use crate::numeric::{NumericError, Result, Tape, Tensor, TensorId};

/// One HgAT attention head. `w0` is shared between the value map and the
/// score map; `attn` (d×1) reduces the vector score to a scalar; `w3` (2d×1)
/// scores the concatenated node/edge projections.
#[derive(Debug, Clone, Copy)]
pub struct HgatHead {
    pub w0: TensorId,
    pub w1: TensorId,
    pub w2: TensorId,
    pub attn: TensorId,
    pub w3: TensorId,
}

/// HgAT parameters: heads plus the input-gate projections of Eqs for the
/// final fuse with the projected features.
#[derive(Debug, Clone)]
pub struct HgatParams {
    pub heads: Vec<HgatHead>,
    pub gate_s: TensorId,
    pub gate_g: TensorId,
}

/// Inverted-dropout masks on the two attention matrices (entries 0 or
/// 1/keep). Training only; `None` at evaluation.
#[derive(Debug, Clone)]
pub struct HgatDropout {
    pub alpha: Tensor,
    pub beta: Tensor,
}

impl HgatDropout {
    pub fn sample(n: usize, m: usize, rate: f64, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let keep = 1.0 - rate;
        let mut draw = |len: usize| -> Tensor {
            let v: Vec<f64> = (0..len)
                .map(|_| {
                    if rng.gen_range(0.0..1.0) < keep {
                        1.0 / keep
                    } else {
                        0.0
                    }
                })
                .collect();
            Tensor::new(vec![n, m], v).expect("dropout shape")
        };
        Self {
            alpha: draw(n * m),
            beta: draw(n * m),
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct EdgeAggregation {
    /// Hyperedge representations, m×d. Empty hyperedges come out as zero
    /// vectors.
    pub reps: TensorId,
    /// α, n×m: column j is the attention distribution over hypernodes
    /// incident to hyperedge j (pre-dropout).
    pub attention: TensorId,
}

#[derive(Debug, Clone, Copy)]
pub struct NodeAggregation {
    /// Hypernode representations, n×d.
    pub reps: TensorId,
    /// β, n×m: row i is the attention distribution over hyperedges incident
    /// to hypernode i (pre-dropout).
    pub attention: TensorId,
}

fn incidence_support(tape: &Tape, incidence: TensorId) -> Vec<bool> {
    tape.value(incidence)
        .values()
        .iter()
        .map(|&v| v > SUPPORT_EPS)
        .collect()
}

/// Attention-based intra-edge aggregation: per head z,
/// e_i = aᵀReLU(W₀h_i), α_{j,i} = softmax over the incident hypernodes of
/// (Ĩ_{i,j}·e_i), h_j = σ(Σ_i α_{j,i} W₀h_i); heads are summed. The soft
/// incidence scales the attention logits; its support defines the softmax
/// support.
pub fn hgat_edge_agg(
    tape: &mut Tape,
    x_bar: TensorId,
    incidence: TensorId,
    params: &HgatParams,
    dropout: Option<&HgatDropout>,
) -> Result<EdgeAggregation> {
    let (n, m) = (tape.shape(incidence)[0], tape.shape(incidence)[1]);
    if tape.shape(x_bar)[0] != n {
        return Err(NumericError::ShapeMismatch {
            op: "hgat_edge_agg",
            lhs: tape.shape(x_bar).to_vec(),
            rhs: tape.shape(incidence).to_vec(),
        });
    }
    let support = incidence_support(tape, incidence);
    // hyperedges with no incident hypernodes must come out as zero vectors
    let edge_alive: Vec<f64> = (0..m)
        .map(|j| {
            let alive = (0..n).any(|i| support[i * m + j]);
            f64::from(alive)
        })
        .collect();
    let alive = tape.leaf(Tensor::new(vec![m, 1], edge_alive)?);

    let mut total: Option<TensorId> = None;
    let mut alpha_first: Option<TensorId> = None;
    for head in &params.heads {
        let values = tape.matmul(x_bar, head.w0)?; // n×d, W₀h_i
        let scored = tape.relu(values)?;
        let e = tape.matmul(scored, head.attn)?; // n×1
        let e_cols = tape.broadcast_to(e, &[n, m])?;
        let logits = tape.mul(e_cols, incidence)?;
        let alpha = tape.softmax_masked(logits, 0, support.clone())?;
        if alpha_first.is_none() {
            alpha_first = Some(alpha);
        }
        let alpha = match dropout {
            Some(d) => {
                let mask = tape.leaf(d.alpha.clone());
                tape.mul(alpha, mask)?
            }
            None => alpha,
        };
        let alpha_t = tape.transpose(alpha)?; // m×n
        let mixed = tape.matmul(alpha_t, values)?; // m×d
        let activated = tape.sigmoid(mixed)?;
        let masked = tape.mul(activated, alive)?;
        total = Some(match total {
            Some(acc) => tape.add(acc, masked)?,
            None => masked,
        });
    }
    Ok(EdgeAggregation {
        reps: total.expect("at least one head"),
        attention: alpha_first.expect("at least one head"),
    })
}

/// Attention-based inter-edge aggregation: per head z,
/// φ_{i,j} = ReLU(W₃·(W₂h_i ⊕ W₂h_j)), β_{i,j} = softmax over the incident
/// hyperedges of (Ĩ_{i,j}·φ_{i,j}),
/// h_i = ReLU(W₀h_i + Σ_j β_{i,j} W₁h_j); heads are summed. A hypernode with
/// no hyperedges keeps only its self term.
pub fn hgat_node_agg(
    tape: &mut Tape,
    x_bar: TensorId,
    edge_reps: TensorId,
    incidence: TensorId,
    params: &HgatParams,
    dropout: Option<&HgatDropout>,
) -> Result<NodeAggregation> {
    let (n, m) = (tape.shape(incidence)[0], tape.shape(incidence)[1]);
    let d = tape.shape(x_bar)[1];
    let support = incidence_support(tape, incidence);

    let mut total: Option<TensorId> = None;
    let mut beta_first: Option<TensorId> = None;
    for head in &params.heads {
        let self_term = tape.matmul(x_bar, head.w0)?; // n×d
        let messages = tape.matmul(edge_reps, head.w1)?; // m×d
        let proj_nodes = tape.matmul(x_bar, head.w2)?; // n×d
        let proj_edges = tape.matmul(edge_reps, head.w2)?; // m×d
        let w3_node = tape.slice(head.w3, 0, 0, d)?; // d×1
        let w3_edge = tape.slice(head.w3, 0, d, d)?; // d×1
        let s_node = tape.matmul(proj_nodes, w3_node)?; // n×1
        let s_edge = tape.matmul(proj_edges, w3_edge)?; // m×1
        let s_edge_row = tape.transpose(s_edge)?; // 1×m
        let phi = tape.add(s_node, s_edge_row)?; // n×m outer sum
        let phi = tape.relu(phi)?;
        let logits = tape.mul(phi, incidence)?;
        let beta = tape.softmax_masked(logits, 1, support.clone())?;
        if beta_first.is_none() {
            beta_first = Some(beta);
        }
        let beta = match dropout {
            Some(dm) => {
                let mask = tape.leaf(dm.beta.clone());
                tape.mul(beta, mask)?
            }
            None => beta,
        };
        let gathered = tape.matmul(beta, messages)?; // n×d
        let combined = tape.add(self_term, gathered)?;
        let activated = tape.relu(combined)?;
        total = Some(match total {
            Some(acc) => tape.add(acc, activated)?,
            None => activated,
        });
    }
    Ok(NodeAggregation {
        reps: total.expect("at least one head"),
        attention: beta_first.expect("at least one head"),
    })
}

/// Gating used everywhere two streams merge:
/// g = σ(a·f_s + b·f_g), out = σ(g⊗a + (1−g)⊗b).
pub fn gated_fusion(
    tape: &mut Tape,
    a: TensorId,
    b: TensorId,
    f_s: TensorId,
    f_g: TensorId,
) -> Result<TensorId> {
    let ga = tape.matmul(a, f_s)?;
    let gb = tape.matmul(b, f_g)?;
    let gate = tape.add(ga, gb)?;
    let gate = tape.sigmoid(gate)?;
    let keep = tape.mul(gate, a)?;
    let inv = tape.one_minus(gate)?;
    let pass = tape.mul(inv, b)?;
    let mixed = tape.add(keep, pass)?;
    tape.sigmoid(mixed)
}

/// Selectively fuse aggregated hypernode features with the projected input
/// features.
pub fn hgat_input_gate(
    tape: &mut Tape,
    h: TensorId,
    x_bar: TensorId,
    params: &HgatParams,
) -> Result<TensorId> {
    gated_fusion(tape, h, x_bar, params.gate_s, params.gate_g)
}

/// Transformer encoder over hypernodes: multi-head self-attention and an MLP
/// block, layer-normalized, with the second residual returning to the input
/// features ("initial connection").
#[derive(Debug, Clone)]
pub struct HgtParams {
    pub w_q: TensorId,
    pub w_k: TensorId,
    pub w_v: TensorId,
    pub w_o: TensorId,
    pub mlp_w1: TensorId,
    pub mlp_b1: TensorId,
    pub mlp_w2: TensorId,
    pub mlp_b2: TensorId,
    pub ln1_gain: TensorId,
    pub ln1_bias: TensorId,
    pub ln2_gain: TensorId,
    pub ln2_bias: TensorId,
    pub num_heads: usize,
}

#[derive(Debug, Clone)]
pub struct HgtOutput {
    pub reps: TensorId,
    /// Per-head n×n attention matrices (rows sum to 1).
    pub attention: Vec<TensorId>,
}

/// u = MSA(LN(X̄)) + X̄; h′ = MLP(LN(u)) + X̄. Attention runs over the n
/// hypernodes as tokens, no masking.
pub fn hgt_forward(tape: &mut Tape, x_bar: TensorId, p: &HgtParams) -> Result<TensorId> {
    Ok(hgt_forward_detailed(tape, x_bar, p)?.reps)
}

pub fn hgt_forward_detailed(
    tape: &mut Tape,
    x_bar: TensorId,
    p: &HgtParams,
) -> Result<HgtOutput> {
    let d = tape.shape(x_bar)[1];
    if d % p.num_heads != 0 {
        return Err(NumericError::Domain {
            op: "hgt_forward",
            reason: format!("model dim {d} not divisible by {} heads", p.num_heads),
        });
    }
    let d_head = d / p.num_heads;

    let ln = tape.layer_norm(x_bar)?;
    let ln = tape.mul(ln, p.ln1_gain)?;
    let ln = tape.add(ln, p.ln1_bias)?;
    let q = tape.matmul(ln, p.w_q)?;
    let k = tape.matmul(ln, p.w_k)?;
    let v = tape.matmul(ln, p.w_v)?;

    let mut heads = Vec::with_capacity(p.num_heads);
    let mut attentions = Vec::with_capacity(p.num_heads);
    for h in 0..p.num_heads {
        let qh = tape.slice(q, 1, h * d_head, d_head)?;
        let kh = tape.slice(k, 1, h * d_head, d_head)?;
        let vh = tape.slice(v, 1, h * d_head, d_head)?;
        let kt = tape.transpose(kh)?;
        let scores = tape.matmul(qh, kt)?;
        let scores = tape.scale(scores, 1.0 / (d_head as f64).sqrt())?;
        let attn = tape.softmax(scores, 1)?;
        attentions.push(attn);
        heads.push(tape.matmul(attn, vh)?);
    }
    let merged = tape.concat(&heads, 1)?;
    let msa = tape.matmul(merged, p.w_o)?;
    let u = tape.add(msa, x_bar)?;

    let ln2 = tape.layer_norm(u)?;
    let ln2 = tape.mul(ln2, p.ln2_gain)?;
    let ln2 = tape.add(ln2, p.ln2_bias)?;
    let hidden = tape.matmul(ln2, p.mlp_w1)?;
    let hidden = tape.add(hidden, p.mlp_b1)?;
    let hidden = tape.relu(hidden)?;
    let out = tape.matmul(hidden, p.mlp_w2)?;
    let out = tape.add(out, p.mlp_b2)?;
    let reps = tape.add(out, x_bar)?;
    Ok(HgtOutput {
        reps,
        attention: attentions,
    })
}

/// Eq-6 style gate combining the HgT stream with the HgAT stream.
pub fn fuse_hgat_hgt(
    tape: &mut Tape,
    h_hgt: TensorId,
    h_hgat: TensorId,
    f_s: TensorId,
    f_g: TensorId,
) -> Result<TensorId> {
    gated_fusion(tape, h_hgt, h_hgat, f_s, f_g)
}
