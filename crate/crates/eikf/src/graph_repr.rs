//! T-GCN over the explicit graph: a GRU whose gate transforms are graph
//! convolutions, unrolled across the τ history steps.

use crate::numeric::{Result, Tape, Tensor, TensorId};

/// Â = D̃^{−1/2}(A + I)D̃^{−1/2} with D̃ the degree matrix of A + I.
pub fn normalized_adjacency(adjacency: &[u8], n: usize) -> Tensor {
    let mut with_loops = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            with_loops[i * n + j] = f64::from(adjacency[i * n + j]);
        }
        with_loops[i * n + i] = 1.0;
    }
    let mut inv_sqrt_deg = vec![0.0; n];
    for i in 0..n {
        let deg: f64 = with_loops[i * n..(i + 1) * n].iter().sum();
        inv_sqrt_deg[i] = 1.0 / deg.sqrt();
    }
    let mut out = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            out[i * n + j] = inv_sqrt_deg[i] * with_loops[i * n + j] * inv_sqrt_deg[j];
        }
    }
    Tensor::new(vec![n, n], out).expect("square shape")
}

/// Gate weights for the graph-convolutional GRU. `w_gcn` lifts the input
/// channels (1, or 2 with the mask channel) to d; gate weights act on the
/// concatenated [gcn(x) ‖ H] block.
#[derive(Debug, Clone, Copy)]
pub struct TgcnParams {
    pub w_gcn: TensorId,
    pub w_u: TensorId,
    pub w_r: TensorId,
    pub w_c: TensorId,
    pub b_u: TensorId,
    pub b_r: TensorId,
    pub b_c: TensorId,
}

/// Single-layer graph convolution Â·X·W (no internal activation; the gate
/// nonlinearities follow).
pub fn gcn_apply(tape: &mut Tape, a_hat: TensorId, x: TensorId, w: TensorId) -> Result<TensorId> {
    let mixed = tape.matmul(a_hat, x)?;
    tape.matmul(mixed, w)
}

/// One GRU step with graph-convolved inputs:
/// u = σ([gcn(x)‖H]W_u + B_u), r = σ([gcn(x)‖H]W_r + B_r),
/// c = tanh([gcn(x)‖(r⊗H)]W_c + B_c), H' = u⊗H + (1−u)⊗c.
pub fn tgcn_step(
    tape: &mut Tape,
    a_hat: TensorId,
    x_s: TensorId,
    h_prev: TensorId,
    p: &TgcnParams,
) -> Result<TensorId> {
    let lifted = gcn_apply(tape, a_hat, x_s, p.w_gcn)?;
    let cat = tape.concat(&[lifted, h_prev], 1)?;
    let u = tape.matmul(cat, p.w_u)?;
    let u = tape.add(u, p.b_u)?;
    let u = tape.sigmoid(u)?;
    let r = tape.matmul(cat, p.w_r)?;
    let r = tape.add(r, p.b_r)?;
    let r = tape.sigmoid(r)?;
    let gated_h = tape.mul(r, h_prev)?;
    let cat_c = tape.concat(&[lifted, gated_h], 1)?;
    let c = tape.matmul(cat_c, p.w_c)?;
    let c = tape.add(c, p.b_c)?;
    let c = tape.tanh(c)?;
    let keep = tape.mul(u, h_prev)?;
    let inv = tape.one_minus(u)?;
    let fresh = tape.mul(inv, c)?;
    tape.add(keep, fresh)
}

/// Unroll over history columns s = 1..τ in time order from H₀ = 0. When a
/// mask is given, unobserved entries arrive zero-filled and the mask bit is
/// appended as a second input channel.
pub fn tgcn_unroll(
    tape: &mut Tape,
    a_hat: TensorId,
    history: TensorId,
    mask: Option<TensorId>,
    p: &TgcnParams,
) -> Result<TensorId> {
    let n = tape.shape(history)[0];
    let tau = tape.shape(history)[1];
    let d = tape.shape(p.w_u)[1];
    let mut h = tape.leaf(Tensor::zeros(vec![n, d]));
    for s in 0..tau {
        let x_s = tape.slice(history, 1, s, 1)?;
        let x_in = match mask {
            Some(m) => {
                let m_s = tape.slice(m, 1, s, 1)?;
                tape.concat(&[x_s, m_s], 1)?
            }
            None => x_s,
        };
        h = tgcn_step(tape, a_hat, x_in, h, p)?;
    }
    Ok(h)
}
