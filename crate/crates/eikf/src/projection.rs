//! Gated linear projection of each node's raw τ-length history (plus an
//! optional mask channel) into a d-dimensional feature vector.

use crate::numeric::{Result, Tape, TensorId};

/// X̄ = (σ(H·W₀) ⊗ (H·W₁))·W₂ needs W₀, W₁: τ×d (2τ×d with the mask channel)
/// and W₂: d×d.
#[derive(Debug, Clone, Copy)]
pub struct ProjectionParams {
    pub w0: TensorId,
    pub w1: TensorId,
    pub w2: TensorId,
}

/// Project history rows (n×τ, or n×2τ with the mask channel appended) to n×d.
/// Row i of the output depends only on row i of the input.
pub fn gln_forward(tape: &mut Tape, history: TensorId, p: &ProjectionParams) -> Result<TensorId> {
    let gate = tape.matmul(history, p.w0)?;
    let gate = tape.sigmoid(gate)?;
    let lin = tape.matmul(history, p.w1)?;
    let gated = tape.mul(gate, lin)?;
    tape.matmul(gated, p.w2)
}
