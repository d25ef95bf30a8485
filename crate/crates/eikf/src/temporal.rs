//! Temporal inference: mixture-of-experts fusion of the hypergraph and graph
//! representations, the 1×1-convolution forecast head, and the Gaussian
//! uncertainty head.

use crate::hg_repr::gated_fusion;
use crate::numeric::{NumericError, Result, Tape, TensorId};

/// Variance floor added to the softplus output of the σ² branch.
pub const VAR_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, Copy)]
pub struct FusionParams {
    pub gate_s: TensorId,
    pub gate_g: TensorId,
}

/// h⁗ = σ(g″⊗h″ + (1−g″)⊗h‴). With exactly one expert enabled (ablation),
/// the gate short-circuits to h⁗ = σ(expert); with none, that's a
/// configuration error.
pub fn moe_fuse(
    tape: &mut Tape,
    hypergraph: Option<TensorId>,
    graph: Option<TensorId>,
    params: Option<&FusionParams>,
) -> Result<TensorId> {
    match (hypergraph, graph) {
        (Some(hg), Some(g)) => {
            let p = params.ok_or_else(|| NumericError::Domain {
                op: "moe_fuse",
                reason: "both experts enabled but no gate parameters bound".into(),
            })?;
            gated_fusion(tape, hg, g, p.gate_s, p.gate_g)
        }
        (Some(only), None) | (None, Some(only)) => tape.sigmoid(only),
        (None, None) => Err(NumericError::Domain {
            op: "moe_fuse",
            reason: "both experts disabled".into(),
        }),
    }
}

/// Per-node shared head. With the temporal stack enabled it is the depth-2
/// map d→d (ReLU) → output; the "w/o Temporal" ablation removes the hidden
/// layer and keeps a single linear map.
#[derive(Debug, Clone, Copy)]
pub struct HeadParams {
    pub hidden_w: Option<TensorId>,
    pub hidden_b: Option<TensorId>,
    pub out_w: TensorId,
    pub out_b: TensorId,
}

fn head_stack(tape: &mut Tape, features: TensorId, p: &HeadParams) -> Result<TensorId> {
    let z = match (p.hidden_w, p.hidden_b) {
        (Some(w), Some(b)) => {
            let z = tape.matmul(features, w)?;
            let z = tape.add(z, b)?;
            tape.relu(z)?
        }
        _ => features,
    };
    let out = tape.matmul(z, p.out_w)?;
    tape.add(out, p.out_b)
}

/// Point forecasts on the scaled domain, n×υ. Metrics invert the scaling
/// before comparing against targets.
pub fn forecast_head(tape: &mut Tape, features: TensorId, p: &HeadParams) -> Result<TensorId> {
    head_stack(tape, features, p)
}

/// Gaussian head: μ (the point forecast) and σ² = softplus(raw) + VAR_FLOOR,
/// both n×υ on the scaled domain.
pub fn uncertainty_head(
    tape: &mut Tape,
    features: TensorId,
    p: &HeadParams,
) -> Result<(TensorId, TensorId)> {
    let out = head_stack(tape, features, p)?;
    let two_ups = tape.shape(out)[1];
    if two_ups % 2 != 0 {
        return Err(NumericError::BadShape {
            op: "uncertainty_head",
            shape: tape.shape(out).to_vec(),
            reason: "output must split into (mu, sigma^2) halves".into(),
        });
    }
    let ups = two_ups / 2;
    let mu = tape.slice(out, 1, 0, ups)?;
    let raw = tape.slice(out, 1, ups, ups)?;
    let sp = tape.softplus(raw)?;
    let sigma2 = tape.add_scalar(sp, VAR_FLOOR)?;
    Ok((mu, sigma2))
}
