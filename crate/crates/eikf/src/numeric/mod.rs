//! Minimal dense-tensor algebra with reverse-mode automatic differentiation
//! and a finite-difference gradient oracle. Every other module expresses its
//! math through this substrate.
//!
//! 64-bit floats throughout; forward values are checked finite after every
//! operation (NaN/Inf is an error, never a state).

mod tape;
mod tensor;

pub use tape::{Gradients, Tape, TensorId};
pub use tensor::{naive_matmul, Tensor};

use thiserror::Error;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum NumericError {
    #[error("{op}: incompatible shapes {lhs:?} and {rhs:?}")]
    ShapeMismatch {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },
    #[error("{op}: bad shape {shape:?}: {reason}")]
    BadShape {
        op: &'static str,
        shape: Vec<usize>,
        reason: String,
    },
    #[error("{op}: domain error: {reason}")]
    Domain { op: &'static str, reason: String },
    #[error("{op}: produced a non-finite value")]
    NonFinite { op: &'static str },
    #[error("backward requires a scalar output, got shape {shape:?}")]
    NonScalarBackward { shape: Vec<usize> },
}

pub type Result<T> = std::result::Result<T, NumericError>;

/// Central-difference gradient of a tensor-to-scalar function:
/// (f(x + h·eᵢ) − f(x − h·eᵢ)) / (2h) per coordinate.
///
/// This is the verification oracle the gradient suite checks `backward`
/// against; it never touches the tape.
pub fn finite_diff_grad<F>(mut f: F, x: &Tensor, h: f64) -> Result<Tensor>
where
    F: FnMut(&Tensor) -> Result<Tensor>,
{
    let mut grad = vec![0.0; x.numel()];
    let mut probe = x.clone();
    for i in 0..x.numel() {
        let orig = probe.values()[i];
        probe.values_mut()[i] = orig + h;
        let up = eval_scalar(&mut f, &probe)?;
        probe.values_mut()[i] = orig - h;
        let down = eval_scalar(&mut f, &probe)?;
        probe.values_mut()[i] = orig;
        grad[i] = (up - down) / (2.0 * h);
    }
    Tensor::new(x.shape().to_vec(), grad)
}

fn eval_scalar<F>(f: &mut F, x: &Tensor) -> Result<f64>
where
    F: FnMut(&Tensor) -> Result<Tensor>,
{
    let out = f(x)?;
    if !out.is_scalar() {
        return Err(NumericError::BadShape {
            op: "finite_diff_grad",
            shape: out.shape().to_vec(),
            reason: "objective must return a scalar".into(),
        });
    }
    Ok(out.item())
}

/// Relative error used by every gradient check in this crate:
/// |a − b| / max(|a|, |b|, 1e-8).
pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-8)
}
