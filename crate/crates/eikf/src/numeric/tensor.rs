//! Dense row-major `f64` tensors: the carrier for every matrix in the model.

use serde::{Deserialize, Serialize};

use super::NumericError;

/// Dense tensor with a positive-dimension shape and row-major values.
///
/// `values.len() == shape.iter().product()` always holds; constructors
/// reject anything else.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    shape: Vec<usize>,
    values: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, values: Vec<f64>) -> Result<Self, NumericError> {
        if shape.is_empty() || shape.iter().any(|&d| d == 0) {
            return Err(NumericError::BadShape {
                op: "tensor_new",
                shape,
                reason: "dims must be positive".into(),
            });
        }
        let numel: usize = shape.iter().product();
        if values.len() != numel {
            return Err(NumericError::BadShape {
                op: "tensor_new",
                shape,
                reason: format!("expected {} values, got {}", numel, values.len()),
            });
        }
        Ok(Self { shape, values })
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let numel: usize = shape.iter().product::<usize>().max(0);
        Self {
            values: vec![0.0; numel],
            shape,
        }
    }

    pub fn full(shape: Vec<usize>, fill: f64) -> Self {
        let numel: usize = shape.iter().product();
        Self {
            values: vec![fill; numel],
            shape,
        }
    }

    /// A scalar, by convention shape `[1]`.
    pub fn scalar(v: f64) -> Self {
        Self {
            shape: vec![1],
            values: vec![v],
        }
    }

    /// Build a matrix from row slices; all rows must share a length.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self, NumericError> {
        let r = rows.len();
        let c = rows.first().map_or(0, |row| row.len());
        if r == 0 || c == 0 || rows.iter().any(|row| row.len() != c) {
            return Err(NumericError::BadShape {
                op: "from_rows",
                shape: vec![r, c],
                reason: "rows must be non-empty and uniform".into(),
            });
        }
        let mut values = Vec::with_capacity(r * c);
        for row in rows {
            values.extend_from_slice(row);
        }
        Ok(Self {
            shape: vec![r, c],
            values,
        })
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn numel(&self) -> usize {
        self.values.len()
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn is_scalar(&self) -> bool {
        self.numel() == 1
    }

    /// Scalar value; panics if the tensor is not a single element.
    pub fn item(&self) -> f64 {
        assert!(self.is_scalar(), "item() on shape {:?}", self.shape);
        self.values[0]
    }

    pub fn rows(&self) -> usize {
        self.shape[0]
    }

    pub fn cols(&self) -> usize {
        *self.shape.last().expect("non-empty shape")
    }

    /// Row-major element accessor for rank-2 tensors.
    pub fn at(&self, r: usize, c: usize) -> f64 {
        debug_assert_eq!(self.rank(), 2);
        self.values[r * self.cols() + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        debug_assert_eq!(self.rank(), 2);
        let c_dim = self.cols();
        self.values[r * c_dim + c] = v;
    }

    pub fn all_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    /// Reinterpret the same values under a new shape with equal element count.
    pub fn reshaped(&self, shape: Vec<usize>) -> Result<Self, NumericError> {
        Self::new(shape, self.values.clone())
    }
}

/// Naive triple-loop matrix product, kept as an independent oracle for the
/// tape's matmul.
pub fn naive_matmul(a: &Tensor, b: &Tensor) -> Result<Tensor, NumericError> {
    if a.rank() != 2 || b.rank() != 2 || a.cols() != b.rows() {
        return Err(NumericError::ShapeMismatch {
            op: "naive_matmul",
            lhs: a.shape().to_vec(),
            rhs: b.shape().to_vec(),
        });
    }
    let (m, k, n) = (a.rows(), a.cols(), b.cols());
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        for j in 0..n {
            let mut acc = 0.0;
            for p in 0..k {
                acc += a.at(i, p) * b.at(p, j);
            }
            out[i * n + j] = acc;
        }
    }
    Tensor::new(vec![m, n], out)
}
