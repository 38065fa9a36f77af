//! Dense f64 tensors and a reverse-mode tape.
//!
//! The tape records exactly the operations a cell network needs (convolution,
//! ReLU, average pooling, training-mode batch norm, linear, global average
//! pooling, elementwise add, zeroing, and a final scalar sum) and can
//! differentiate that scalar with respect to the input batch. Parameter
//! gradients are never needed, so they are never computed.

mod fd;
pub mod init;
pub(crate) mod kernels;
mod tape;

pub use fd::finite_diff_gradient;
pub use init::{derive_seed, ConvParams, LinearParams, NormParams};
pub use tape::{NodeId, Tape};

use crate::error::{Error, Result};

/// Dense n-dimensional array of f64 values in row-major order.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    /// Builds a tensor from a shape and matching flat buffer.
    ///
    /// Every extent must be positive and the buffer length must equal the
    /// product of the extents.
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        if shape.is_empty() || shape.iter().any(|&e| e == 0) {
            return Err(Error::ShapeMismatch {
                op: "tensor",
                detail: format!("extents must be positive, got {shape:?}"),
            });
        }
        let numel: usize = shape.iter().product();
        if numel != data.len() {
            return Err(Error::ShapeMismatch {
                op: "tensor",
                detail: format!("shape {shape:?} wants {numel} elements, buffer has {}", data.len()),
            });
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let numel = shape.iter().product();
        Self { shape, data: vec![0.0; numel] }
    }

    pub fn filled(shape: Vec<usize>, value: f64) -> Self {
        let numel = shape.iter().product();
        Self { shape, data: vec![value; numel] }
    }

    pub fn scalar(value: f64) -> Self {
        Self { shape: vec![1], data: vec![value] }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    /// Consumes the tensor and returns its flat buffer.
    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Interprets the tensor as a 4-d batch `[n, c, h, w]`.
    pub fn dims4(&self) -> Result<(usize, usize, usize, usize)> {
        match self.shape[..] {
            [n, c, h, w] => Ok((n, c, h, w)),
            _ => Err(Error::ShapeMismatch {
                op: "dims4",
                detail: format!("expected rank 4, got {:?}", self.shape),
            }),
        }
    }

    /// Row-major element access by multi-index; for tests and small tensors.
    pub fn at(&self, index: &[usize]) -> f64 {
        assert_eq!(index.len(), self.shape.len(), "index rank mismatch");
        let mut flat = 0;
        for (i, &ix) in index.iter().enumerate() {
            assert!(ix < self.shape[i], "index {ix} out of range for axis {i}");
            flat = flat * self.shape[i] + ix;
        }
        self.data[flat]
    }
}
