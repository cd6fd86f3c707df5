//! Minimal dense tensor used for activations and pattern batches.
//!
//! Data is `f64` (reductions therefore accumulate in double precision by
//! construction) stored row-major in a flat `Vec`. The first axis is always
//! the batch axis for activations flowing through a network.

use crate::error::{Error, Result};

/// Dense row-major tensor of `f64`.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    /// Zero-filled tensor of the given shape.
    pub fn zeros(shape: &[usize]) -> Self {
        let len = shape.iter().product();
        Tensor {
            shape: shape.to_vec(),
            data: vec![0.0; len],
        }
    }

    /// Build from existing data; errors if `data.len()` does not match `shape`.
    pub fn from_vec(shape: &[usize], data: Vec<f64>) -> Result<Self> {
        let len: usize = shape.iter().product();
        if data.len() != len {
            return Err(Error::ShapeMismatch {
                layer: "tensor".into(),
                expected: format!("{:?} ({} values)", shape, len),
                got: format!("{} values", data.len()),
            });
        }
        Ok(Tensor {
            shape: shape.to_vec(),
            data,
        })
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    /// Size of the batch axis (first dimension); 0 for rank-0 tensors.
    pub fn batch(&self) -> usize {
        self.shape.first().copied().unwrap_or(0)
    }

    /// Number of values per batch item.
    pub fn item_len(&self) -> usize {
        if self.shape.is_empty() {
            0
        } else {
            self.shape[1..].iter().product()
        }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    /// Values of batch item `i` as a contiguous slice.
    pub fn item(&self, i: usize) -> &[f64] {
        let w = self.item_len();
        &self.data[i * w..(i + 1) * w]
    }

    pub fn item_mut(&mut self, i: usize) -> &mut [f64] {
        let w = self.item_len();
        &mut self.data[i * w..(i + 1) * w]
    }
}
