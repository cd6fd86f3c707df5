//! Labeled pattern batches: the unit of data exchanged between the protocol
//! generator, the training strategies, and the evaluation loop.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// A batch of training or test patterns: an `[n, ...]` tensor plus one label
/// per pattern.
#[derive(Debug, Clone, PartialEq)]
pub struct PatternBatch {
    pub x: Tensor,
    pub y: Vec<usize>,
}

impl PatternBatch {
    pub fn new(x: Tensor, y: Vec<usize>) -> Result<Self> {
        if x.batch() != y.len() {
            return Err(Error::ShapeMismatch {
                layer: "pattern batch".into(),
                expected: format!("{} labels", x.batch()),
                got: format!("{}", y.len()),
            });
        }
        Ok(PatternBatch { x, y })
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    /// Distinct labels present, ascending.
    pub fn classes(&self) -> Vec<usize> {
        let mut c = self.y.clone();
        c.sort_unstable();
        c.dedup();
        c
    }

    /// Bytes needed to store the raw patterns and labels (8 bytes per
    /// scalar / label), the currency of the data-overhead accounting.
    pub fn byte_size(&self) -> u64 {
        (self.x.len() as u64 + self.y.len() as u64) * 8
    }

    /// Select a sub-batch by pattern indices (used by the mini-batch loop).
    pub fn gather(&self, idx: &[usize]) -> PatternBatch {
        let item = self.x.item_len();
        let mut shape = self.x.shape().to_vec();
        shape[0] = idx.len();
        let mut data = Vec::with_capacity(idx.len() * item);
        let mut y = Vec::with_capacity(idx.len());
        for &i in idx {
            data.extend_from_slice(self.x.item(i));
            y.push(self.y[i]);
        }
        PatternBatch {
            x: Tensor::from_vec(&shape, data).expect("shape matches gathered data"),
            y,
        }
    }

    /// Concatenate batches (all with the same per-pattern shape) in order.
    pub fn concat(batches: &[PatternBatch]) -> Result<PatternBatch> {
        let first = batches
            .first()
            .ok_or_else(|| Error::Protocol("cannot concatenate zero batches".into()))?;
        let item_shape = &first.x.shape()[1..];
        let mut shape = first.x.shape().to_vec();
        let mut data = Vec::new();
        let mut y = Vec::new();
        let mut n = 0usize;
        for b in batches {
            if &b.x.shape()[1..] != item_shape {
                return Err(Error::ShapeMismatch {
                    layer: "pattern batch".into(),
                    expected: format!("{item_shape:?}"),
                    got: format!("{:?}", &b.x.shape()[1..]),
                });
            }
            n += b.len();
            data.extend_from_slice(b.x.data());
            y.extend_from_slice(&b.y);
        }
        shape[0] = n;
        Ok(PatternBatch {
            x: Tensor::from_vec(&shape, data)?,
            y,
        })
    }
}
