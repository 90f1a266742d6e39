//! Rank-2 signal container and the differentiable primitives the networks are
//! built from.
//!
//! Every signal is a [`SeqTensor`] of shape `channels x length`, stored
//! row-major so that one channel is a contiguous slice in time. All
//! primitives are plain functions of their inputs; backward passes take the
//! cached forward inputs explicitly.

mod conv;
mod loss;
mod ops;

use std::ops::{Index, IndexMut};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use conv::ConvLayer;
pub use loss::{loss_eval, LossKind, Target};
pub use ops::{
    concat_channels, delay, delay_backward, maxpool2, maxpool2_backward, relu, relu_backward,
    split_channels, upsample2_zeros, upsample2_zeros_backward,
};

/// A multichannel time series, `data[c * len + t]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeqTensor {
    channels: usize,
    len: usize,
    data: Vec<f64>,
}

impl SeqTensor {
    /// All-zero tensor.
    ///
    /// Panics if either dimension is zero.
    pub fn zeros(channels: usize, len: usize) -> Self {
        assert!(channels > 0 && len > 0, "SeqTensor dimensions must be positive");
        SeqTensor {
            channels,
            len,
            data: vec![0.0; channels * len],
        }
    }

    pub fn from_vec(channels: usize, len: usize, data: Vec<f64>) -> Result<Self> {
        if channels == 0 || len == 0 {
            return Err(Error::config(format!(
                "tensor dimensions must be positive, got {channels}x{len}"
            )));
        }
        if data.len() != channels * len {
            return Err(Error::config(format!(
                "expected {} samples for a {channels}x{len} tensor, got {}",
                channels * len,
                data.len()
            )));
        }
        Ok(SeqTensor {
            channels,
            len,
            data,
        })
    }

    /// Builds a tensor from one slice per channel.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let len = rows.first().map(|r| r.as_ref().len()).unwrap_or(0);
        if rows.iter().any(|r| r.as_ref().len() != len) {
            return Err(Error::config("rows of differing length"));
        }
        let data = rows.iter().flat_map(|r| r.as_ref().iter().copied()).collect();
        Self::from_vec(rows.len(), len, data)
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn len(&self) -> usize {
        self.len
    }

    /// Always false; kept for API symmetry with `len`.
    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn row(&self, c: usize) -> &[f64] {
        &self.data[c * self.len..(c + 1) * self.len]
    }

    pub fn row_mut(&mut self, c: usize) -> &mut [f64] {
        &mut self.data[c * self.len..(c + 1) * self.len]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.len)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> SeqTensor {
        SeqTensor {
            channels: self.channels,
            len: self.len,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Multiplies every sample by `s` in place.
    pub fn scale(&mut self, s: f64) {
        self.data.iter_mut().for_each(|v| *v *= s);
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn mean(&self) -> f64 {
        self.data.iter().sum::<f64>() / self.data.len() as f64
    }

    pub(crate) fn same_shape(&self, other: &SeqTensor) -> bool {
        self.channels == other.channels && self.len == other.len
    }
}

impl Index<(usize, usize)> for SeqTensor {
    type Output = f64;

    fn index(&self, (c, t): (usize, usize)) -> &f64 {
        debug_assert!(c < self.channels && t < self.len);
        &self.data[c * self.len + t]
    }
}

impl IndexMut<(usize, usize)> for SeqTensor {
    fn index_mut(&mut self, (c, t): (usize, usize)) -> &mut f64 {
        debug_assert!(c < self.channels && t < self.len);
        &mut self.data[c * self.len + t]
    }
}
