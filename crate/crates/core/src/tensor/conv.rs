//! Causal dilated 1-D convolution.
//!
//! `y[o, t] = b[o] + sum_c sum_k w[o, c, k] * x[c, t - k*d]`, with samples
//! before `t = 0` treated as zero. The kernel is evaluated as a single GEMM
//! over a column buffer whose row `c*K + k` holds channel `c` delayed by
//! `k*d` steps, so the weight tensor `(O, C, K)` is used directly as an
//! `O x (C*K)` row-major matrix.

use serde::{Deserialize, Serialize};

use super::SeqTensor;
use crate::error::{Error, Result};

/// Causal convolution parameters with their gradient accumulators.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvLayer {
    in_channels: usize,
    out_channels: usize,
    kernel_len: usize,
    dilation: usize,
    /// `(out, in, k)` row-major.
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
    #[serde(skip)]
    pub grad_weights: Vec<f64>,
    #[serde(skip)]
    pub grad_bias: Vec<f64>,
}

impl ConvLayer {
    /// Zero-initialized layer.
    pub fn new(
        in_channels: usize,
        out_channels: usize,
        kernel_len: usize,
        dilation: usize,
    ) -> Result<Self> {
        if in_channels == 0 || out_channels == 0 || kernel_len == 0 || dilation == 0 {
            return Err(Error::config(format!(
                "conv layer dimensions must be positive (in={in_channels}, out={out_channels}, \
                 k={kernel_len}, d={dilation})"
            )));
        }
        let n_w = out_channels * in_channels * kernel_len;
        Ok(ConvLayer {
            in_channels,
            out_channels,
            kernel_len,
            dilation,
            weights: vec![0.0; n_w],
            bias: vec![0.0; out_channels],
            grad_weights: vec![0.0; n_w],
            grad_bias: vec![0.0; out_channels],
        })
    }

    pub fn with_params(
        in_channels: usize,
        out_channels: usize,
        kernel_len: usize,
        dilation: usize,
        weights: Vec<f64>,
        bias: Vec<f64>,
    ) -> Result<Self> {
        let mut layer = Self::new(in_channels, out_channels, kernel_len, dilation)?;
        if weights.len() != layer.weights.len() || bias.len() != out_channels {
            return Err(Error::config(format!(
                "parameter sizes ({}, {}) do not match layer shape ({}, {})",
                weights.len(),
                bias.len(),
                layer.weights.len(),
                out_channels
            )));
        }
        layer.weights = weights;
        layer.bias = bias;
        Ok(layer)
    }

    pub fn in_channels(&self) -> usize {
        self.in_channels
    }

    pub fn out_channels(&self) -> usize {
        self.out_channels
    }

    pub fn kernel_len(&self) -> usize {
        self.kernel_len
    }

    pub fn dilation(&self) -> usize {
        self.dilation
    }

    /// Number of past samples (beyond the current one) each output sees.
    pub fn span(&self) -> usize {
        (self.kernel_len - 1) * self.dilation
    }

    pub fn num_params(&self) -> usize {
        self.weights.len() + self.bias.len()
    }

    pub fn zero_grad(&mut self) {
        self.grad_weights.iter_mut().for_each(|g| *g = 0.0);
        self.grad_bias.iter_mut().for_each(|g| *g = 0.0);
    }

    /// Re-creates gradient buffers after deserialization.
    pub(crate) fn ensure_grad_buffers(&mut self) {
        if self.grad_weights.len() != self.weights.len() {
            self.grad_weights = vec![0.0; self.weights.len()];
        }
        if self.grad_bias.len() != self.bias.len() {
            self.grad_bias = vec![0.0; self.bias.len()];
        }
    }

    /// `(params, grads)` pairs for weights then bias.
    pub fn param_groups_mut(&mut self) -> [(&mut [f64], &[f64]); 2] {
        [
            (&mut self.weights[..], &self.grad_weights[..]),
            (&mut self.bias[..], &self.grad_bias[..]),
        ]
    }

    pub fn forward(&self, x: &SeqTensor) -> Result<SeqTensor> {
        self.check_input(x)?;
        let len = x.len();
        let mut y = SeqTensor::zeros(self.out_channels, len);
        for (o, row) in y.data_mut().chunks_exact_mut(len).enumerate() {
            row.fill(self.bias[o]);
        }
        let cols = self.im2col(x);
        let inner = self.in_channels * self.kernel_len;
        // SAFETY: all strides describe dense row-major buffers whose lengths
        // were checked above (weights O x inner, cols inner x len, y O x len).
        unsafe {
            matrixmultiply::dgemm(
                self.out_channels,
                inner,
                len,
                1.0,
                self.weights.as_ptr(),
                inner as isize,
                1,
                cols.as_ptr(),
                len as isize,
                1,
                1.0,
                y.data_mut().as_mut_ptr(),
                len as isize,
                1,
            );
        }
        Ok(y)
    }

    /// Accumulates parameter gradients and returns `dL/dx`.
    pub fn backward(&mut self, x: &SeqTensor, dy: &SeqTensor) -> Result<SeqTensor> {
        self.check_input(x)?;
        if dy.channels() != self.out_channels || dy.len() != x.len() {
            return Err(Error::config(format!(
                "upstream gradient is {}x{}, expected {}x{}",
                dy.channels(),
                dy.len(),
                self.out_channels,
                x.len()
            )));
        }
        self.ensure_grad_buffers();
        let len = x.len();
        let inner = self.in_channels * self.kernel_len;

        for (gb, row) in self.grad_bias.iter_mut().zip(dy.rows()) {
            *gb += row.iter().sum::<f64>();
        }

        let cols = self.im2col(x);
        let mut dcols = vec![0.0; inner * len];
        // SAFETY: dense row-major buffers; see forward. `cols` is read as its
        // transpose (len x inner) through swapped strides, and the weights as
        // (inner x O).
        unsafe {
            matrixmultiply::dgemm(
                self.out_channels,
                len,
                inner,
                1.0,
                dy.data().as_ptr(),
                len as isize,
                1,
                cols.as_ptr(),
                1,
                len as isize,
                1.0,
                self.grad_weights.as_mut_ptr(),
                inner as isize,
                1,
            );
            matrixmultiply::dgemm(
                inner,
                self.out_channels,
                len,
                1.0,
                self.weights.as_ptr(),
                1,
                inner as isize,
                dy.data().as_ptr(),
                len as isize,
                1,
                0.0,
                dcols.as_mut_ptr(),
                len as isize,
                1,
            );
        }

        let mut dx = SeqTensor::zeros(self.in_channels, len);
        for c in 0..self.in_channels {
            let dx_row = dx.row_mut(c);
            for k in 0..self.kernel_len {
                let shift = k * self.dilation;
                if shift >= len {
                    break;
                }
                let src = &dcols[(c * self.kernel_len + k) * len..][..len];
                // dcol[t] contributes to x[t - shift]
                for (d, s) in dx_row[..len - shift].iter_mut().zip(&src[shift..]) {
                    *d += s;
                }
            }
        }
        Ok(dx)
    }

    fn check_input(&self, x: &SeqTensor) -> Result<()> {
        if x.channels() != self.in_channels {
            return Err(Error::config(format!(
                "conv layer expects {} input channels, got {}",
                self.in_channels,
                x.channels()
            )));
        }
        Ok(())
    }

    fn im2col(&self, x: &SeqTensor) -> Vec<f64> {
        let len = x.len();
        let mut cols = vec![0.0; self.in_channels * self.kernel_len * len];
        for (c, src) in x.rows().enumerate() {
            for k in 0..self.kernel_len {
                let shift = k * self.dilation;
                if shift >= len {
                    break;
                }
                let dst = &mut cols[(c * self.kernel_len + k) * len..][..len];
                dst[shift..].copy_from_slice(&src[..len - shift]);
            }
        }
        cols
    }
}
