use super::SeqTensor;
use crate::error::{Error, Result};

pub fn relu(x: &SeqTensor) -> SeqTensor {
    x.map(|v| v.max(0.0))
}

/// Gradient gate of [`relu`]; the subgradient at exactly zero is zero.
pub fn relu_backward(x: &SeqTensor, dy: &SeqTensor) -> Result<SeqTensor> {
    if !x.same_shape(dy) {
        return Err(Error::config("relu_backward: shape mismatch"));
    }
    let data = x
        .data()
        .iter()
        .zip(dy.data())
        .map(|(&xv, &g)| if xv > 0.0 { g } else { 0.0 })
        .collect();
    SeqTensor::from_vec(x.channels(), x.len(), data)
}

/// Stacks `a` on top of `b` along the channel axis.
pub fn concat_channels(a: &SeqTensor, b: &SeqTensor) -> Result<SeqTensor> {
    if a.len() != b.len() {
        return Err(Error::config(format!(
            "cannot concatenate signals of length {} and {}",
            a.len(),
            b.len()
        )));
    }
    let mut data = Vec::with_capacity(a.data().len() + b.data().len());
    data.extend_from_slice(a.data());
    data.extend_from_slice(b.data());
    SeqTensor::from_vec(a.channels() + b.channels(), a.len(), data)
}

/// Inverse of [`concat_channels`]: the first `first_channels` rows and the rest.
pub fn split_channels(x: &SeqTensor, first_channels: usize) -> Result<(SeqTensor, SeqTensor)> {
    if first_channels == 0 || first_channels >= x.channels() {
        return Err(Error::config(format!(
            "cannot split {} channels at {first_channels}",
            x.channels()
        )));
    }
    let cut = first_channels * x.len();
    let a = SeqTensor::from_vec(first_channels, x.len(), x.data()[..cut].to_vec())?;
    let b = SeqTensor::from_vec(x.channels() - first_channels, x.len(), x.data()[cut..].to_vec())?;
    Ok((a, b))
}

/// Decimating max-pool over non-overlapping pairs.
///
/// Output length is `ceil(len / 2)`; an odd trailing sample passes through.
/// Returns, per output sample (channel-major), the input time index it was
/// taken from. Ties go to the earlier index.
pub fn maxpool2(x: &SeqTensor) -> (SeqTensor, Vec<usize>) {
    let out_len = x.len().div_ceil(2);
    let mut y = SeqTensor::zeros(x.channels(), out_len);
    let mut argmax = Vec::with_capacity(x.channels() * out_len);
    for c in 0..x.channels() {
        let src = x.row(c);
        let dst = y.row_mut(c);
        for (i, out) in dst.iter_mut().enumerate() {
            let j = 2 * i;
            let pick = if j + 1 < src.len() && src[j + 1] > src[j] {
                j + 1
            } else {
                j
            };
            *out = src[pick];
            argmax.push(pick);
        }
    }
    (y, argmax)
}

/// Routes each pooled gradient back to the position that won the max.
pub fn maxpool2_backward(dy: &SeqTensor, argmax: &[usize], in_len: usize) -> Result<SeqTensor> {
    if argmax.len() != dy.data().len() || dy.len() != in_len.div_ceil(2) {
        return Err(Error::config("maxpool2_backward: shape mismatch"));
    }
    let mut dx = SeqTensor::zeros(dy.channels(), in_len);
    for c in 0..dy.channels() {
        let idx = &argmax[c * dy.len()..(c + 1) * dy.len()];
        let g = dy.row(c);
        let dst = dx.row_mut(c);
        for (&i, &v) in idx.iter().zip(g) {
            dst[i] += v;
        }
    }
    Ok(dx)
}

/// Doubles the rate by zero insertion: `y[2i] = x[i]`, odd positions zero.
///
/// `target_len` must be `2*len - 1` or `2*len`.
pub fn upsample2_zeros(x: &SeqTensor, target_len: usize) -> Result<SeqTensor> {
    if target_len + 1 != 2 * x.len() && target_len != 2 * x.len() {
        return Err(Error::config(format!(
            "upsample target length {target_len} incompatible with source length {}",
            x.len()
        )));
    }
    let mut y = SeqTensor::zeros(x.channels(), target_len);
    for c in 0..x.channels() {
        let src = x.row(c);
        for (dst, &v) in y.row_mut(c).iter_mut().step_by(2).zip(src) {
            *dst = v;
        }
    }
    Ok(y)
}

pub fn upsample2_zeros_backward(dy: &SeqTensor, src_len: usize) -> Result<SeqTensor> {
    if dy.len() + 1 != 2 * src_len && dy.len() != 2 * src_len {
        return Err(Error::config("upsample2_zeros_backward: shape mismatch"));
    }
    let mut dx = SeqTensor::zeros(dy.channels(), src_len);
    for c in 0..dy.channels() {
        for (dst, &g) in dx.row_mut(c).iter_mut().zip(dy.row(c).iter().step_by(2)) {
            *dst = g;
        }
    }
    Ok(dx)
}

/// Causal delay: `y[t] = x[t - steps]`, zero-filled head, same length.
pub fn delay(x: &SeqTensor, steps: usize) -> SeqTensor {
    let len = x.len();
    let mut y = SeqTensor::zeros(x.channels(), len);
    if steps < len {
        for c in 0..x.channels() {
            y.row_mut(c)[steps..].copy_from_slice(&x.row(c)[..len - steps]);
        }
    }
    y
}

pub fn delay_backward(dy: &SeqTensor, steps: usize) -> SeqTensor {
    let len = dy.len();
    let mut dx = SeqTensor::zeros(dy.channels(), len);
    if steps < len {
        for c in 0..dy.channels() {
            dx.row_mut(c)[..len - steps].copy_from_slice(&dy.row(c)[steps..]);
        }
    }
    dx
}
