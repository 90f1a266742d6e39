use serde::{Deserialize, Serialize};

use super::SeqTensor;
use crate::error::{Error, Result};

/// Training objective, normalized per time-step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    /// Squared error summed over channels, averaged over time.
    SquaredError,
    /// Per-step softmax over channels against a class index.
    SoftmaxCrossEntropy,
    /// Independent per-channel Bernoulli likelihoods.
    SigmoidCrossEntropy,
}

/// Supervision for one sequence. The variant must agree with the [`LossKind`].
#[derive(Debug, Clone, PartialEq)]
pub enum Target {
    Real(SeqTensor),
    Classes(Vec<usize>),
    Binary(SeqTensor),
}

impl Target {
    pub fn len(&self) -> usize {
        match self {
            Target::Real(t) | Target::Binary(t) => t.len(),
            Target::Classes(c) => c.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Returns the loss value and its gradient with respect to `y`.
pub fn loss_eval(kind: LossKind, y: &SeqTensor, target: &Target) -> Result<(f64, SeqTensor)> {
    let len = y.len() as f64;
    match (kind, target) {
        (LossKind::SquaredError, Target::Real(t)) => {
            check_shape(y, t)?;
            let mut grad = SeqTensor::zeros(y.channels(), y.len());
            let mut loss = 0.0;
            for ((g, &yv), &tv) in grad.data_mut().iter_mut().zip(y.data()).zip(t.data()) {
                let r = yv - tv;
                loss += r * r;
                *g = 2.0 * r / len;
            }
            Ok((loss / len, grad))
        }
        (LossKind::SoftmaxCrossEntropy, Target::Classes(classes)) => {
            if classes.len() != y.len() {
                return Err(Error::config(format!(
                    "{} class labels for a signal of length {}",
                    classes.len(),
                    y.len()
                )));
            }
            let n_cls = y.channels();
            let mut grad = SeqTensor::zeros(n_cls, y.len());
            let mut loss = 0.0;
            let mut logits = vec![0.0; n_cls];
            for (t, &cls) in classes.iter().enumerate() {
                if cls >= n_cls {
                    return Err(Error::data(format!(
                        "class index {cls} at step {t} out of range for {n_cls} classes"
                    )));
                }
                for (c, l) in logits.iter_mut().enumerate() {
                    *l = y[(c, t)];
                }
                let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let sum: f64 = logits.iter().map(|l| (l - max).exp()).sum();
                let log_z = max + sum.ln();
                loss += log_z - logits[cls];
                for (c, &l) in logits.iter().enumerate() {
                    let p = (l - log_z).exp();
                    let ind = if c == cls { 1.0 } else { 0.0 };
                    grad[(c, t)] = (p - ind) / len;
                }
            }
            Ok((loss / len, grad))
        }
        (LossKind::SigmoidCrossEntropy, Target::Binary(t)) => {
            check_shape(y, t)?;
            let mut grad = SeqTensor::zeros(y.channels(), y.len());
            let mut loss = 0.0;
            for ((g, &z), &tv) in grad.data_mut().iter_mut().zip(y.data()).zip(t.data()) {
                // -[t log s(z) + (1-t) log(1-s(z))], evaluated without overflow
                loss += z.max(0.0) - z * tv + (-z.abs()).exp().ln_1p();
                *g = (sigmoid(z) - tv) / len;
            }
            Ok((loss / len, grad))
        }
        (kind, _) => Err(Error::config(format!(
            "target variant does not match loss {kind:?}"
        ))),
    }
}

pub(crate) fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn check_shape(y: &SeqTensor, t: &SeqTensor) -> Result<()> {
    if !y.same_shape(t) {
        return Err(Error::config(format!(
            "prediction is {}x{} but target is {}x{}",
            y.channels(),
            y.len(),
            t.channels(),
            t.len()
        )));
    }
    Ok(())
}
