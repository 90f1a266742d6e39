//! Central finite-difference checks of every analytic backward pass.
//!
//! Each suite packs the quantities under test into one flat vector, evaluates
//! the analytic gradient once, then perturbs every coordinate by `±h`.
//! Coordinates whose perturbation flips a rectifier or a pooling winner are
//! skipped, since the objective is not differentiable across those kinks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::net::{Network, NetworkConfig, Variant};
use crate::tensor::{
    concat_channels, delay, delay_backward, loss_eval, maxpool2, maxpool2_backward, relu,
    relu_backward, split_channels, upsample2_zeros, upsample2_zeros_backward, ConvLayer, LossKind,
    SeqTensor, Target,
};

pub const STEP: f64 = 1e-5;
pub const TOLERANCE: f64 = 1e-4;
/// Coordinates that must be checked per suite.
pub const MIN_COORDS: usize = 100;
/// Denominator floor so that vanishing gradients are compared absolutely.
const REL_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub name: String,
    pub checked: usize,
    pub skipped_kinks: usize,
    pub max_rel_err: f64,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.checked >= MIN_COORDS && self.max_rel_err < TOLERANCE
    }

    fn merge(&mut self, other: GradCheckReport) {
        self.checked += other.checked;
        self.skipped_kinks += other.skipped_kinks;
        self.max_rel_err = self.max_rel_err.max(other.max_rel_err);
    }
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_FLOOR)
}

/// Compares `analytic` against central differences of `f` around `point`.
///
/// `f` returns the objective and an optional piecewise-linearity signature.
pub fn check_coordinates<F>(name: &str, point: &[f64], analytic: &[f64], mut f: F) -> Result<GradCheckReport>
where
    F: FnMut(&[f64]) -> Result<(f64, Option<Vec<usize>>)>,
{
    assert_eq!(point.len(), analytic.len());
    let (_, base_sig) = f(point)?;
    let mut report = GradCheckReport {
        name: name.to_string(),
        checked: 0,
        skipped_kinks: 0,
        max_rel_err: 0.0,
    };
    let mut p = point.to_vec();
    for i in 0..p.len() {
        let orig = p[i];
        p[i] = orig + STEP;
        let (up, sig_up) = f(&p)?;
        p[i] = orig - STEP;
        let (down, sig_down) = f(&p)?;
        p[i] = orig;
        if sig_up != base_sig || sig_down != base_sig {
            report.skipped_kinks += 1;
            continue;
        }
        let numeric = (up - down) / (2.0 * STEP);
        report.checked += 1;
        report.max_rel_err = report.max_rel_err.max(relative_error(analytic[i], numeric));
    }
    Ok(report)
}

fn uniform(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

fn tensor(rng: &mut ChaCha8Rng, channels: usize, len: usize) -> SeqTensor {
    SeqTensor::from_vec(channels, len, uniform(rng, channels * len)).expect("positive shape")
}

fn dot(a: &SeqTensor, b: &SeqTensor) -> f64 {
    a.data().iter().zip(b.data()).map(|(x, y)| x * y).sum()
}

fn conv_suite(seed: u64, dilation: usize) -> Result<GradCheckReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (cin, cout, k, len) = (3, 4, 3, 20);
    let mut layer = ConvLayer::with_params(
        cin,
        cout,
        k,
        dilation,
        uniform(&mut rng, cout * cin * k),
        uniform(&mut rng, cout),
    )?;
    let x = tensor(&mut rng, cin, len);
    let r = tensor(&mut rng, cout, len);
    let dx = layer.backward(&x, &r)?;

    let nw = layer.weights.len();
    let mut point = layer.weights.clone();
    point.extend_from_slice(&layer.bias);
    point.extend_from_slice(x.data());
    let mut analytic = layer.grad_weights.clone();
    analytic.extend_from_slice(&layer.grad_bias);
    analytic.extend_from_slice(dx.data());

    check_coordinates(&format!("causal_conv(d={dilation})"), &point, &analytic, |p| {
        let l = ConvLayer::with_params(
            cin,
            cout,
            k,
            dilation,
            p[..nw].to_vec(),
            p[nw..nw + cout].to_vec(),
        )?;
        let xp = SeqTensor::from_vec(cin, len, p[nw + cout..].to_vec())?;
        Ok((dot(&l.forward(&xp)?, &r), None))
    })
}

fn relu_suite(seed: u64) -> Result<GradCheckReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (ch, len) = (4, 30);
    // keep samples away from the kink at zero
    let data = uniform(&mut rng, ch * len)
        .into_iter()
        .map(|v| if v.abs() < 0.05 { v + 0.1f64.copysign(v) } else { v })
        .collect();
    let x = SeqTensor::from_vec(ch, len, data)?;
    let r = tensor(&mut rng, ch, len);
    let dx = relu_backward(&x, &r)?;
    check_coordinates("relu", x.data(), dx.data(), |p| {
        let xp = SeqTensor::from_vec(ch, len, p.to_vec())?;
        Ok((dot(&relu(&xp), &r), None))
    })
}

/// `y = conv_b([relu(conv_a(x)) ; z])`: routes the concatenation gradient
/// through two layers so misrouted rows show up.
fn concat_suite(seed: u64) -> Result<GradCheckReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (len, ca, cz) = (20, 2, 3);
    let mut a = ConvLayer::with_params(1, ca, 2, 1, uniform(&mut rng, ca * 2), uniform(&mut rng, ca))?;
    let mut b = ConvLayer::with_params(
        ca + cz,
        2,
        2,
        2,
        uniform(&mut rng, 2 * (ca + cz) * 2),
        uniform(&mut rng, 2),
    )?;
    let x = tensor(&mut rng, 1, len);
    let z = tensor(&mut rng, cz, len);
    let r = tensor(&mut rng, 2, len);

    let pre = a.forward(&x)?;
    let cat = concat_channels(&relu(&pre), &z)?;
    let d_cat = b.backward(&cat, &r)?;
    let (d_h, d_z) = split_channels(&d_cat, ca)?;
    let d_x = a.backward(&x, &relu_backward(&pre, &d_h)?)?;

    let mut point = x.data().to_vec();
    point.extend_from_slice(z.data());
    point.extend_from_slice(&a.weights);
    point.extend_from_slice(&b.weights);
    let mut analytic = d_x.data().to_vec();
    analytic.extend_from_slice(d_z.data());
    analytic.extend_from_slice(&a.grad_weights);
    analytic.extend_from_slice(&b.grad_weights);

    let (na, nb) = (a.weights.len(), b.weights.len());
    check_coordinates("concat_channels", &point, &analytic, |p| {
        let xp = SeqTensor::from_vec(1, len, p[..len].to_vec())?;
        let zp = SeqTensor::from_vec(cz, len, p[len..len + cz * len].to_vec())?;
        let off = len + cz * len;
        let la = ConvLayer::with_params(1, ca, 2, 1, p[off..off + na].to_vec(), a.bias.clone())?;
        let lb = ConvLayer::with_params(
            ca + cz,
            2,
            2,
            2,
            p[off + na..off + na + nb].to_vec(),
            b.bias.clone(),
        )?;
        let pre = la.forward(&xp)?;
        let sig = pre.data().iter().map(|&v| usize::from(v > 0.0)).collect();
        let y = lb.forward(&concat_channels(&relu(&pre), &zp)?)?;
        Ok((dot(&y, &r), Some(sig)))
    })
}

fn maxpool_suite(seed: u64) -> Result<GradCheckReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (ch, len) = (3, 41);
    let x = tensor(&mut rng, ch, len);
    let (y, idx) = maxpool2(&x);
    let r = tensor(&mut rng, ch, y.len());
    let dx = maxpool2_backward(&r, &idx, len)?;
    check_coordinates("maxpool2", x.data(), dx.data(), |p| {
        let xp = SeqTensor::from_vec(ch, len, p.to_vec())?;
        let (yp, idx) = maxpool2(&xp);
        Ok((dot(&yp, &r), Some(idx)))
    })
}

/// Pool, zero-insert back to the original length, then delay by one step.
fn pool_upsample_suite(seed: u64) -> Result<GradCheckReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (ch, len) = (3, 35);
    let x = tensor(&mut rng, ch, len);
    let r = tensor(&mut rng, ch, len);
    let (pooled, idx) = maxpool2(&x);
    let d_up = delay_backward(&r, 1);
    let d_pooled = upsample2_zeros_backward(&d_up, pooled.len())?;
    let dx = maxpool2_backward(&d_pooled, &idx, len)?;
    check_coordinates("maxpool2+upsample2_zeros+delay", x.data(), dx.data(), |p| {
        let xp = SeqTensor::from_vec(ch, len, p.to_vec())?;
        let (pooled, idx) = maxpool2(&xp);
        let y = delay(&upsample2_zeros(&pooled, len)?, 1);
        Ok((dot(&y, &r), Some(idx)))
    })
}

fn loss_suite(seed: u64, kind: LossKind) -> Result<GradCheckReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (ch, len) = match kind {
        LossKind::SquaredError => (2, 60),
        LossKind::SoftmaxCrossEntropy => (5, 25),
        LossKind::SigmoidCrossEntropy => (3, 40),
    };
    let y = SeqTensor::from_vec(
        ch,
        len,
        uniform(&mut rng, ch * len).into_iter().map(|v| 3.0 * v).collect(),
    )?;
    let target = match kind {
        LossKind::SquaredError => Target::Real(tensor(&mut rng, ch, len)),
        LossKind::SoftmaxCrossEntropy => {
            Target::Classes((0..len).map(|_| rng.gen_range(0..ch)).collect())
        }
        LossKind::SigmoidCrossEntropy => Target::Binary(SeqTensor::from_vec(
            ch,
            len,
            (0..ch * len).map(|_| f64::from(rng.gen_range(0..2u8))).collect(),
        )?),
    };
    let (_, grad) = loss_eval(kind, &y, &target)?;
    check_coordinates(&format!("loss({kind:?})"), y.data(), grad.data(), |p| {
        let yp = SeqTensor::from_vec(ch, len, p.to_vec())?;
        Ok((loss_eval(kind, &yp, &target)?.0, None))
    })
}

/// Whole-network parameter gradients under the squared-error loss.
///
/// Repeats with fresh inputs until at least [`MIN_COORDS`] coordinates
/// were checked away from kinks.
pub fn network_suite(config: NetworkConfig, len: usize, seed: u64) -> Result<GradCheckReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut net = Network::build(config, rng.gen())?;
    // nonzero biases so that no unit is exactly at the kink for zero input
    for layer in net.layers_mut() {
        for b in layer.bias.iter_mut() {
            *b = rng.gen_range(-0.1..0.1);
        }
    }
    let mut total = GradCheckReport {
        name: format!(
            "network({} L={} F={} K={} T={len})",
            config.variant, config.levels, config.filters, config.kernel_len
        ),
        checked: 0,
        skipped_kinks: 0,
        max_rel_err: 0.0,
    };
    for _ in 0..10 {
        let x = tensor(&mut rng, config.in_channels, len);
        let target = Target::Real(tensor(&mut rng, config.out_channels, len));
        net.zero_grad();
        let y = net.forward(&x)?;
        let (_, dy) = loss_eval(LossKind::SquaredError, &y, &target)?;
        net.backward(&dy)?;
        let analytic = net.grad_vector();
        let point = net.param_vector();
        let mut probe = net.clone();
        let report = check_coordinates(&total.name, &point, &analytic, |p| {
            for (i, &v) in p.iter().enumerate() {
                *probe.param_mut(i).expect("index within parameter count") = v;
            }
            let y = probe.forward(&x)?;
            let loss = loss_eval(LossKind::SquaredError, &y, &target)?.0;
            Ok((loss, probe.activation_pattern()))
        })?;
        total.merge(report);
        if total.checked >= MIN_COORDS {
            break;
        }
    }
    Ok(total)
}

/// The tiny whole-network configuration used by the standard suite.
pub fn tiny_config(variant: Variant) -> NetworkConfig {
    NetworkConfig {
        variant,
        levels: 2,
        filters: 3,
        kernel_len: 2,
        in_channels: 2,
        out_channels: 2,
        loss: LossKind::SquaredError,
    }
}

/// Every primitive plus both tiny whole networks.
pub fn run_all(seed: u64) -> Result<Vec<GradCheckReport>> {
    Ok(vec![
        conv_suite(seed, 1)?,
        conv_suite(seed.wrapping_add(1), 4)?,
        relu_suite(seed)?,
        concat_suite(seed)?,
        maxpool_suite(seed)?,
        pool_upsample_suite(seed)?,
        loss_suite(seed, LossKind::SquaredError)?,
        loss_suite(seed, LossKind::SoftmaxCrossEntropy)?,
        loss_suite(seed, LossKind::SigmoidCrossEntropy)?,
        network_suite(tiny_config(Variant::Ufcnn), 12, seed)?,
        network_suite(tiny_config(Variant::Fcn), 12, seed)?,
    ])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn relative_error_floor() {
        assert_eq!(relative_error(1.0, 1.0), 0.0);
        assert!((relative_error(2.0, 1.0) - 0.5).abs() < 1e-15);
        assert!(relative_error(1e-12, 0.0) < 1e-5);
    }

    #[test]
    fn detects_a_wrong_gradient() {
        let report = check_coordinates("x^2", &[1.0, 2.0], &[2.0, 5.0], |p| {
            Ok((p.iter().map(|v| v * v).sum(), None))
        })
        .unwrap();
        assert!(report.max_rel_err > 0.1);
    }

    #[test]
    fn all_suites_pass() {
        for seed in [1, 2, 3] {
            for r in run_all(seed).unwrap() {
                assert!(r.passed(), "seed {seed}: {r:?}");
            }
        }
    }

    #[test]
    fn random_three_level_compositions() {
        for (seed, variant) in [(11, Variant::Ufcnn), (12, Variant::Fcn)] {
            let config = NetworkConfig {
                levels: 3,
                kernel_len: 3,
                ..tiny_config(variant)
            };
            let r = network_suite(config, 16, seed).unwrap();
            assert!(r.passed(), "{r:?}");
        }
    }
}
