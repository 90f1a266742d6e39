//! Encoder/decoder convolutional networks over time series.
//!
//! Both variants share one wiring. With `L` resolution levels and `F`
//! filters:
//!
//! ```text
//! e1 = relu(H1 x)            e_l = relu(H_l e_{l-1})
//! d_L = relu(G_L e_L)        d_l = relu(G_l [e_l ; d_{l+1}])   l = L-1 .. 1
//! y  = G0 d1                 (linear, kernel length 1)
//! ```
//!
//! The undecimated variant keeps every signal at the input rate and dilates
//! the level-`l` filters by `2^(l-1)`. The decimated variant uses undilated
//! filters, max-pools before every `H_l` with `l > 1`, and brings `d_{l+1}`
//! back to the rate of `e_l` by zero insertion followed by a one-step delay.
//! The delay is what keeps the decimated decoder causal: a pooled sample
//! summarizes inputs up to the odd index of its pair.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{
    concat_channels, delay, delay_backward, maxpool2, maxpool2_backward, relu, relu_backward,
    split_channels, upsample2_zeros, upsample2_zeros_backward, ConvLayer, LossKind, SeqTensor,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    /// Dilated filters, no decimation.
    Ufcnn,
    /// Max-pool encoder, zero-insertion decoder.
    Fcn,
}

impl std::str::FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ufcnn" => Ok(Variant::Ufcnn),
            "fcn" => Ok(Variant::Fcn),
            other => Err(Error::config(format!("unknown variant `{other}`"))),
        }
    }
}

impl std::fmt::Display for Variant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Variant::Ufcnn => "ufcnn",
            Variant::Fcn => "fcn",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NetworkConfig {
    pub variant: Variant,
    pub levels: usize,
    pub filters: usize,
    pub kernel_len: usize,
    pub in_channels: usize,
    pub out_channels: usize,
    pub loss: LossKind,
}

impl NetworkConfig {
    pub fn validate(&self) -> Result<()> {
        if self.levels == 0 {
            return Err(Error::config("levels must be at least 1"));
        }
        if self.levels > 24 {
            return Err(Error::config("levels above 24 overflow the dilation schedule"));
        }
        if self.filters == 0 || self.kernel_len == 0 {
            return Err(Error::config("filters and kernel_len must be positive"));
        }
        if self.in_channels == 0 || self.out_channels == 0 {
            return Err(Error::config("in/out channel counts must be positive"));
        }
        Ok(())
    }

    /// Dilation used by the level-`level` filters (1-based).
    pub fn dilation(&self, level: usize) -> usize {
        match self.variant {
            Variant::Ufcnn => 1 << (level - 1),
            Variant::Fcn => 1,
        }
    }

    /// Shortest input the network accepts.
    pub fn min_input_len(&self) -> usize {
        match self.variant {
            Variant::Ufcnn => 1,
            Variant::Fcn => 1 << (self.levels - 1),
        }
    }

    /// Number of input samples (including the current one) that can reach an
    /// output sample. Defined for the undecimated variant only.
    pub fn receptive_field(&self) -> Result<usize> {
        if self.variant != Variant::Ufcnn {
            return Err(Error::config(
                "receptive field is only defined for the undecimated variant",
            ));
        }
        // H_l and G_l each span (K-1) 2^(l-1); G0 is pointwise.
        Ok(1 + 2 * (self.kernel_len - 1) * ((1 << self.levels) - 1))
    }

    /// Total trainable scalars (weights and biases).
    pub fn param_count(&self) -> usize {
        self.layer_shapes()
            .iter()
            .map(|&(i, o, k)| o * i * k + o)
            .sum()
    }

    /// `(in, out, kernel)` per layer in canonical order H1..HL, G_L..G1, G0.
    fn layer_shapes(&self) -> Vec<(usize, usize, usize)> {
        let (f, k, l) = (self.filters, self.kernel_len, self.levels);
        let mut shapes = Vec::with_capacity(2 * l + 1);
        shapes.push((self.in_channels, f, k));
        shapes.extend((1..l).map(|_| (f, f, k)));
        shapes.push((f, f, k));
        shapes.extend((1..l).map(|_| (2 * f, f, k)));
        shapes.push((f, self.out_channels, 1));
        shapes
    }
}

#[derive(Debug, Clone)]
struct Cache {
    enc_in: Vec<SeqTensor>,
    enc_pre: Vec<SeqTensor>,
    enc_out: Vec<SeqTensor>,
    /// `pool_idx[l]` pools `enc_out[l]` into `enc_in[l + 1]` (decimated only).
    pool_idx: Vec<Vec<usize>>,
    dec_in: Vec<SeqTensor>,
    dec_pre: Vec<SeqTensor>,
    dec_out: Vec<SeqTensor>,
}

/// An assembled network with its parameters and the activations cached by
/// the last [`Network::forward`].
#[derive(Debug, Clone)]
pub struct Network {
    config: NetworkConfig,
    /// H1..HL
    encoder: Vec<ConvLayer>,
    /// `decoder[l - 1]` is G_l.
    decoder: Vec<ConvLayer>,
    /// G0
    output: ConvLayer,
    cache: Option<Cache>,
}

impl Network {
    /// He-initialized network: weights ~ N(0, 2 / (fan_in * K)), zero biases.
    pub fn build(config: NetworkConfig, seed: u64) -> Result<Self> {
        let mut net = Self::zeros(config)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for layer in net.layers_mut() {
            let fan = (layer.in_channels() * layer.kernel_len()) as f64;
            let normal = Normal::new(0.0, (2.0 / fan).sqrt())
                .map_err(|e| Error::config(e.to_string()))?;
            for w in layer.weights.iter_mut() {
                *w = normal.sample(&mut rng);
            }
        }
        Ok(net)
    }

    /// Network with every parameter set to zero.
    pub fn zeros(config: NetworkConfig) -> Result<Self> {
        config.validate()?;
        let l = config.levels;
        let shapes = config.layer_shapes();
        let mut encoder = Vec::with_capacity(l);
        for (i, &(cin, cout, k)) in shapes[..l].iter().enumerate() {
            encoder.push(ConvLayer::new(cin, cout, k, config.dilation(i + 1))?);
        }
        // shapes[l..2l] are G_L..G1; store as G1..GL.
        let mut decoder = Vec::with_capacity(l);
        for level in 1..=l {
            let (cin, cout, k) = shapes[2 * l - level];
            decoder.push(ConvLayer::new(cin, cout, k, config.dilation(level))?);
        }
        let (cin, cout, k) = shapes[2 * l];
        let output = ConvLayer::new(cin, cout, k, 1)?;
        Ok(Network {
            config,
            encoder,
            decoder,
            output,
            cache: None,
        })
    }

    pub fn config(&self) -> &NetworkConfig {
        &self.config
    }

    /// Layer names in canonical order, matching [`Network::layers`].
    pub fn layer_names(&self) -> Vec<String> {
        let l = self.config.levels;
        (1..=l)
            .map(|i| format!("H{i}"))
            .chain((1..=l).rev().map(|i| format!("G{i}")))
            .chain(std::iter::once("G0".to_string()))
            .collect()
    }

    pub fn layers(&self) -> Vec<&ConvLayer> {
        self.encoder
            .iter()
            .chain(self.decoder.iter().rev())
            .chain(std::iter::once(&self.output))
            .collect()
    }

    pub fn layers_mut(&mut self) -> Vec<&mut ConvLayer> {
        self.encoder
            .iter_mut()
            .chain(self.decoder.iter_mut().rev())
            .chain(std::iter::once(&mut self.output))
            .collect()
    }

    pub fn num_params(&self) -> usize {
        self.layers().iter().map(|l| l.num_params()).sum()
    }

    /// All parameters flattened in canonical order (each layer: weights, bias).
    pub fn param_vector(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_params());
        for layer in self.layers() {
            out.extend_from_slice(&layer.weights);
            out.extend_from_slice(&layer.bias);
        }
        out
    }

    /// Gradient buffers flattened in the same order as [`Network::param_vector`].
    pub fn grad_vector(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_params());
        for layer in self.layers() {
            out.extend_from_slice(&layer.grad_weights);
            out.extend_from_slice(&layer.grad_bias);
        }
        out
    }

    /// Mutable access to the `index`-th scalar of [`Network::param_vector`].
    pub fn param_mut(&mut self, mut index: usize) -> Option<&mut f64> {
        for layer in self.layers_mut() {
            let nw = layer.weights.len();
            if index < nw {
                return Some(&mut layer.weights[index]);
            }
            index -= nw;
            let nb = layer.bias.len();
            if index < nb {
                return Some(&mut layer.bias[index]);
            }
            index -= nb;
        }
        None
    }

    pub fn zero_grad(&mut self) {
        for layer in self.layers_mut() {
            layer.zero_grad();
        }
    }

    /// Drops cached activations.
    pub fn clear_cache(&mut self) {
        self.cache = None;
    }

    /// Runs the network and caches activations for [`Network::backward`].
    pub fn forward(&mut self, x: &SeqTensor) -> Result<SeqTensor> {
        let (y, cache) = self.run(x)?;
        self.cache = Some(cache);
        Ok(y)
    }

    /// Runs the network without touching the activation cache.
    pub fn infer(&self, x: &SeqTensor) -> Result<SeqTensor> {
        self.run(x).map(|(y, _)| y)
    }

    fn run(&self, x: &SeqTensor) -> Result<(SeqTensor, Cache)> {
        let cfg = &self.config;
        if x.channels() != cfg.in_channels {
            return Err(Error::config(format!(
                "network expects {} input channels, got {}",
                cfg.in_channels,
                x.channels()
            )));
        }
        if x.len() < cfg.min_input_len() {
            return Err(Error::config(format!(
                "input length {} cannot survive {} halvings",
                x.len(),
                cfg.levels - 1
            )));
        }
        let decimated = cfg.variant == Variant::Fcn;
        let l = cfg.levels;
        let mut c = Cache {
            enc_in: Vec::with_capacity(l),
            enc_pre: Vec::with_capacity(l),
            enc_out: Vec::with_capacity(l),
            pool_idx: Vec::new(),
            dec_in: vec![SeqTensor::zeros(1, 1); l],
            dec_pre: vec![SeqTensor::zeros(1, 1); l],
            dec_out: vec![SeqTensor::zeros(1, 1); l],
        };

        for (i, h) in self.encoder.iter().enumerate() {
            let input = match c.enc_out.last() {
                None => x.clone(),
                Some(prev) if decimated => {
                    let (pooled, idx) = maxpool2(prev);
                    c.pool_idx.push(idx);
                    pooled
                }
                Some(prev) => prev.clone(),
            };
            let pre = h.forward(&input)?;
            c.enc_out.push(relu(&pre));
            c.enc_pre.push(pre);
            c.enc_in.push(input);
            debug_assert_eq!(c.enc_in.len(), i + 1);
        }

        for level in (1..=l).rev() {
            let i = level - 1;
            let input = if level == l {
                c.enc_out[i].clone()
            } else {
                let deeper = &c.dec_out[i + 1];
                let skip = &c.enc_out[i];
                let up = if decimated {
                    delay(&upsample2_zeros(deeper, skip.len())?, 1)
                } else {
                    deeper.clone()
                };
                concat_channels(skip, &up)?
            };
            let pre = self.decoder[i].forward(&input)?;
            c.dec_out[i] = relu(&pre);
            c.dec_pre[i] = pre;
            c.dec_in[i] = input;
        }

        let y = self.output.forward(&c.dec_out[0])?;
        Ok((y, c))
    }

    /// Accumulates `dL/dparam` for every layer given `dL/dy` from the last
    /// forward pass.
    pub fn backward(&mut self, dy: &SeqTensor) -> Result<()> {
        let c = self
            .cache
            .as_ref()
            .ok_or_else(|| Error::State("backward called without a preceding forward".into()))?;
        let l = self.config.levels;
        let f = self.config.filters;
        let decimated = self.config.variant == Variant::Fcn;

        let mut d_dec = self.output.backward(&c.dec_out[0], dy)?;
        let mut d_enc: Vec<SeqTensor> = c
            .enc_out
            .iter()
            .map(|e| SeqTensor::zeros(e.channels(), e.len()))
            .collect();

        for level in 1..=l {
            let i = level - 1;
            let d_pre = relu_backward(&c.dec_pre[i], &d_dec)?;
            let d_in = self.decoder[i].backward(&c.dec_in[i], &d_pre)?;
            if level == l {
                add_assign(&mut d_enc[i], &d_in);
                break;
            }
            let (d_skip, d_up) = split_channels(&d_in, f)?;
            add_assign(&mut d_enc[i], &d_skip);
            d_dec = if decimated {
                upsample2_zeros_backward(&delay_backward(&d_up, 1), c.dec_out[i + 1].len())?
            } else {
                d_up
            };
        }

        for i in (0..l).rev() {
            let d_pre = relu_backward(&c.enc_pre[i], &d_enc[i])?;
            let d_in = self.encoder[i].backward(&c.enc_in[i], &d_pre)?;
            if i > 0 {
                let d_prev = if decimated {
                    maxpool2_backward(&d_in, &c.pool_idx[i - 1], c.enc_out[i - 1].len())?
                } else {
                    d_in
                };
                add_assign(&mut d_enc[i - 1], &d_prev);
            }
        }
        Ok(())
    }

    /// Rectifier on/off states and pooling winners from the cached forward
    /// pass. Two parameter settings with equal patterns lie in the same
    /// linear piece of the network.
    pub fn activation_pattern(&self) -> Option<Vec<usize>> {
        let c = self.cache.as_ref()?;
        let mut out = Vec::new();
        for pre in c.enc_pre.iter().chain(&c.dec_pre) {
            out.extend(pre.data().iter().map(|&v| usize::from(v > 0.0)));
        }
        for idx in &c.pool_idx {
            out.extend_from_slice(idx);
        }
        Some(out)
    }

    pub(crate) fn from_layers(
        config: NetworkConfig,
        mut layers: Vec<ConvLayer>,
    ) -> Result<Self> {
        let template = Self::zeros(config)?;
        if layers.len() != 2 * config.levels + 1 {
            return Err(Error::config("wrong number of layers for configuration"));
        }
        for (have, want) in layers.iter().zip(template.layers()) {
            if have.in_channels() != want.in_channels()
                || have.out_channels() != want.out_channels()
                || have.kernel_len() != want.kernel_len()
                || have.dilation() != want.dilation()
            {
                return Err(Error::config("layer shape does not match configuration"));
            }
        }
        layers.iter_mut().for_each(|l| l.ensure_grad_buffers());
        let output = layers.pop().expect("length checked");
        let mut decoder = layers.split_off(config.levels);
        decoder.reverse();
        Ok(Network {
            config,
            encoder: layers,
            decoder,
            output,
            cache: None,
        })
    }
}

fn add_assign(acc: &mut SeqTensor, x: &SeqTensor) {
    debug_assert_eq!(acc.data().len(), x.data().len());
    for (a, b) in acc.data_mut().iter_mut().zip(x.data()) {
        *a += b;
    }
}
