//! JSON checkpoint container.
//!
//! ```json
//! { "format": "ufcnn-ckpt-v1",
//!   "config": { "variant": "ufcnn", "levels": 3, ... },
//!   "params": { "H1.weights": [...], "H1.bias": [...], ..., "G0.bias": [...] } }
//! ```
//!
//! Weight arrays are the flattened `(out, in, k)` tensors, row-major.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::net::{Network, NetworkConfig};
use crate::tensor::ConvLayer;

pub const FORMAT_TAG: &str = "ufcnn-ckpt-v1";

#[derive(Debug, Serialize, Deserialize)]
struct Checkpoint {
    format: String,
    config: NetworkConfig,
    params: BTreeMap<String, Vec<f64>>,
}

pub fn to_json(net: &Network) -> Result<String> {
    let mut params = BTreeMap::new();
    for (name, layer) in net.layer_names().into_iter().zip(net.layers()) {
        params.insert(format!("{name}.weights"), layer.weights.clone());
        params.insert(format!("{name}.bias"), layer.bias.clone());
    }
    let ckpt = Checkpoint {
        format: FORMAT_TAG.to_string(),
        config: *net.config(),
        params,
    };
    Ok(serde_json::to_string_pretty(&ckpt)?)
}

pub fn from_json(text: &str) -> Result<Network> {
    let mut ckpt: Checkpoint = serde_json::from_str(text)?;
    if ckpt.format != FORMAT_TAG {
        return Err(Error::data(format!(
            "unsupported checkpoint format `{}` (expected `{FORMAT_TAG}`)",
            ckpt.format
        )));
    }
    let template = Network::zeros(ckpt.config)?;
    let mut layers = Vec::new();
    for (name, shape) in template.layer_names().into_iter().zip(template.layers()) {
        let mut take = |suffix: &str| {
            ckpt.params
                .remove(&format!("{name}.{suffix}"))
                .ok_or_else(|| Error::data(format!("checkpoint lacks `{name}.{suffix}`")))
        };
        let weights = take("weights")?;
        let bias = take("bias")?;
        layers.push(ConvLayer::with_params(
            shape.in_channels(),
            shape.out_channels(),
            shape.kernel_len(),
            shape.dilation(),
            weights,
            bias,
        )?);
    }
    if let Some(extra) = ckpt.params.keys().next() {
        return Err(Error::data(format!("unexpected checkpoint entry `{extra}`")));
    }
    Network::from_layers(ckpt.config, layers)
}

pub fn save(net: &Network, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, to_json(net)?).map_err(|e| Error::io(path, e))
}

pub fn load(path: impl AsRef<Path>) -> Result<Network> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    from_json(&text)
}
