use std::fs;
use std::path::Path;

use serde::Deserialize;
use ufcnn::experiment::TradingConfig;
use ufcnn::net::Variant;
use ufcnn::tracking::TrackingParams;
use ufcnn::train::TrainConfig;
use ufcnn::{Error, Result};

/// Contents of a `--config` TOML file. Every section is optional and
/// command-line flags win over file values.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub train: Option<TrainConfig>,
    pub network: Option<NetworkSection>,
    pub tracking: Option<TrackingSection>,
    pub trading: Option<TradingConfig>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkSection {
    pub variant: Option<Variant>,
    pub levels: Option<usize>,
    pub filters: Option<usize>,
    pub kernel_len: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrackingSection {
    pub n_train: usize,
    pub n_val: usize,
    pub n_test: usize,
    pub seq_len: usize,
    pub params: TrackingParams,
}

impl Default for TrackingSection {
    fn default() -> Self {
        TrackingSection {
            n_train: 2000,
            n_val: 50,
            n_test: 50,
            seq_len: 5000,
            params: TrackingParams::default(),
        }
    }
}

impl TrackingSection {
    pub fn desk_scale() -> Self {
        TrackingSection {
            n_train: 100,
            n_val: 20,
            n_test: 20,
            seq_len: 1000,
            ..TrackingSection::default()
        }
    }
}

pub fn load(path: Option<&Path>) -> Result<FileConfig> {
    let Some(path) = path else {
        return Ok(FileConfig::default());
    };
    let text = fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sections_parse() {
        let cfg: FileConfig = toml::from_str(
            "[train]\ntotal_iters = 0\n[network]\nvariant = \"fcn\"\nlevels = 2\n[tracking]\nn_train = 3\n",
        )
        .unwrap();
        assert_eq!(cfg.train.unwrap().total_iters, 0);
        assert_eq!(cfg.network.unwrap().variant, Some(Variant::Fcn));
        let tr = cfg.tracking.unwrap();
        assert_eq!((tr.n_train, tr.seq_len), (3, 5000));
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(toml::from_str::<FileConfig>("[train]\nlearning_rate = 1\n").is_err());
        assert!(toml::from_str::<FileConfig>("[bogus]\n").is_err());
    }
}
