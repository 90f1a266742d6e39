//! Experiment drivers: the tracking ablation grid and the trading
//! classification pipeline.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::market::{
    action_accuracy, optimal_actions, simulate_pnl, synth_quotes, uniform_strategy, Action, FeatureScaler,
    SimParams, StrategyReport, Tick,
};
use crate::net::{Network, NetworkConfig, Variant};
use crate::tensor::{LossKind, Target};
use crate::tracking::{generate_dataset, Split, TrackingDataset, TrackingParams};
use crate::train::{argmax_at, train_with, HistoryRow, Sequence, TrainConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AblationConfig {
    pub levels: Vec<usize>,
    pub filters: Vec<usize>,
    pub variants: Vec<Variant>,
    pub kernel_len: usize,
    pub n_train: usize,
    pub n_val: usize,
    pub seq_len: usize,
    pub seed: u64,
    pub tracking: TrackingParams,
    pub train: TrainConfig,
}

impl Default for AblationConfig {
    fn default() -> Self {
        AblationConfig::desk_scale(0)
    }
}

impl AblationConfig {
    /// 100 train / 20 val sequences of length 1000, 5000 iterations.
    pub fn desk_scale(seed: u64) -> Self {
        AblationConfig {
            levels: vec![1, 2, 3],
            filters: vec![16, 32],
            variants: vec![Variant::Ufcnn, Variant::Fcn],
            kernel_len: 5,
            n_train: 100,
            n_val: 20,
            seq_len: 1000,
            seed,
            tracking: TrackingParams::default(),
            train: TrainConfig {
                total_iters: 5000,
                seed,
                ..TrainConfig::default()
            },
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.levels.is_empty() || self.filters.is_empty() || self.variants.is_empty() {
            return Err(Error::config("ablation grid needs levels, filters and variants"));
        }
        if self.n_train == 0 || self.n_val == 0 {
            return Err(Error::config("ablation needs training and validation sequences"));
        }
        self.tracking.validate()?;
        self.train.validate()?;
        for cell in self.cells() {
            cell.validate()?;
            if self.seq_len < cell.min_input_len() {
                return Err(Error::config(format!(
                    "seq_len {} too short for {} with {} levels",
                    self.seq_len, cell.variant, cell.levels
                )));
            }
        }
        Ok(())
    }

    /// Network configurations in table order: variant, then levels, then filters.
    pub fn cells(&self) -> Vec<NetworkConfig> {
        let mut out = Vec::new();
        for &variant in &self.variants {
            for &levels in &self.levels {
                for &filters in &self.filters {
                    out.push(NetworkConfig {
                        variant,
                        levels,
                        filters,
                        kernel_len: self.kernel_len,
                        in_channels: 1,
                        out_channels: 2,
                        loss: LossKind::SquaredError,
                    });
                }
            }
        }
        out
    }

    pub fn dataset(&self) -> Result<TrackingDataset> {
        generate_dataset(&self.tracking, self.n_train, self.n_val, 0, self.seq_len, self.seed)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AblationCell {
    pub variant: Variant,
    pub levels: usize,
    pub filters: usize,
    /// Best validation MSE per time-step; `None` if training diverged.
    pub val_mse: Option<f64>,
    pub history: Vec<HistoryRow>,
}

/// Trains every grid cell on one shared dataset. Each cell uses the same
/// network and sampling seed, so cells that describe the same graph produce
/// identical results.
pub fn run_ablation<F>(cfg: &AblationConfig, data: &TrackingDataset, mut on_cell: F) -> Result<Vec<AblationCell>>
where
    F: FnMut(&AblationCell),
{
    cfg.validate()?;
    let train_set = data.sequences(Split::Train);
    let val_set = data.sequences(Split::Val);
    let mut cells = Vec::new();
    for net_cfg in cfg.cells() {
        let net = Network::build(net_cfg, cfg.seed)?;
        let (val_mse, history) = match train_with(net, &train_set, &val_set, &cfg.train, |_| {}) {
            Ok(out) => (out.best.map(|b| b.val_metric), out.history),
            Err(Error::Divergence { .. }) => (None, Vec::new()),
            Err(e) => return Err(e),
        };
        let cell = AblationCell {
            variant: net_cfg.variant,
            levels: net_cfg.levels,
            filters: net_cfg.filters,
            val_mse,
            history,
        };
        on_cell(&cell);
        cells.push(cell);
    }
    Ok(cells)
}

pub fn cell_mse(cells: &[AblationCell], variant: Variant, levels: usize, filters: usize) -> Option<f64> {
    cells
        .iter()
        .find(|c| c.variant == variant && c.levels == levels && c.filters == filters)
        .and_then(|c| c.val_mse)
}

/// One table per variant: rows are levels, columns are filter counts.
pub fn ablation_tables(cells: &[AblationCell]) -> String {
    let mut out = String::new();
    let mut variants: Vec<Variant> = cells.iter().map(|c| c.variant).collect();
    variants.dedup();
    for variant in variants {
        let mine: Vec<&AblationCell> = cells.iter().filter(|c| c.variant == variant).collect();
        let mut levels: Vec<usize> = mine.iter().map(|c| c.levels).collect();
        let mut filters: Vec<usize> = mine.iter().map(|c| c.filters).collect();
        levels.sort_unstable();
        levels.dedup();
        filters.sort_unstable();
        filters.dedup();

        let _ = writeln!(out, "{} MSE per time-step", variant.to_string().to_uppercase());
        let _ = write!(out, "{:>14}", "levels/filters");
        for f in &filters {
            let _ = write!(out, " {f:>10}");
        }
        out.push('\n');
        for &l in &levels {
            let _ = write!(out, "{l:>14}");
            for &f in &filters {
                match mine.iter().find(|c| c.levels == l && c.filters == f) {
                    Some(AblationCell { val_mse: Some(v), .. }) => {
                        let _ = write!(out, " {v:>10.4}");
                    }
                    Some(_) => {
                        let _ = write!(out, " {:>10}", "diverged");
                    }
                    None => {
                        let _ = write!(out, " {:>10}", "-");
                    }
                }
            }
            out.push('\n');
        }
        out.push('\n');
    }
    out
}

pub const ABLATION_HEADER: &str = "variant,levels,filters,val_mse";

pub fn ablation_csv(cells: &[AblationCell]) -> String {
    let mut out = String::from(ABLATION_HEADER);
    out.push('\n');
    for c in cells {
        let v = c.val_mse.map_or("nan".to_string(), |v| v.to_string());
        let _ = writeln!(out, "{},{},{},{}", c.variant, c.levels, c.filters, v);
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TradingConfig {
    pub n_train: usize,
    pub n_val: usize,
    pub n_test: usize,
    pub seq_len: usize,
    pub vol: f64,
    pub spread: f64,
    pub sim: SimParams,
    pub levels: usize,
    pub filters: usize,
    pub kernel_len: usize,
    pub scale_features: bool,
    pub seed: u64,
    pub train: TrainConfig,
}

impl Default for TradingConfig {
    fn default() -> Self {
        TradingConfig {
            n_train: 40,
            n_val: 10,
            n_test: 10,
            seq_len: 1000,
            vol: 0.05,
            spread: 0.1,
            sim: SimParams::default(),
            levels: 4,
            filters: 16,
            kernel_len: 5,
            scale_features: true,
            seed: 0,
            train: TrainConfig {
                total_iters: 1000,
                eval_every: 100,
                ..TrainConfig::default()
            },
        }
    }
}

impl TradingConfig {
    pub fn net_config(&self, in_channels: usize) -> NetworkConfig {
        NetworkConfig {
            variant: Variant::Ufcnn,
            levels: self.levels,
            filters: self.filters,
            kernel_len: self.kernel_len,
            in_channels,
            out_channels: Action::COUNT,
            loss: LossKind::SoftmaxCrossEntropy,
        }
    }

    /// Synthetic quote series for each split, seeded per split and index.
    pub fn quotes(&self) -> Result<[Vec<Vec<Tick>>; 3]> {
        let gen = |offset: u64, n: usize| -> Result<Vec<Vec<Tick>>> {
            (0..n as u64)
                .map(|i| synth_quotes(self.seq_len, mix_seed(self.seed, offset, i), self.vol, self.spread))
                .collect()
        };
        Ok([gen(0, self.n_train)?, gen(1, self.n_val)?, gen(2, self.n_test)?])
    }
}

fn mix_seed(seed: u64, split: u64, index: u64) -> u64 {
    let mut z = seed
        .wrapping_add(split.wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add(index.wrapping_mul(0xBF58_476D_1CE4_E5B9))
        .wrapping_add(0x94D0_49BB_1331_11EB);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Classifier examples: normalized tick features against optimal labels.
pub fn labeled_sequences(series: &[Vec<Tick>], scaler: &FeatureScaler, sim: &SimParams) -> Result<Vec<Sequence>> {
    series
        .iter()
        .map(|ticks| {
            let (labels, _) = optimal_actions(ticks, sim)?;
            Ok(Sequence {
                input: scaler.transform(ticks)?,
                target: Target::Classes(labels.iter().map(|a| a.index()).collect()),
            })
        })
        .collect()
}

/// Argmax action per time-step.
pub fn predict_actions(net: &Network, scaler: &FeatureScaler, ticks: &[Tick]) -> Result<Vec<Action>> {
    let y = net.infer(&scaler.transform(ticks)?)?;
    Ok((0..y.len())
        .map(|t| Action::from_index(argmax_at(&y, t)).expect("network has five outputs"))
        .collect())
}

/// Profit per time-step and label accuracy of the model, the optimal
/// labels, and the uniform strategy over `series`.
pub fn backtest(
    net: &Network,
    scaler: &FeatureScaler,
    series: &[Vec<Tick>],
    sim: &SimParams,
    seed: u64,
) -> Result<Vec<StrategyReport>> {
    if series.is_empty() {
        return Err(Error::data("nothing to backtest"));
    }
    let mut pnl = [0.0; 3];
    let mut hits = [0.0; 3];
    let mut steps = 0usize;
    for (i, ticks) in series.iter().enumerate() {
        let (labels, best) = optimal_actions(ticks, sim)?;
        let model = predict_actions(net, scaler, ticks)?;
        let uniform = uniform_strategy(ticks.len(), mix_seed(seed, 3, i as u64));
        pnl[0] += simulate_pnl(ticks, &model, sim)?;
        pnl[1] += best;
        pnl[2] += simulate_pnl(ticks, &uniform, sim)?;
        let n = ticks.len() as f64;
        hits[0] += action_accuracy(&model, &labels) * n;
        hits[1] += n;
        hits[2] += action_accuracy(&uniform, &labels) * n;
        steps += ticks.len();
    }
    let steps = steps as f64;
    Ok(["model", "viterbi", "uniform"]
        .iter()
        .enumerate()
        .map(|(k, name)| StrategyReport {
            strategy: name.to_string(),
            profit_per_step: pnl[k] / steps,
            accuracy: hits[k] / steps,
        })
        .collect())
}

pub struct TradingOutcome {
    pub net: Network,
    pub scaler: FeatureScaler,
    pub history: Vec<HistoryRow>,
    pub reports: Vec<StrategyReport>,
}

/// Generates quotes, labels them, trains the classifier and backtests it on
/// the test split.
pub fn run_trading(cfg: &TradingConfig) -> Result<TradingOutcome> {
    cfg.sim.validate()?;
    if cfg.n_train == 0 || cfg.n_val == 0 || cfg.n_test == 0 {
        return Err(Error::config("trading experiment needs every split"));
    }
    let [train_q, val_q, test_q] = cfg.quotes()?;
    let refs: Vec<&[Tick]> = train_q.iter().map(Vec::as_slice).collect();
    let scaler = FeatureScaler::fit(&refs, cfg.scale_features)?;
    let net_cfg = cfg.net_config(scaler.channels());
    net_cfg.validate()?;
    let train_set = labeled_sequences(&train_q, &scaler, &cfg.sim)?;
    let val_set = labeled_sequences(&val_q, &scaler, &cfg.sim)?;
    let net = Network::build(net_cfg, cfg.seed)?;
    let out = train_with(net, &train_set, &val_set, &cfg.train, |_| {})?;
    let reports = backtest(&out.net, &scaler, &test_q, &cfg.sim, cfg.seed)?;
    Ok(TradingOutcome {
        net: out.net,
        scaler,
        history: out.history,
        reports,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_ablation() -> AblationConfig {
        AblationConfig {
            levels: vec![1, 2],
            filters: vec![2],
            n_train: 3,
            n_val: 2,
            seq_len: 40,
            train: TrainConfig {
                total_iters: 6,
                eval_every: 3,
                batch_size: 2,
                ..TrainConfig::default()
            },
            ..AblationConfig::desk_scale(5)
        }
    }

    #[test]
    fn single_level_variants_agree_bitwise() {
        let cfg = tiny_ablation();
        let data = cfg.dataset().unwrap();
        let cells = run_ablation(&cfg, &data, |_| {}).unwrap();
        assert_eq!(cells.len(), 4);
        let u = cell_mse(&cells, Variant::Ufcnn, 1, 2).unwrap();
        let f = cell_mse(&cells, Variant::Fcn, 1, 2).unwrap();
        assert_eq!(u.to_bits(), f.to_bits());
        let tables = ablation_tables(&cells);
        assert!(tables.contains("UFCNN MSE per time-step") && tables.contains("FCN MSE per time-step"));
        assert_eq!(ablation_csv(&cells).lines().count(), 5);
    }

    #[test]
    fn grid_order_and_validation() {
        let cfg = AblationConfig::desk_scale(1);
        let cells = cfg.cells();
        assert_eq!(cells.len(), 12);
        assert_eq!((cells[0].variant, cells[0].levels, cells[0].filters), (Variant::Ufcnn, 1, 16));
        assert_eq!((cells[11].variant, cells[11].levels, cells[11].filters), (Variant::Fcn, 3, 32));
        let bad = AblationConfig { seq_len: 1, ..tiny_ablation() };
        assert!(matches!(bad.validate(), Err(Error::Config(_))));
    }

    #[test]
    fn small_trading_run_reports_three_strategies() {
        let cfg = TradingConfig {
            n_train: 3,
            n_val: 1,
            n_test: 2,
            seq_len: 60,
            levels: 2,
            filters: 4,
            train: TrainConfig {
                total_iters: 5,
                eval_every: 5,
                ..TrainConfig::default()
            },
            ..TradingConfig::default()
        };
        let out = run_trading(&cfg).unwrap();
        let names: Vec<&str> = out.reports.iter().map(|r| r.strategy.as_str()).collect();
        assert_eq!(names, ["model", "viterbi", "uniform"]);
        assert_eq!(out.reports[1].accuracy, 1.0);
        assert!(out.reports[1].profit_per_step >= out.reports[0].profit_per_step);
        assert!(out.reports[1].profit_per_step >= out.reports[2].profit_per_step);
    }
}
