use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use ufcnn::checkpoint;
use ufcnn::dataset::{self, SequencePair};
use ufcnn::experiment::{
    ablation_csv, ablation_tables, backtest as run_backtest, labeled_sequences, run_ablation, AblationConfig,
    TradingConfig,
};
use ufcnn::gradcheck;
use ufcnn::market::{self, report_to_csv, FeatureScaler, SimParams, Tick, TickSeries};
use ufcnn::net::{Network, NetworkConfig, Variant};
use ufcnn::tensor::{LossKind, Target};
use ufcnn::tracking::{generate_dataset, Split, TrackingDataset};
use ufcnn::train::{evaluate, train_with, write_history_csv, Metric, Sequence, TrainConfig};
use ufcnn::{Error, Result};

use crate::config::{self, FileConfig, TrackingSection};
use crate::{
    AblationArgs, BacktestArgs, Common, EvalArgs, GenTrackingArgs, GradcheckArgs, LabelArgs, MarketArgs, NetArgs,
    SynthQuotesArgs, Task, TrainArgs, VariantArg,
};

pub const CHECKPOINT_FILE: &str = "checkpoint.json";
pub const HISTORY_FILE: &str = "history.csv";
pub const FEATURES_FILE: &str = "features.json";

/// Normalization and simulator settings a trading checkpoint depends on.
#[derive(Debug, Serialize, Deserialize)]
struct TradingFeatures {
    scaler: FeatureScaler,
    sim: SimParams,
}

fn io_err(path: &Path, e: std::io::Error) -> Error {
    Error::Io {
        path: path.to_path_buf(),
        source: e,
    }
}

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| io_err(path, e))
}

fn tracking_section(file: &FileConfig, desk: bool) -> TrackingSection {
    file.tracking.unwrap_or_else(|| {
        if desk {
            TrackingSection::desk_scale()
        } else {
            TrackingSection::default()
        }
    })
}

fn train_config(file: &FileConfig, common: &Common, desk_iters: usize) -> TrainConfig {
    let mut cfg = file.train.clone().unwrap_or_else(|| TrainConfig {
        total_iters: if common.desk_scale { desk_iters } else { TrainConfig::default().total_iters },
        ..TrainConfig::default()
    });
    cfg.seed = common.seed;
    cfg
}

fn single_variant(arg: Option<VariantArg>) -> Result<Option<Variant>> {
    match arg {
        None => Ok(None),
        Some(VariantArg::Ufcnn) => Ok(Some(Variant::Ufcnn)),
        Some(VariantArg::Fcn) => Ok(Some(Variant::Fcn)),
        Some(VariantArg::Both) => Err(Error::Config("--variant both is only valid for ablation".into())),
    }
}

/// Layers config: flags, then the [network] section, then `base`.
fn apply_net_overrides(mut base: NetworkConfig, file: &FileConfig, net: &NetArgs) -> Result<NetworkConfig> {
    if let Some(sec) = &file.network {
        base.variant = sec.variant.unwrap_or(base.variant);
        base.levels = sec.levels.unwrap_or(base.levels);
        base.filters = sec.filters.unwrap_or(base.filters);
        base.kernel_len = sec.kernel_len.unwrap_or(base.kernel_len);
    }
    base.variant = single_variant(net.variant)?.unwrap_or(base.variant);
    base.levels = net.levels.unwrap_or(base.levels);
    base.filters = net.filters.unwrap_or(base.filters);
    base.kernel_len = net.kernel_len.unwrap_or(base.kernel_len);
    base.validate()?;
    Ok(base)
}

fn apply_market(mut sim: SimParams, m: &MarketArgs) -> Result<SimParams> {
    sim.cost_per_trade = m.cost_per_trade.unwrap_or(sim.cost_per_trade);
    sim.max_position = m.max_position.unwrap_or(sim.max_position);
    sim.validate()?;
    Ok(sim)
}

fn trading_config(file: &FileConfig, common: &Common, market: &MarketArgs) -> Result<TradingConfig> {
    let mut cfg = file.trading.clone().unwrap_or_default();
    if let Some(train) = &file.train {
        cfg.train = train.clone();
    }
    cfg.seed = common.seed;
    cfg.train.seed = common.seed;
    cfg.sim = apply_market(cfg.sim, market)?;
    Ok(cfg)
}

fn pairs_to_sequences(pairs: Vec<SequencePair>, binary: bool) -> Vec<Sequence> {
    pairs
        .into_iter()
        .map(|p| Sequence {
            input: p.input,
            target: if binary { Target::Binary(p.target) } else { Target::Real(p.target) },
        })
        .collect()
}

/// `<split>_*.csv` tick files in `dir`, sorted by name; labeled files are skipped.
fn split_tick_files(dir: &Path, split: &str) -> Result<Vec<PathBuf>> {
    let prefix = format!("{split}_");
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| io_err(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            let name = p.file_name().and_then(|n| n.to_str()).unwrap_or("");
            name.starts_with(&prefix) && name.ends_with(".csv") && !name.ends_with(".labeled.csv")
        })
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(Error::Data(format!("no {prefix}*.csv tick files in {}", dir.display())));
    }
    Ok(files)
}

fn load_split_ticks(dir: &Path, split: &str) -> Result<Vec<Vec<Tick>>> {
    split_tick_files(dir, split)?
        .iter()
        .map(|p| market::load_ticks(p).map(|s| s.ticks))
        .collect()
}

fn parse_split(name: &str) -> Result<Split> {
    Split::ALL
        .into_iter()
        .find(|s| s.name() == name)
        .ok_or_else(|| Error::Config(format!("unknown split `{name}`")))
}

pub fn gen_tracking(args: GenTrackingArgs) -> Result<bool> {
    let c = &args.common;
    let file = config::load(c.config.as_deref())?;
    let sec = tracking_section(&file, c.desk_scale);
    let data = generate_dataset(&sec.params, sec.n_train, sec.n_val, sec.n_test, sec.seq_len, c.seed)?;
    data.save(&c.out_dir)?;
    println!(
        "wrote {} train / {} val / {} test sequences of length {} to {}",
        sec.n_train,
        sec.n_val,
        sec.n_test,
        sec.seq_len,
        c.out_dir.display()
    );
    Ok(true)
}

pub fn synth_quotes(args: SynthQuotesArgs) -> Result<bool> {
    let c = &args.common;
    let file = config::load(c.config.as_deref())?;
    let cfg = trading_config(&file, c, &args.market)?;
    ensure_dir(&c.out_dir)?;
    let splits = cfg.quotes()?;
    for (name, series) in ["train", "val", "test"].iter().zip(&splits) {
        for (i, ticks) in series.iter().enumerate() {
            let path = c.out_dir.join(format!("{name}_{i:03}.csv"));
            market::write_ticks(
                &path,
                &TickSeries {
                    indicator_names: Vec::new(),
                    ticks: ticks.clone(),
                },
            )?;
        }
    }
    println!(
        "wrote {}/{}/{} quote series of length {} to {}",
        cfg.n_train,
        cfg.n_val,
        cfg.n_test,
        cfg.seq_len,
        c.out_dir.display()
    );
    Ok(true)
}

pub fn label_trades(args: LabelArgs) -> Result<bool> {
    let c = &args.common;
    let file = config::load(c.config.as_deref())?;
    let sim = apply_market(file.trading.map(|t| t.sim).unwrap_or_default(), &args.market)?;
    ensure_dir(&c.out_dir)?;
    println!("file,pnl_upper_bound");
    for input in &args.inputs {
        let series = market::load_ticks(input)?;
        let (actions, pnl) = market::optimal_actions(&series.ticks, &sim)?;
        let stem = input.file_stem().and_then(|s| s.to_str()).unwrap_or("ticks");
        let out = c.out_dir.join(format!("{stem}.labeled.csv"));
        market::write_labeled(&out, &series, &actions)?;
        println!("{},{pnl}", out.display());
    }
    Ok(true)
}

pub fn train(args: TrainArgs) -> Result<bool> {
    let c = &args.common;
    let file = config::load(c.config.as_deref())?;
    ensure_dir(&c.out_dir)?;
    let (net_cfg, train_set, val_set, train_cfg) = match args.task {
        Task::Tracking => {
            let data = match &args.data {
                Some(dir) => TrackingDataset::load(dir)?,
                None => {
                    let sec = tracking_section(&file, c.desk_scale);
                    generate_dataset(&sec.params, sec.n_train, sec.n_val, 0, sec.seq_len, c.seed)?
                }
            };
            let base = NetworkConfig {
                variant: Variant::Ufcnn,
                levels: 3,
                filters: if c.desk_scale { 32 } else { 100 },
                kernel_len: 5,
                in_channels: 1,
                out_channels: 2,
                loss: LossKind::SquaredError,
            };
            (
                apply_net_overrides(base, &file, &args.net)?,
                data.sequences(Split::Train),
                data.sequences(Split::Val),
                train_config(&file, c, 5000),
            )
        }
        Task::Trading => {
            let cfg = trading_config(&file, c, &args.market)?;
            let [train_q, val_q] = match &args.data {
                Some(dir) => [load_split_ticks(dir, "train")?, load_split_ticks(dir, "val")?],
                None => {
                    let [t, v, _] = cfg.quotes()?;
                    [t, v]
                }
            };
            let refs: Vec<&[Tick]> = train_q.iter().map(Vec::as_slice).collect();
            let scaler = FeatureScaler::fit(&refs, cfg.scale_features)?;
            let net_cfg = apply_net_overrides(cfg.net_config(scaler.channels()), &file, &args.net)?;
            let train_set = labeled_sequences(&train_q, &scaler, &cfg.sim)?;
            let val_set = labeled_sequences(&val_q, &scaler, &cfg.sim)?;
            let features = TradingFeatures { scaler, sim: cfg.sim };
            write_text(&c.out_dir.join(FEATURES_FILE), &serde_json::to_string_pretty(&features)?)?;
            (net_cfg, train_set, val_set, cfg.train)
        }
        Task::Pianoroll => {
            let dir = args
                .data
                .as_deref()
                .ok_or_else(|| Error::Config("--task pianoroll needs --data with train.csv and val.csv".into()))?;
            let train_pairs = dataset::read(dir.join("train.csv"))?;
            let val_pairs = dataset::read(dir.join("val.csv"))?;
            let first = train_pairs
                .first()
                .ok_or_else(|| Error::Data("train.csv holds no sequences".into()))?;
            let base = NetworkConfig {
                variant: Variant::Ufcnn,
                levels: 3,
                filters: if c.desk_scale { 32 } else { 100 },
                kernel_len: 5,
                in_channels: first.input.channels(),
                out_channels: first.target.channels(),
                loss: LossKind::SigmoidCrossEntropy,
            };
            (
                apply_net_overrides(base, &file, &args.net)?,
                pairs_to_sequences(train_pairs, true),
                pairs_to_sequences(val_pairs, true),
                train_config(&file, c, 5000),
            )
        }
    };

    let net = Network::build(net_cfg, c.seed)?;
    let metric = Metric::for_loss(net_cfg.loss);
    let outcome = train_with(net, &train_set, &val_set, &train_cfg, |row| {
        eprintln!(
            "iter {:>6}  train_loss {:.6}  val_{metric} {:.6}",
            row.iteration, row.train_loss, row.val_metric
        );
    })?;
    checkpoint::save(&outcome.net, c.out_dir.join(CHECKPOINT_FILE))?;
    write_history_csv(c.out_dir.join(HISTORY_FILE), &outcome.history)?;
    match outcome.best {
        Some(best) => println!("best val_{metric} {} at iteration {}", best.val_metric, best.iteration),
        None => println!("no training iterations; wrote initial network"),
    }
    Ok(true)
}

fn load_features(path: &Path) -> Result<TradingFeatures> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

pub fn eval(args: EvalArgs) -> Result<bool> {
    let net = checkpoint::load(&args.checkpoint)?;
    let split = parse_split(&args.split)?;
    let need_data = || {
        args.data
            .as_deref()
            .ok_or_else(|| Error::Config("eval needs --data".into()))
    };
    let data = match args.task {
        Task::Tracking => TrackingDataset::load(need_data()?)?.sequences(split),
        Task::Trading => {
            let features_path = args
                .features
                .as_deref()
                .ok_or_else(|| Error::Config("--task trading needs --features".into()))?;
            let features = load_features(features_path)?;
            let sim = apply_market(features.sim, &args.market)?;
            let ticks = load_split_ticks(need_data()?, split.name())?;
            labeled_sequences(&ticks, &features.scaler, &sim)?
        }
        Task::Pianoroll => {
            let path = need_data()?.join(format!("{}.csv", split.name()));
            pairs_to_sequences(dataset::read(path)?, true)
        }
    };
    let metric = Metric::for_loss(net.config().loss);
    let value = evaluate(&net, &data, metric)?;
    println!("{metric} {value}");
    Ok(true)
}

pub fn gradcheck(args: GradcheckArgs) -> Result<bool> {
    let reports = gradcheck::run_all(args.seed)?;
    println!("suite,checked,skipped_kinks,max_rel_err,status");
    let mut ok = true;
    for r in &reports {
        let status = if r.passed() { "PASS" } else { "FAIL" };
        ok &= r.passed();
        println!("{},{},{},{:.3e},{status}", r.name, r.checked, r.skipped_kinks, r.max_rel_err);
    }
    let worst = reports.iter().map(|r| r.max_rel_err).fold(0.0, f64::max);
    println!(
        "{} suites, max rel err {worst:.3e} (tolerance {:e}): {}",
        reports.len(),
        gradcheck::TOLERANCE,
        if ok { "PASS" } else { "FAIL" }
    );
    Ok(ok)
}

pub fn backtest(args: BacktestArgs) -> Result<bool> {
    let c = &args.common;
    let file = config::load(c.config.as_deref())?;
    let net = checkpoint::load(&args.checkpoint)?;
    let features = load_features(&args.features)?;
    let sim = apply_market(features.sim, &args.market)?;
    let series = match &args.data {
        Some(dir) => load_split_ticks(dir, "test")?,
        None => {
            let [_, _, test] = trading_config(&file, c, &args.market)?.quotes()?;
            test
        }
    };
    let reports = run_backtest(&net, &features.scaler, &series, &sim, c.seed)?;
    let csv = report_to_csv(&reports);
    ensure_dir(&c.out_dir)?;
    write_text(&c.out_dir.join("backtest.csv"), &csv)?;
    print!("{csv}");
    Ok(true)
}

pub fn ablation(args: AblationArgs) -> Result<bool> {
    let c = &args.common;
    let file = config::load(c.config.as_deref())?;
    let mut cfg = AblationConfig::desk_scale(c.seed);
    if !c.desk_scale {
        cfg.filters = vec![100, 150, 200];
        cfg.n_train = 2000;
        cfg.n_val = 50;
        cfg.seq_len = 5000;
        cfg.train.total_iters = 30_000;
    }
    if let Some(sec) = file.tracking {
        cfg.n_train = sec.n_train;
        cfg.n_val = sec.n_val;
        cfg.seq_len = sec.seq_len;
        cfg.tracking = sec.params;
    }
    if let Some(train) = file.train {
        cfg.train = train;
    }
    cfg.train.seed = c.seed;
    if let Some(sec) = file.network {
        cfg.kernel_len = sec.kernel_len.unwrap_or(cfg.kernel_len);
    }
    cfg.levels = args.levels.unwrap_or(cfg.levels);
    cfg.filters = args.filters.unwrap_or(cfg.filters);
    cfg.kernel_len = args.kernel_len.unwrap_or(cfg.kernel_len);
    cfg.variants = match args.variant {
        VariantArg::Ufcnn => vec![Variant::Ufcnn],
        VariantArg::Fcn => vec![Variant::Fcn],
        VariantArg::Both => vec![Variant::Ufcnn, Variant::Fcn],
    };
    cfg.validate()?;

    let data = cfg.dataset()?;
    let cells = run_ablation(&cfg, &data, |cell| match cell.val_mse {
        Some(v) => eprintln!("{} L={} F={}: val mse {v:.6}", cell.variant, cell.levels, cell.filters),
        None => eprintln!("{} L={} F={}: diverged", cell.variant, cell.levels, cell.filters),
    })?;
    let tables = ablation_tables(&cells);
    ensure_dir(&c.out_dir)?;
    write_text(&c.out_dir.join("ablation.csv"), &ablation_csv(&cells))?;
    write_text(&c.out_dir.join("ablation.txt"), &tables)?;
    print!("{tables}");
    Ok(true)
}
