//! Mini-batch RMSProp training, evaluation metrics and metric history.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::net::Network;
use crate::tensor::{loss_eval, LossKind, SeqTensor, Target};

/// One supervised example: an input signal and its per-step targets.
#[derive(Debug, Clone, PartialEq)]
pub struct Sequence {
    pub input: SeqTensor,
    pub target: Target,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub base_lr: f64,
    /// Iteration at which the learning rate is halved; defaults to half of
    /// `total_iters`.
    pub lr_halve_at: Option<usize>,
    pub total_iters: usize,
    pub rms_rho: f64,
    pub rms_eps: f64,
    /// Whole sequences per iteration, sampled with replacement.
    pub batch_size: usize,
    pub eval_every: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            base_lr: 1e-3,
            lr_halve_at: None,
            total_iters: 30_000,
            rms_rho: 0.9,
            rms_eps: 1e-6,
            batch_size: 4,
            eval_every: 250,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.base_lr > 0.0 && self.base_lr.is_finite()) {
            return Err(Error::config("base_lr must be positive"));
        }
        if !(self.rms_rho > 0.0 && self.rms_rho < 1.0) {
            return Err(Error::config("rms_rho must lie in (0, 1)"));
        }
        if self.rms_eps < 0.0 {
            return Err(Error::config("rms_eps must be nonnegative"));
        }
        if self.batch_size == 0 || self.eval_every == 0 {
            return Err(Error::config("batch_size and eval_every must be positive"));
        }
        Ok(())
    }

    pub fn halve_at(&self) -> usize {
        self.lr_halve_at.unwrap_or(self.total_iters / 2)
    }

    /// Learning rate used at 0-based iteration `iter`.
    pub fn lr_at(&self, iter: usize) -> f64 {
        if iter >= self.halve_at() {
            self.base_lr / 2.0
        } else {
            self.base_lr
        }
    }
}

/// `cache <- rho cache + (1 - rho) g^2;  param <- param - lr g / sqrt(cache + eps)`
pub fn rmsprop_step(params: &mut [f64], grads: &[f64], cache: &mut [f64], lr: f64, rho: f64, eps: f64) {
    debug_assert!(params.len() == grads.len() && grads.len() == cache.len());
    for ((p, &g), c) in params.iter_mut().zip(grads).zip(cache.iter_mut()) {
        *c = rho * *c + (1.0 - rho) * g * g;
        *p -= lr * g / (*c + eps).sqrt();
    }
}

/// Running mean of squared gradients, one buffer per parameter group.
#[derive(Debug, Clone, PartialEq)]
pub struct RmsState {
    caches: Vec<Vec<f64>>,
}

impl RmsState {
    pub fn new(net: &Network) -> Self {
        let caches = net
            .layers()
            .iter()
            .flat_map(|l| [vec![0.0; l.weights.len()], vec![0.0; l.bias.len()]])
            .collect();
        RmsState { caches }
    }

    pub fn caches(&self) -> &[Vec<f64>] {
        &self.caches
    }

    /// Applies one update using the gradients currently held by `net`.
    pub fn step(&mut self, net: &mut Network, lr: f64, rho: f64, eps: f64) {
        let mut caches = self.caches.iter_mut();
        for layer in net.layers_mut() {
            for (params, grads) in layer.param_groups_mut() {
                let cache = caches.next().expect("state built from the same network");
                rmsprop_step(params, grads, cache, lr, rho, eps);
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    MsePerStep,
    LoglikPerStep,
    Accuracy,
}

impl Metric {
    /// The metric reported for networks trained with `loss`.
    pub fn for_loss(loss: LossKind) -> Metric {
        match loss {
            LossKind::SquaredError => Metric::MsePerStep,
            LossKind::SigmoidCrossEntropy => Metric::LoglikPerStep,
            LossKind::SoftmaxCrossEntropy => Metric::Accuracy,
        }
    }

    pub fn higher_is_better(self) -> bool {
        !matches!(self, Metric::MsePerStep)
    }

    fn compatible_with(self, loss: LossKind) -> bool {
        Metric::for_loss(loss) == self
    }
}

impl std::fmt::Display for Metric {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Metric::MsePerStep => "mse_per_step",
            Metric::LoglikPerStep => "loglik_per_step",
            Metric::Accuracy => "accuracy",
        })
    }
}

/// Per-step metric of one prediction against its target.
pub fn sequence_metric(metric: Metric, y: &SeqTensor, target: &Target) -> Result<f64> {
    match (metric, target) {
        (Metric::MsePerStep, Target::Real(_)) => Ok(loss_eval(LossKind::SquaredError, y, target)?.0),
        (Metric::LoglikPerStep, Target::Binary(_)) => {
            Ok(-loss_eval(LossKind::SigmoidCrossEntropy, y, target)?.0)
        }
        (Metric::Accuracy, Target::Classes(classes)) => {
            if classes.len() != y.len() {
                return Err(Error::config("label count differs from signal length"));
            }
            let hits = classes
                .iter()
                .enumerate()
                .filter(|&(t, &cls)| argmax_at(y, t) == cls)
                .count();
            Ok(hits as f64 / y.len() as f64)
        }
        _ => Err(Error::config(format!("metric {metric} does not fit this target"))),
    }
}

/// Index of the largest channel at step `t`; ties go to the lowest index.
pub fn argmax_at(y: &SeqTensor, t: usize) -> usize {
    let mut best = 0;
    for c in 1..y.channels() {
        if y[(c, t)] > y[(best, t)] {
            best = c;
        }
    }
    best
}

/// Mean over sequences of each sequence's per-step metric.
pub fn evaluate(net: &Network, data: &[Sequence], metric: Metric) -> Result<f64> {
    if !metric.compatible_with(net.config().loss) {
        return Err(Error::config(format!(
            "metric {metric} is not defined for a network trained with {:?}",
            net.config().loss
        )));
    }
    if data.is_empty() {
        return Err(Error::data("cannot evaluate on an empty dataset"));
    }
    let mut total = 0.0;
    for seq in data {
        let y = net.infer(&seq.input)?;
        total += sequence_metric(metric, &y, &seq.target)?;
    }
    Ok(total / data.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HistoryRow {
    pub iteration: usize,
    /// Mean mini-batch loss since the previous row.
    pub train_loss: f64,
    pub val_metric: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Network at the best validation metric (the initial one if no
    /// evaluation happened).
    pub net: Network,
    pub history: Vec<HistoryRow>,
    pub best: Option<HistoryRow>,
}

pub fn train(net: Network, train_set: &[Sequence], val_set: &[Sequence], cfg: &TrainConfig) -> Result<TrainOutcome> {
    train_with(net, train_set, val_set, cfg, |_| {})
}

/// Like [`train`], calling `on_eval` after every validation pass.
pub fn train_with<F>(
    mut net: Network,
    train_set: &[Sequence],
    val_set: &[Sequence],
    cfg: &TrainConfig,
    mut on_eval: F,
) -> Result<TrainOutcome>
where
    F: FnMut(&HistoryRow),
{
    cfg.validate()?;
    if cfg.total_iters == 0 {
        return Ok(TrainOutcome {
            net,
            history: Vec::new(),
            best: None,
        });
    }
    if train_set.is_empty() || val_set.is_empty() {
        return Err(Error::data("training and validation sets must be non-empty"));
    }
    let loss_kind = net.config().loss;
    let metric = Metric::for_loss(loss_kind);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut state = RmsState::new(&net);
    let mut history = Vec::new();
    let mut best: Option<(HistoryRow, Network)> = None;
    let (mut loss_acc, mut loss_count) = (0.0, 0usize);
    let batch_scale = 1.0 / cfg.batch_size as f64;

    for iter in 0..cfg.total_iters {
        net.zero_grad();
        let mut batch_loss = 0.0;
        for _ in 0..cfg.batch_size {
            let seq = &train_set[rng.gen_range(0..train_set.len())];
            let y = net.forward(&seq.input)?;
            let (loss, mut dy) = loss_eval(loss_kind, &y, &seq.target)?;
            if !loss.is_finite() {
                return Err(Error::Divergence {
                    iteration: iter,
                    loss,
                });
            }
            dy.scale(batch_scale);
            net.backward(&dy)?;
            batch_loss += loss * batch_scale;
        }
        state.step(&mut net, cfg.lr_at(iter), cfg.rms_rho, cfg.rms_eps);
        loss_acc += batch_loss;
        loss_count += 1;

        let done = iter + 1;
        if done % cfg.eval_every == 0 || done == cfg.total_iters {
            let val_metric = evaluate(&net, val_set, metric)?;
            if !val_metric.is_finite() {
                return Err(Error::Divergence {
                    iteration: iter,
                    loss: val_metric,
                });
            }
            let row = HistoryRow {
                iteration: done,
                train_loss: loss_acc / loss_count as f64,
                val_metric,
            };
            (loss_acc, loss_count) = (0.0, 0);
            on_eval(&row);
            history.push(row);
            let improved = match &best {
                None => true,
                Some((b, _)) if metric.higher_is_better() => val_metric > b.val_metric,
                Some((b, _)) => val_metric < b.val_metric,
            };
            if improved {
                let mut snapshot = net.clone();
                snapshot.clear_cache();
                best = Some((row, snapshot));
            }
        }
    }

    let (best_row, best_net) = best.expect("at least one evaluation when total_iters > 0");
    Ok(TrainOutcome {
        net: best_net,
        history,
        best: Some(best_row),
    })
}

pub const HISTORY_HEADER: &str = "iteration,train_loss,val_metric";

pub fn history_to_csv(rows: &[HistoryRow]) -> String {
    let mut out = String::from(HISTORY_HEADER);
    out.push('\n');
    for r in rows {
        let _ = writeln!(out, "{},{},{}", r.iteration, r.train_loss, r.val_metric);
    }
    out
}

pub fn write_history_csv(path: impl AsRef<Path>, rows: &[HistoryRow]) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, history_to_csv(rows)).map_err(|e| Error::io(path, e))
}

pub fn read_history_csv(path: impl AsRef<Path>) -> Result<Vec<HistoryRow>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let parse_err = |line: usize, msg: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        msg,
    };
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim() == HISTORY_HEADER => {}
        _ => return Err(parse_err(1, format!("expected header `{HISTORY_HEADER}`"))),
    }
    let mut rows = Vec::new();
    for (i, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 3 {
            return Err(parse_err(i + 1, "expected 3 fields".into()));
        }
        let num = |s: &str| s.trim().parse::<f64>().map_err(|e| parse_err(i + 1, e.to_string()));
        rows.push(HistoryRow {
            iteration: fields[0]
                .trim()
                .parse()
                .map_err(|e: std::num::ParseIntError| parse_err(i + 1, e.to_string()))?,
            train_loss: num(fields[1])?,
            val_metric: num(fields[2])?,
        });
    }
    Ok(rows)
}
