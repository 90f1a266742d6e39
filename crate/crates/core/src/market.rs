//! Best-quote market simulator, optimal-action labeling, and tick I/O.
//!
//! Each simulator step marks the open position to the volume-weighted market
//! price of the *next* tick, then applies the current action if the position
//! limit allows it. Trades are valued against that next market price and pay
//! a fixed cost.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::SeqTensor;

/// One best-quote observation plus any extra indicator columns.
#[derive(Debug, Clone, PartialEq)]
pub struct Tick {
    pub bidpx: f64,
    pub bidsz: f64,
    pub askpx: f64,
    pub asksz: f64,
    pub indicators: Vec<f64>,
}

impl Tick {
    pub fn new(bidpx: f64, bidsz: f64, askpx: f64, asksz: f64) -> Self {
        Tick {
            bidpx,
            bidsz,
            askpx,
            asksz,
            indicators: Vec::new(),
        }
    }
}

/// Trading decision; the discriminant is the classifier's class index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Action {
    BuyAtBid = 0,
    SellAtBid = 1,
    DoNothing = 2,
    BuyAtAsk = 3,
    SellAtAsk = 4,
}

impl Action {
    pub const ALL: [Action; 5] = [
        Action::BuyAtBid,
        Action::SellAtBid,
        Action::DoNothing,
        Action::BuyAtAsk,
        Action::SellAtAsk,
    ];
    pub const COUNT: usize = 5;

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Action> {
        Action::ALL.get(i).copied()
    }

    /// Position change if the trade is allowed.
    fn delta(self) -> i64 {
        match self {
            Action::BuyAtBid | Action::BuyAtAsk => 1,
            Action::SellAtBid | Action::SellAtAsk => -1,
            Action::DoNothing => 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimParams {
    pub max_position: i64,
    pub cost_per_trade: f64,
}

impl Default for SimParams {
    fn default() -> Self {
        SimParams {
            max_position: 3,
            cost_per_trade: 0.02,
        }
    }
}

impl SimParams {
    pub fn validate(&self) -> Result<()> {
        if self.max_position < 1 {
            return Err(Error::config("max_position must be positive"));
        }
        if !(self.cost_per_trade >= 0.0 && self.cost_per_trade.is_finite()) {
            return Err(Error::config("cost_per_trade must be a nonnegative number"));
        }
        Ok(())
    }
}

/// Volume-weighted market price; the midpoint when both sizes are zero.
pub fn mktpx(tick: &Tick) -> f64 {
    if tick.bidsz + tick.asksz > 0.0 {
        (tick.bidpx * tick.asksz + tick.askpx * tick.bidsz) / (tick.asksz + tick.bidsz)
    } else {
        (tick.bidpx + tick.askpx) / 2.0
    }
}

/// Position after `action` from `position`, with the limit guard applied.
fn apply_guard(position: i64, action: Action, max_position: i64) -> Option<i64> {
    let next = position + action.delta();
    match action.delta() {
        1 if position < max_position => Some(next),
        -1 if position > -max_position => Some(next),
        _ => None,
    }
}

/// Profit of taking `action` at tick `t` given the next market price.
fn trade_pnl(action: Action, tick: &Tick, next_mkt: f64, cost: f64) -> f64 {
    match action {
        Action::BuyAtBid => -(tick.bidpx + cost - next_mkt),
        Action::BuyAtAsk => -(tick.askpx + cost - next_mkt),
        Action::SellAtBid => tick.bidpx - cost - next_mkt,
        Action::SellAtAsk => tick.askpx - cost - next_mkt,
        Action::DoNothing => 0.0,
    }
}

/// Total profit of an action sequence. The last action is never executed and
/// the final position is not liquidated.
pub fn simulate_pnl(ticks: &[Tick], actions: &[Action], params: &SimParams) -> Result<f64> {
    if ticks.is_empty() {
        return Err(Error::data("cannot simulate an empty tick series"));
    }
    if ticks.len() != actions.len() {
        return Err(Error::config(format!(
            "{} actions for {} ticks",
            actions.len(),
            ticks.len()
        )));
    }
    let mut pnl = 0.0;
    let mut position: i64 = 0;
    let mut mkt1 = mktpx(&ticks[0]);
    for t in 0..ticks.len() - 1 {
        let mkt0 = mkt1;
        mkt1 = mktpx(&ticks[t + 1]);
        pnl += position as f64 * (mkt1 - mkt0);
        let action = actions[t];
        // Guarded exactly as the reference loop: disallowed trades are skipped.
        if let Some(next) = apply_guard(position, action, params.max_position) {
            position = next;
            match action {
                Action::BuyAtBid => pnl -= ticks[t].bidpx + params.cost_per_trade - mkt1,
                Action::BuyAtAsk => pnl -= ticks[t].askpx + params.cost_per_trade - mkt1,
                Action::SellAtBid => pnl += ticks[t].bidpx - params.cost_per_trade - mkt1,
                Action::SellAtAsk => pnl += ticks[t].askpx - params.cost_per_trade - mkt1,
                Action::DoNothing => {}
            }
        }
    }
    Ok(pnl)
}

/// Profit-maximizing actions with full knowledge of the series, found by
/// dynamic programming over the position states `-max..=max`.
///
/// Ties prefer `DoNothing`, then the smaller resulting `|position|`, then the
/// lower class index. The returned profit is the simulator's value for the
/// returned path, so replaying it reproduces the number exactly.
pub fn optimal_actions(ticks: &[Tick], params: &SimParams) -> Result<(Vec<Action>, f64)> {
    params.validate()?;
    if ticks.is_empty() {
        return Err(Error::data("cannot label an empty tick series"));
    }
    let t_len = ticks.len();
    let m = params.max_position;
    let n_states = (2 * m + 1) as usize;
    let idx = |p: i64| (p + m) as usize;
    let mkt: Vec<f64> = ticks.iter().map(mktpx).collect();

    // value[t][s]: best profit from steps t.. onwards holding position s before step t.
    let mut value = vec![vec![0.0; n_states]; t_len];
    for t in (0..t_len - 1).rev() {
        let (head, tail) = value.split_at_mut(t + 1);
        let (cur, next) = (&mut head[t], &tail[0]);
        for p in -m..=m {
            let mtm = p as f64 * (mkt[t + 1] - mkt[t]);
            let best = Action::ALL
                .iter()
                .filter_map(|&a| {
                    let to = if a == Action::DoNothing {
                        p
                    } else {
                        apply_guard(p, a, m)?
                    };
                    Some(trade_pnl(a, &ticks[t], mkt[t + 1], params.cost_per_trade) + next[idx(to)])
                })
                .fold(f64::NEG_INFINITY, f64::max);
            cur[idx(p)] = mtm + best;
        }
    }

    let mut actions = Vec::with_capacity(t_len);
    let mut p: i64 = 0;
    for t in 0..t_len - 1 {
        let mut choice = (Action::DoNothing, p, value[t + 1][idx(p)]);
        for &a in &Action::ALL {
            if a == Action::DoNothing {
                continue;
            }
            let Some(to) = apply_guard(p, a, m) else {
                continue;
            };
            let q = trade_pnl(a, &ticks[t], mkt[t + 1], params.cost_per_trade) + value[t + 1][idx(to)];
            let better = q > choice.2 || (q == choice.2 && choice.0 != Action::DoNothing && to.abs() < choice.1.abs());
            if better {
                choice = (a, to, q);
            }
        }
        actions.push(choice.0);
        p = choice.1;
    }
    actions.push(Action::DoNothing);
    let pnl = simulate_pnl(ticks, &actions, params)?;
    Ok((actions, pnl))
}

/// I.i.d. uniformly random actions.
pub fn uniform_strategy(len: usize, seed: u64) -> Vec<Action> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..len)
        .map(|_| Action::ALL[rng.gen_range(0..Action::COUNT)])
        .collect()
}

/// Synthetic quotes: the mid-price performs a Gaussian random walk from 100
/// with step deviation `vol`; quotes sit `spread / 2` either side; sizes are
/// uniform on `[1, 10]`.
pub fn synth_quotes(len: usize, seed: u64, vol: f64, spread: f64) -> Result<Vec<Tick>> {
    if len == 0 {
        return Err(Error::config("need at least one tick"));
    }
    if !(vol >= 0.0 && spread >= 0.0) {
        return Err(Error::config("vol and spread must be nonnegative"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let step = Normal::new(0.0, vol).map_err(|e| Error::config(e.to_string()))?;
    let mut mid = 100.0;
    let mut ticks = Vec::with_capacity(len);
    for t in 0..len {
        if t > 0 {
            mid += step.sample(&mut rng);
        }
        let bidsz = rng.gen_range(1.0..=10.0);
        let asksz = rng.gen_range(1.0..=10.0);
        ticks.push(Tick::new(mid - spread / 2.0, bidsz, mid + spread / 2.0, asksz));
    }
    Ok(ticks)
}

/// A tick file: series plus the names of any indicator columns.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TickSeries {
    pub indicator_names: Vec<String>,
    pub ticks: Vec<Tick>,
}

const TICK_COLUMNS: [&str; 4] = ["bidpx", "bidsz", "askpx", "asksz"];

fn tick_header(indicators: &[String], with_action: bool) -> String {
    let mut cols: Vec<&str> = TICK_COLUMNS.to_vec();
    cols.extend(indicators.iter().map(String::as_str));
    if with_action {
        cols.push("action");
    }
    cols.join(",")
}

fn tick_row(out: &mut String, tick: &Tick) {
    let _ = write!(out, "{},{},{},{}", tick.bidpx, tick.bidsz, tick.askpx, tick.asksz);
    for v in &tick.indicators {
        let _ = write!(out, ",{v}");
    }
}

pub fn ticks_to_csv(series: &TickSeries) -> String {
    let mut out = tick_header(&series.indicator_names, false);
    out.push('\n');
    for tick in &series.ticks {
        tick_row(&mut out, tick);
        out.push('\n');
    }
    out
}

pub fn labeled_to_csv(series: &TickSeries, actions: &[Action]) -> Result<String> {
    if actions.len() != series.ticks.len() {
        return Err(Error::config("one action per tick required"));
    }
    let mut out = tick_header(&series.indicator_names, true);
    out.push('\n');
    for (tick, a) in series.ticks.iter().zip(actions) {
        tick_row(&mut out, tick);
        let _ = writeln!(out, ",{}", a.index());
    }
    Ok(out)
}

pub fn write_ticks(path: impl AsRef<Path>, series: &TickSeries) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, ticks_to_csv(series)).map_err(|e| Error::io(path, e))
}

pub fn write_labeled(path: impl AsRef<Path>, series: &TickSeries, actions: &[Action]) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, labeled_to_csv(series, actions)?).map_err(|e| Error::io(path, e))
}

pub fn load_ticks(path: impl AsRef<Path>) -> Result<TickSeries> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_ticks(&text, path, false).map(|(s, _)| s)
}

pub fn load_labeled(path: impl AsRef<Path>) -> Result<(TickSeries, Vec<Action>)> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_ticks(&text, path, true)
}

/// Parses tick CSV text; `labeled` expects a trailing `action` column.
pub fn parse_ticks(text: &str, path: &Path, labeled: bool) -> Result<(TickSeries, Vec<Action>)> {
    let err = |line: usize, msg: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        msg,
    };
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let Some((hline, header)) = lines.next() else {
        return Err(Error::data(format!("{} is empty", path.display())));
    };
    let mut cols: Vec<String> = header.split(',').map(|c| c.trim().to_string()).collect();
    if cols.len() < 4 || cols[..4] != TICK_COLUMNS {
        return Err(err(hline + 1, format!("header must start with {}", TICK_COLUMNS.join(","))));
    }
    if labeled && cols.last().map(String::as_str) != Some("action") {
        return Err(err(hline + 1, "labeled file must end with an `action` column".into()));
    }
    if labeled {
        cols.pop();
    }
    let indicator_names = cols.split_off(4);
    let width = 4 + indicator_names.len() + usize::from(labeled);

    let mut ticks = Vec::new();
    let mut actions = Vec::new();
    for (i, line) in lines {
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != width {
            return Err(err(i + 1, format!("expected {width} fields, got {}", fields.len())));
        }
        let num_fields = if labeled { &fields[..width - 1] } else { &fields[..] };
        let values: Vec<f64> = num_fields
            .iter()
            .map(|f| f.parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| err(i + 1, e.to_string()))?;
        if values.iter().any(|v| !v.is_finite()) {
            return Err(err(i + 1, "non-finite value".into()));
        }
        if values[1] < 0.0 || values[3] < 0.0 {
            return Err(err(i + 1, "negative quote size".into()));
        }
        if labeled {
            let a = fields[width - 1]
                .parse::<usize>()
                .ok()
                .and_then(Action::from_index)
                .ok_or_else(|| err(i + 1, format!("invalid action `{}`", fields[width - 1])))?;
            actions.push(a);
        }
        ticks.push(Tick {
            bidpx: values[0],
            bidsz: values[1],
            askpx: values[2],
            asksz: values[3],
            indicators: values[4..].to_vec(),
        });
    }
    if ticks.is_empty() {
        return Err(Error::data(format!("{} has no tick rows", path.display())));
    }
    Ok((
        TickSeries {
            indicator_names,
            ticks,
        },
        actions,
    ))
}

/// Per-channel affine normalization of tick features, fitted on training
/// series. Channels: bidpx, bidsz, askpx, asksz, then indicators.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureScaler {
    pub mean: Vec<f64>,
    /// Per-channel standard deviations, when scaling is enabled.
    pub std: Option<Vec<f64>>,
}

fn tick_features(tick: &Tick) -> impl Iterator<Item = f64> + '_ {
    [tick.bidpx, tick.bidsz, tick.askpx, tick.asksz]
        .into_iter()
        .chain(tick.indicators.iter().copied())
}

impl FeatureScaler {
    pub fn fit(series: &[&[Tick]], scale_std: bool) -> Result<Self> {
        let first = series
            .iter()
            .find_map(|s| s.first())
            .ok_or_else(|| Error::data("no ticks to fit features on"))?;
        let channels = 4 + first.indicators.len();
        let mut sum = vec![0.0; channels];
        let mut n = 0usize;
        for tick in series.iter().flat_map(|s| s.iter()) {
            if tick.indicators.len() + 4 != channels {
                return Err(Error::data("inconsistent indicator count across ticks"));
            }
            for (s, v) in sum.iter_mut().zip(tick_features(tick)) {
                *s += v;
            }
            n += 1;
        }
        let mean: Vec<f64> = sum.iter().map(|s| s / n as f64).collect();
        let std = if scale_std {
            let mut sq = vec![0.0; channels];
            for tick in series.iter().flat_map(|s| s.iter()) {
                for ((q, v), m) in sq.iter_mut().zip(tick_features(tick)).zip(&mean) {
                    *q += (v - m) * (v - m);
                }
            }
            Some(
                sq.iter()
                    .map(|q| {
                        let s = (q / n as f64).sqrt();
                        if s > 0.0 {
                            s
                        } else {
                            1.0
                        }
                    })
                    .collect(),
            )
        } else {
            None
        };
        Ok(FeatureScaler { mean, std })
    }

    pub fn channels(&self) -> usize {
        self.mean.len()
    }

    /// `channels x T` normalized feature tensor.
    pub fn transform(&self, ticks: &[Tick]) -> Result<SeqTensor> {
        let c = self.channels();
        let len = ticks.len();
        let mut out = SeqTensor::zeros(c, len.max(1));
        if len == 0 {
            return Err(Error::data("no ticks to transform"));
        }
        for (t, tick) in ticks.iter().enumerate() {
            if tick.indicators.len() + 4 != c {
                return Err(Error::data("indicator count differs from the fitted scaler"));
            }
            for (ch, v) in tick_features(tick).enumerate() {
                let mut z = v - self.mean[ch];
                if let Some(std) = &self.std {
                    z /= std[ch];
                }
                out[(ch, t)] = z;
            }
        }
        Ok(out)
    }
}

/// One line of a strategy comparison.
#[derive(Debug, Clone, PartialEq)]
pub struct StrategyReport {
    pub strategy: String,
    pub profit_per_step: f64,
    pub accuracy: f64,
}

pub const REPORT_HEADER: &str = "strategy,profit_per_step,accuracy";

pub fn report_to_csv(rows: &[StrategyReport]) -> String {
    let mut out = String::from(REPORT_HEADER);
    out.push('\n');
    for r in rows {
        let _ = writeln!(out, "{},{},{}", r.strategy, r.profit_per_step, r.accuracy);
    }
    out
}

pub fn parse_report(text: &str) -> Result<Vec<StrategyReport>> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    if lines.next().map(str::trim) != Some(REPORT_HEADER) {
        return Err(Error::data(format!("report must start with `{REPORT_HEADER}`")));
    }
    lines
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            let [name, profit, acc] = f[..] else {
                return Err(Error::data(format!("bad report row `{l}`")));
            };
            let num = |s: &str| s.trim().parse::<f64>().map_err(|e| Error::data(e.to_string()));
            Ok(StrategyReport {
                strategy: name.to_string(),
                profit_per_step: num(profit)?,
                accuracy: num(acc)?,
            })
        })
        .collect()
}

/// Fraction of steps on which `predicted` equals `labels`.
pub fn action_accuracy(predicted: &[Action], labels: &[Action]) -> f64 {
    let hits = predicted.iter().zip(labels).filter(|(a, b)| a == b).count();
    hits as f64 / labels.len().max(1) as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    fn flat(px: f64, len: usize) -> Vec<Tick> {
        vec![Tick::new(px, 1.0, px, 1.0); len]
    }

    /// Maximum simulated profit over every action sequence (last action is
    /// irrelevant and fixed to DoNothing).
    fn brute_force(ticks: &[Tick], params: &SimParams) -> f64 {
        let steps = ticks.len() - 1;
        let mut best = f64::NEG_INFINITY;
        let mut actions = vec![Action::DoNothing; ticks.len()];
        for code in 0..5usize.pow(steps as u32) {
            let mut c = code;
            for a in actions.iter_mut().take(steps) {
                *a = Action::ALL[c % 5];
                c /= 5;
            }
            best = best.max(simulate_pnl(ticks, &actions, params).unwrap());
        }
        best
    }

    #[test]
    fn market_price() {
        assert_eq!(mktpx(&Tick::new(10.0, 1.0, 12.0, 3.0)), 10.5);
        assert_eq!(mktpx(&Tick::new(10.0, 0.0, 12.0, 0.0)), 11.0);
        assert_eq!(mktpx(&Tick::new(10.0, 4.0, 12.0, 4.0)), 11.0);
    }

    #[test]
    fn do_nothing_earns_nothing() {
        let ticks = synth_quotes(50, 1, 0.3, 0.1).unwrap();
        let pnl = simulate_pnl(&ticks, &[Action::DoNothing; 50], &SimParams::default()).unwrap();
        assert_eq!(pnl, 0.0);
    }

    #[test]
    fn single_buy_at_bid_trace() {
        let ticks = vec![Tick::new(10.0, 1.0, 10.0, 1.0), Tick::new(12.0, 1.0, 12.0, 1.0)];
        let pnl = simulate_pnl(&ticks, &[Action::BuyAtBid, Action::DoNothing], &SimParams::default())
            .unwrap();
        assert!((pnl - 1.98).abs() < 1e-12);
    }

    #[test]
    fn position_limit_caps_fills() {
        let ticks = flat(50.0, 10);
        let pnl = simulate_pnl(&ticks, &[Action::BuyAtAsk; 10], &SimParams::default()).unwrap();
        assert!((pnl + 0.06).abs() < 1e-12);
        let pnl4 = simulate_pnl(&ticks[..4], &[Action::BuyAtAsk; 4], &SimParams::default()).unwrap();
        assert!((pnl4 + 0.06).abs() < 1e-12);
    }

    #[test]
    fn length_mismatch() {
        let ticks = flat(1.0, 3);
        assert!(matches!(
            simulate_pnl(&ticks, &[Action::DoNothing; 2], &SimParams::default()),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn constant_zero_spread_prices_are_left_alone() {
        let (actions, pnl) = optimal_actions(&flat(7.0, 20), &SimParams::default()).unwrap();
        assert!(actions.iter().all(|&a| a == Action::DoNothing));
        assert_eq!(pnl, 0.0);
    }

    #[test]
    fn rising_prices_buy_immediately() {
        let ticks: Vec<Tick> = (0..6).map(|t| Tick::new(10.0 + t as f64, 1.0, 10.0 + t as f64, 1.0)).collect();
        let params = SimParams {
            max_position: 3,
            cost_per_trade: 0.0,
        };
        let (actions, pnl) = optimal_actions(&ticks, &params).unwrap();
        assert!(actions[..3].iter().all(|a| matches!(a, Action::BuyAtBid | Action::BuyAtAsk)));
        assert_eq!(pnl, brute_force(&ticks, &params));
    }

    #[test]
    fn matches_exhaustive_search() {
        let params = SimParams::default();
        for seed in 0..40 {
            let ticks = synth_quotes(6, seed, 0.05, 0.04).unwrap();
            let (actions, pnl) = optimal_actions(&ticks, &params).unwrap();
            let bf = brute_force(&ticks, &params);
            assert!((pnl - bf).abs() <= 1e-9, "seed {seed}: dp {pnl} vs brute {bf}");
            assert_eq!(simulate_pnl(&ticks, &actions, &params).unwrap(), pnl);
            assert_eq!(*actions.last().unwrap(), Action::DoNothing);
        }
    }

    #[test]
    fn upper_bound_drops_with_cost() {
        let ticks = synth_quotes(2000, 5, 0.05, 0.1).unwrap();
        let mut last = f64::INFINITY;
        for cost in [0.0, 0.02, 0.1, 1.0] {
            let params = SimParams {
                cost_per_trade: cost,
                ..SimParams::default()
            };
            let (_, pnl) = optimal_actions(&ticks, &params).unwrap();
            assert!(pnl <= last + 1e-9);
            last = pnl;
        }
    }

    #[test]
    fn uniform_frequencies() {
        let actions = uniform_strategy(10_000, 3);
        for a in Action::ALL {
            let f = actions.iter().filter(|&&b| b == a).count() as f64 / 1e4;
            assert!((f - 0.2).abs() < 0.02, "{a:?}: {f}");
        }
        assert_eq!(actions, uniform_strategy(10_000, 3));
    }

    #[test]
    fn synthetic_quotes_contract() {
        let still = synth_quotes(100, 1, 0.0, 0.2).unwrap();
        assert!(still.iter().all(|t| t.bidpx == still[0].bidpx && t.askpx == still[0].askpx));
        let q = synth_quotes(500, 2, 0.1, 0.3).unwrap();
        assert!(q.iter().all(|t| ((t.askpx - t.bidpx) - 0.3).abs() < 1e-12));
        assert!(q.iter().all(|t| (1.0..=10.0).contains(&t.bidsz) && (1.0..=10.0).contains(&t.asksz)));
        assert_eq!(q, synth_quotes(500, 2, 0.1, 0.3).unwrap());
    }

    #[test]
    fn tick_csv_round_trip_with_indicators() {
        let mut ticks = synth_quotes(20, 4, 0.1, 0.2).unwrap();
        let plain = TickSeries {
            indicator_names: vec![],
            ticks: ticks.clone(),
        };
        let back = parse_ticks(&ticks_to_csv(&plain), Path::new("m"), false).unwrap().0;
        assert_eq!(back, plain);

        for (i, t) in ticks.iter_mut().enumerate() {
            t.indicators = vec![i as f64, -0.5];
        }
        let rich = TickSeries {
            indicator_names: vec!["ind1".into(), "ind2".into()],
            ticks,
        };
        let back = parse_ticks(&ticks_to_csv(&rich), Path::new("m"), false).unwrap().0;
        assert_eq!(back.indicator_names.len(), 2);
        assert_eq!(back, rich);

        let actions = uniform_strategy(20, 1);
        let text = labeled_to_csv(&rich, &actions).unwrap();
        let (s, a) = parse_ticks(&text, Path::new("m"), true).unwrap();
        assert_eq!((s, a), (rich, actions));
    }

    #[test]
    fn tick_csv_errors() {
        let p = Path::new("t.csv");
        assert!(matches!(parse_ticks("", p, false), Err(Error::Data(_))));
        assert!(matches!(parse_ticks("bidpx,bidsz,askpx\n1,1,1\n", p, false), Err(Error::Parse { line: 1, .. })));
        assert!(matches!(
            parse_ticks("bidpx,askpx,bidsz,asksz\n1,1,1,1\n", p, false),
            Err(Error::Parse { line: 1, .. })
        ));
        match parse_ticks("bidpx,bidsz,askpx,asksz\n1,1,2,1\n1,oops,2,1\n", p, false) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
        assert!(matches!(parse_ticks("bidpx,bidsz,askpx,asksz\n", p, false), Err(Error::Data(_))));
    }

    #[test]
    fn scaler_centers_training_features() {
        let a = synth_quotes(300, 1, 0.1, 0.2).unwrap();
        let b = synth_quotes(300, 2, 0.1, 0.2).unwrap();
        let scaler = FeatureScaler::fit(&[&a, &b], true).unwrap();
        let fa = scaler.transform(&a).unwrap();
        let fb = scaler.transform(&b).unwrap();
        for c in 0..4 {
            let m = (fa.row(c).iter().sum::<f64>() + fb.row(c).iter().sum::<f64>()) / 600.0;
            assert!(m.abs() < 1e-9, "channel {c}: {m}");
        }
    }

    #[test]
    fn report_round_trip() {
        let rows = vec![
            StrategyReport { strategy: "viterbi".into(), profit_per_step: 0.31, accuracy: 1.0 },
            StrategyReport { strategy: "uniform".into(), profit_per_step: -0.01, accuracy: 0.2 },
        ];
        assert_eq!(parse_report(&report_to_csv(&rows)).unwrap(), rows);
    }
}
