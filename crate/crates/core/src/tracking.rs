//! Bearing-only tracking data: a target bouncing inside a square arena,
//! observed through the noisy polar angle of its position.
//!
//! State `z = (x, x_dot, y, y_dot)` evolves as `z' = A g(z) + w` where `g`
//! reflects a velocity component whenever the target touches a wall band,
//! `A` adds velocity to position, and `w` perturbs positions only. The
//! observation is `atan2(y, x) + nu`.

use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::dataset::{self, SequencePair};
use crate::error::{Error, Result};
use crate::tensor::{SeqTensor, Target};
use crate::train::Sequence;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrackingParams {
    /// Half the side length of the arena (`D`).
    pub half_side: f64,
    /// Target radius (`delta`); walls act at `|coordinate| >= D - delta`.
    pub radius: f64,
    /// Process-noise variance scale; each position component gets variance
    /// `0.5 * sigma_w`.
    pub sigma_w: f64,
    /// Observation-noise variance.
    pub sigma_nu: f64,
    /// Initial per-axis speed is drawn uniformly from `[min_speed, max_speed]`
    /// with a random sign.
    pub min_speed: f64,
    pub max_speed: f64,
}

impl Default for TrackingParams {
    fn default() -> Self {
        TrackingParams {
            half_side: 10.0,
            radius: 0.3,
            sigma_w: 0.005,
            sigma_nu: 0.005,
            min_speed: 0.05,
            max_speed: 0.1,
        }
    }
}

impl TrackingParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.half_side > self.radius && self.radius > 0.0) {
            return Err(Error::config("tracking params need D > delta > 0"));
        }
        if self.sigma_w < 0.0 || self.sigma_nu < 0.0 {
            return Err(Error::config("noise variances must be nonnegative"));
        }
        if !(0.0 < self.min_speed && self.min_speed <= self.max_speed) {
            return Err(Error::config("need 0 < min_speed <= max_speed"));
        }
        Ok(())
    }

    fn wall(&self) -> f64 {
        self.half_side - self.radius
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrackingState {
    pub x: f64,
    pub x_dot: f64,
    pub y: f64,
    pub y_dot: f64,
}

fn reflect(pos: f64, vel: f64, wall: f64) -> f64 {
    if pos >= wall {
        -vel.abs()
    } else if pos <= -wall {
        vel.abs()
    } else {
        vel
    }
}

/// Points each velocity component away from any wall band its coordinate is in.
pub fn bounce(z: TrackingState, params: &TrackingParams) -> TrackingState {
    let wall = params.wall();
    TrackingState {
        x_dot: reflect(z.x, z.x_dot, wall),
        y_dot: reflect(z.y, z.y_dot, wall),
        ..z
    }
}

/// One transition `A g(z) + w`.
pub fn step_state<R: Rng + ?Sized>(z: TrackingState, params: &TrackingParams, rng: &mut R) -> TrackingState {
    let b = bounce(z, params);
    let (wx, wy) = if params.sigma_w > 0.0 {
        let n = Normal::new(0.0, (0.5 * params.sigma_w).sqrt()).expect("finite std");
        (n.sample(rng), n.sample(rng))
    } else {
        (0.0, 0.0)
    };
    TrackingState {
        x: b.x + b.x_dot + wx,
        x_dot: b.x_dot,
        y: b.y + b.y_dot + wy,
        y_dot: b.y_dot,
    }
}

/// Noisy full-quadrant bearing of the target, noise-free part in `(-pi, pi]`.
pub fn observe<R: Rng + ?Sized>(z: TrackingState, params: &TrackingParams, rng: &mut R) -> Result<f64> {
    if z.x == 0.0 && z.y == 0.0 {
        return Err(Error::Domain("bearing undefined at the origin".into()));
    }
    let mut theta = z.y.atan2(z.x);
    if theta == -std::f64::consts::PI {
        theta = std::f64::consts::PI;
    }
    let noise = if params.sigma_nu > 0.0 {
        Normal::new(0.0, params.sigma_nu.sqrt())
            .expect("finite std")
            .sample(rng)
    } else {
        0.0
    };
    Ok(theta + noise)
}

/// Initial state: position uniform on the central half of the arena,
/// per-axis speed in `[min_speed, max_speed]` with random sign.
pub fn initial_state<R: Rng + ?Sized>(params: &TrackingParams, rng: &mut R) -> TrackingState {
    let h = params.half_side / 2.0;
    let vel = |rng: &mut R| {
        let speed = if params.max_speed > params.min_speed {
            rng.gen_range(params.min_speed..=params.max_speed)
        } else {
            params.min_speed
        };
        if rng.gen::<bool>() {
            speed
        } else {
            -speed
        }
    };
    let x = rng.gen_range(-h..=h);
    let y = rng.gen_range(-h..=h);
    let x_dot = vel(rng);
    let y_dot = vel(rng);
    TrackingState { x, x_dot, y, y_dot }
}

/// A simulated sequence: states `z_1..z_T` and their raw bearings.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub states: Vec<TrackingState>,
    pub bearings: Vec<f64>,
}

pub fn simulate(params: &TrackingParams, len: usize, seed: u64) -> Result<Trajectory> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut z = initial_state(params, &mut rng);
    let mut states = Vec::with_capacity(len);
    let mut bearings = Vec::with_capacity(len);
    for _ in 0..len {
        z = step_state(z, params, &mut rng);
        bearings.push(observe(z, params, &mut rng)?);
        states.push(z);
    }
    Ok(Trajectory { states, bearings })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Val, Split::Test];

    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

/// Seed of sequence `index` in `split`, derived from the dataset seed.
pub fn sequence_seed(seed: u64, split: Split, index: usize) -> u64 {
    // splitmix64 finalizer over a packed key
    let mut z = seed
        .wrapping_add((split as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add((index as u64).wrapping_mul(0xD1B5_4A32_D192_ED03));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrackingMeta {
    pub format: String,
    /// Training-set bearing mean, already subtracted from every stored input.
    pub input_mean: f64,
    pub seq_len: usize,
    pub counts: [usize; 3],
    pub seed: u64,
    pub params: TrackingParams,
}

/// Generated splits. Inputs are `1 x T` mean-subtracted bearings; targets are
/// raw `2 x T` positions.
#[derive(Debug, Clone)]
pub struct TrackingDataset {
    pub train: Vec<SequencePair>,
    pub val: Vec<SequencePair>,
    pub test: Vec<SequencePair>,
    pub input_mean: f64,
    pub seq_len: usize,
    pub seed: u64,
    pub params: TrackingParams,
}

pub fn generate_dataset(
    params: &TrackingParams,
    n_train: usize,
    n_val: usize,
    n_test: usize,
    seq_len: usize,
    seed: u64,
) -> Result<TrackingDataset> {
    params.validate()?;
    if seq_len == 0 {
        return Err(Error::config("sequence length must be positive"));
    }
    if n_train == 0 {
        return Err(Error::config("need at least one training sequence"));
    }
    let make = |split: Split, n: usize| -> Result<Vec<SequencePair>> {
        (0..n)
            .map(|i| {
                let traj = simulate(params, seq_len, sequence_seed(seed, split, i))?;
                let xs: Vec<f64> = traj.states.iter().map(|s| s.x).collect();
                let ys: Vec<f64> = traj.states.iter().map(|s| s.y).collect();
                Ok(SequencePair {
                    input: SeqTensor::from_vec(1, seq_len, traj.bearings)?,
                    target: SeqTensor::from_rows(&[xs, ys])?,
                })
            })
            .collect()
    };
    let mut train = make(Split::Train, n_train)?;
    let mut val = make(Split::Val, n_val)?;
    let mut test = make(Split::Test, n_test)?;

    let total: f64 = train.iter().map(|p| p.input.data().iter().sum::<f64>()).sum();
    let input_mean = total / (n_train * seq_len) as f64;
    for p in train.iter_mut().chain(val.iter_mut()).chain(test.iter_mut()) {
        p.input.data_mut().iter_mut().for_each(|v| *v -= input_mean);
    }
    Ok(TrackingDataset {
        train,
        val,
        test,
        input_mean,
        seq_len,
        seed,
        params: *params,
    })
}

pub const META_FORMAT: &str = "ufcnn-tracking-v1";
pub const META_FILE: &str = "tracking_meta.json";

impl TrackingDataset {
    pub fn split(&self, split: Split) -> &[SequencePair] {
        match split {
            Split::Train => &self.train,
            Split::Val => &self.val,
            Split::Test => &self.test,
        }
    }

    /// Training examples for a squared-error network.
    pub fn sequences(&self, split: Split) -> Vec<Sequence> {
        self.split(split)
            .iter()
            .map(|p| Sequence {
                input: p.input.clone(),
                target: Target::Real(p.target.clone()),
            })
            .collect()
    }

    /// Writes `train.csv`, `val.csv`, `test.csv` (non-empty splits only) and
    /// the metadata sidecar into `dir`.
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        for split in Split::ALL {
            if !self.split(split).is_empty() {
                dataset::write(dir.join(format!("{}.csv", split.name())), self.split(split))?;
            }
        }
        let meta = TrackingMeta {
            format: META_FORMAT.into(),
            input_mean: self.input_mean,
            seq_len: self.seq_len,
            counts: [self.train.len(), self.val.len(), self.test.len()],
            seed: self.seed,
            params: self.params,
        };
        let path = dir.join(META_FILE);
        fs::write(&path, serde_json::to_string_pretty(&meta)?).map_err(|e| Error::io(&path, e))
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let path = dir.join(META_FILE);
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let meta: TrackingMeta = serde_json::from_str(&text)?;
        if meta.format != META_FORMAT {
            return Err(Error::data(format!("unsupported tracking metadata `{}`", meta.format)));
        }
        let mut splits = Vec::with_capacity(3);
        for (split, &n) in Split::ALL.iter().zip(&meta.counts) {
            let pairs = if n == 0 {
                Vec::new()
            } else {
                dataset::read(dir.join(format!("{}.csv", split.name())))?
            };
            if pairs.len() != n {
                return Err(Error::data(format!(
                    "{} split holds {} sequences, metadata says {n}",
                    split.name(),
                    pairs.len()
                )));
            }
            splits.push(pairs);
        }
        let test = splits.pop().unwrap_or_default();
        let val = splits.pop().unwrap_or_default();
        let train = splits.pop().unwrap_or_default();
        Ok(TrackingDataset {
            train,
            val,
            test,
            input_mean: meta.input_mean,
            seq_len: meta.seq_len,
            seed: meta.seed,
            params: meta.params,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{FRAC_PI_4, PI};

    fn state(x: f64, x_dot: f64, y: f64, y_dot: f64) -> TrackingState {
        TrackingState { x, x_dot, y, y_dot }
    }

    fn quiet() -> TrackingParams {
        TrackingParams {
            sigma_w: 0.0,
            sigma_nu: 0.0,
            ..TrackingParams::default()
        }
    }

    #[test]
    fn bounce_at_walls() {
        let p = TrackingParams::default();
        assert_eq!(bounce(state(9.8, 0.5, 0.0, 0.1), &p).x_dot, -0.5);
        assert_eq!(bounce(state(-9.8, -0.5, 0.0, 0.1), &p).x_dot, 0.5);
        assert_eq!(bounce(state(0.0, 0.1, 9.7, 0.2), &p).y_dot, -0.2);
        let inside = state(3.0, 0.2, -9.6, -0.1);
        assert_eq!(bounce(inside, &p), inside);
    }

    #[test]
    fn noise_free_steps() {
        let p = quiet();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let z = step_state(state(1.0, 0.1, 2.0, -0.2), &p, &mut rng);
        assert!((z.x - 1.1).abs() < 1e-15 && (z.y - 1.8).abs() < 1e-15);
        assert_eq!((z.x_dot, z.y_dot), (0.1, -0.2));
        let z = step_state(state(9.8, 0.5, 0.0, 0.0), &p, &mut rng);
        assert!((z.x - 9.3).abs() < 1e-12);
    }

    #[test]
    fn noise_free_bearings() {
        let p = quiet();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let b = |x, y, rng: &mut ChaCha8Rng| observe(state(x, 0.0, y, 0.0), &p, rng).unwrap();
        assert!((b(1.0, 1.0, &mut rng) - FRAC_PI_4).abs() < 1e-15);
        assert_eq!(b(-1.0, 0.0, &mut rng), PI);
        assert_eq!(b(-1.0, -0.0, &mut rng), PI);
        assert_eq!(b(1.0, 0.0, &mut rng), 0.0);
        assert!(matches!(
            observe(state(0.0, 0.1, 0.0, 0.1), &p, &mut rng),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn trajectory_invariants() {
        let p = TrackingParams::default();
        for seed in 0..20 {
            let traj = simulate(&p, 3000, seed).unwrap();
            let (vx, vy) = (traj.states[0].x_dot.abs(), traj.states[0].y_dot.abs());
            let mut prev: Option<TrackingState> = None;
            for s in &traj.states {
                assert_eq!(s.x_dot.abs(), vx);
                assert_eq!(s.y_dot.abs(), vy);
                assert!(s.x.abs() <= p.half_side && s.y.abs() <= p.half_side);
                if let Some(q) = prev {
                    if q.x_dot != s.x_dot {
                        assert!(q.x.abs() >= p.half_side - p.radius);
                    }
                    if q.y_dot != s.y_dot {
                        assert!(q.y.abs() >= p.half_side - p.radius);
                    }
                }
                prev = Some(*s);
            }
        }
    }

    #[test]
    fn dataset_is_seeded_and_centered() {
        let p = TrackingParams::default();
        let a = generate_dataset(&p, 5, 2, 2, 200, 3).unwrap();
        let b = generate_dataset(&p, 5, 2, 2, 200, 3).unwrap();
        assert_eq!(a.train, b.train);
        assert_eq!(a.test, b.test);
        let n: f64 = (5 * 200) as f64;
        let mean: f64 = a.train.iter().map(|s| s.input.data().iter().sum::<f64>()).sum::<f64>() / n;
        assert!(mean.abs() < 1e-12);
        assert_eq!(a.train[0].input.channels(), 1);
        assert_eq!(a.train[0].target.channels(), 2);
    }

    #[test]
    fn save_and_load() {
        let p = TrackingParams::default();
        let ds = generate_dataset(&p, 3, 1, 0, 50, 8).unwrap();
        let dir = tempfile::tempdir().unwrap();
        ds.save(dir.path()).unwrap();
        let back = TrackingDataset::load(dir.path()).unwrap();
        assert_eq!(back.train, ds.train);
        assert_eq!(back.val, ds.val);
        assert!(back.test.is_empty());
        assert_eq!(back.input_mean, ds.input_mean);
    }
}
