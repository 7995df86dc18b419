//! Monte Carlo estimate of how often a dropping method produces a failure
//! case: a synthetic object that is almost entirely removed, or almost
//! entirely kept.
//!
//! Each trial places an axis-aligned square object (edge uniform in
//! `object_side_range`, fully inside the image), samples a mask from the
//! calibrated method and counts how many object pixels survive. Every method
//! draws its removal unit with edge uniform in `[x, 2x]` (a HaS patch, a
//! Cutout square, a GridMask unit of period `d`) and is calibrated to the
//! same mean keep ratio:
//!
//! * GridMask solves `2r - r^2 = k`;
//! * HaS hides each patch with probability `1 - k`;
//! * multi-region Cutout stops at the first mask whose keep ratio is at or
//!   below a threshold `tau >= k`, with `tau` chosen from pilot runs so the
//!   mean keep ratio is `k`. When even a single square removes more than
//!   `1 - k` on average, `tau` saturates and the mean stays below `k`.
//!
//! Trial `t` of method `m` at size `x` uses `rng::stream(seed, [m, x, t])`, so
//! the statistics are independent of thread count.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rayon::prelude::*;

use crate::baseline::{
    drop_centered_square, has_mask, multi_cutout_cap, multi_cutout_mask, HasParams,
};
use crate::error::{Error, Result};
use crate::mask::{keep_ratio, render_grid_mask, GridSpec, Mask};
use crate::rng::{self, StreamRng};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SimScenario {
    pub image_side: usize,
    /// Inclusive range of object edge lengths.
    pub object_side_range: (usize, usize),
    pub target_keep: f64,
    pub trials: usize,
    pub failure_threshold: f64,
    pub grid_sizing: GridSizing,
}

impl Default for SimScenario {
    fn default() -> Self {
        SimScenario {
            image_side: 224,
            object_side_range: (40, 160),
            target_keep: 0.75,
            trials: 100_000,
            failure_threshold: 0.99,
            grid_sizing: GridSizing::UnitPeriod,
        }
    }
}

/// Which GridMask length is drawn from `[x, 2x]`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum GridSizing {
    /// The unit period `d`.
    #[default]
    UnitPeriod,
    /// The dropped-square side; `d = round(l_drop / (1 - r))`.
    DroppedSide,
}

impl FromStr for GridSizing {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "unit" => Ok(GridSizing::UnitPeriod),
            "square" => Ok(GridSizing::DroppedSide),
            other => Err(Error::config(format!(
                "unknown grid sizing {other:?}; expected unit or square"
            ))),
        }
    }
}

impl SimScenario {
    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = self.object_side_range;
        if self.image_side == 0 {
            return Err(Error::config("image side must be positive"));
        }
        if lo == 0 || lo > hi || hi > self.image_side {
            return Err(Error::config(format!(
                "object range [{lo}, {hi}] must lie within (0, {}]",
                self.image_side
            )));
        }
        if !(self.target_keep > 0.0 && self.target_keep <= 1.0) {
            return Err(Error::config(format!(
                "target keep {} is outside (0, 1]",
                self.target_keep
            )));
        }
        if self.trials == 0 {
            return Err(Error::config("trials must be at least 1"));
        }
        if !(self.failure_threshold > 0.5 && self.failure_threshold <= 1.0) {
            return Err(Error::config(format!(
                "failure threshold {} is outside (0.5, 1]",
                self.failure_threshold
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Outcome {
    RemovedFailure,
    ReservedFailure,
    Ok,
}

/// Both ends are inclusive: kept fraction `<= 1 - threshold` is a removal
/// failure, `>= threshold` a reservation failure.
pub fn classify_outcome(kept: usize, total: usize, threshold: f64) -> Outcome {
    // Absorbs the rounding in `1 - threshold`, e.g. 1 - 0.99 = 0.010000000000000009.
    const SLACK: f64 = 1e-12;
    let frac = kept as f64 / total as f64;
    if frac <= 1.0 - threshold + SLACK {
        Outcome::RemovedFailure
    } else if frac >= threshold - SLACK {
        Outcome::ReservedFailure
    } else {
        Outcome::Ok
    }
}

/// Methods compared by the simulator.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Method {
    GridMask,
    Has,
    MultiCutout,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::GridMask, Method::Has, Method::MultiCutout];

    pub fn name(self) -> &'static str {
        match self {
            Method::GridMask => "gridmask",
            Method::Has => "has",
            Method::MultiCutout => "multi_cutout",
        }
    }

    fn stream_id(self) -> u64 {
        match self {
            Method::GridMask => 1,
            Method::Has => 2,
            Method::MultiCutout => 3,
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gridmask" => Ok(Method::GridMask),
            "has" => Ok(Method::Has),
            "multi_cutout" => Ok(Method::MultiCutout),
            other => Err(Error::config(format!("unknown method {other:?}"))),
        }
    }
}

/// A method with its parameters fixed for one removal size `x`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Calibrated {
    GridMask {
        r: f64,
        x: usize,
        sizing: GridSizing,
    },
    /// Patch edge uniform in `[x, 2x]`.
    Has { p_hide: f64, x: usize },
    /// Square edges uniform in `[x, 2x]`, dropped until the keep ratio is at
    /// or below `stop_keep`.
    MultiCutout { stop_keep: f64, x: usize },
}

/// Seed of the pilot runs that fix the multi-region Cutout threshold.
pub const CALIBRATION_SEED: u64 = 0x6772_6964_6d61_736b;

/// Pilot trials used to fix the multi-region Cutout threshold.
pub const CALIBRATION_TRIALS: usize = 4000;

/// Fix each method's parameters so its mean keep ratio matches the scenario.
pub fn calibrate_method(method: Method, scenario: &SimScenario, x: usize) -> Result<Calibrated> {
    scenario.validate()?;
    if x == 0 {
        return Err(Error::config("removal size x must be at least 1"));
    }
    let k = scenario.target_keep;
    Ok(match method {
        Method::GridMask => Calibrated::GridMask {
            r: 1.0 - (1.0 - k).sqrt(),
            x,
            sizing: scenario.grid_sizing,
        },
        Method::Has => Calibrated::Has { p_hide: 1.0 - k, x },
        Method::MultiCutout => Calibrated::MultiCutout {
            stop_keep: cutout_stop_threshold(scenario.image_side, x, k),
            x,
        },
    })
}

/// Keep ratios after each square of one multi-region Cutout run that stops at
/// `floor_keep`.
fn cutout_keep_trace(rng: &mut StreamRng, side: usize, x: usize, floor_keep: f64) -> Vec<f64> {
    let mut mask = Mask::ones(side, side).expect("side is positive");
    let total = (side * side) as f64;
    let mut kept = side * side;
    let mut trace = Vec::new();
    let cap = multi_cutout_cap(side, side, x);
    while kept as f64 / total > floor_keep && trace.len() < cap {
        let s = rng.gen_range(x..=2 * x);
        let cy = rng.gen_range(0..side);
        let cx = rng.gen_range(0..side);
        kept -= drop_centered_square(&mut mask, cy, cx, s);
        trace.push(kept as f64 / total);
    }
    trace
}

/// Smallest stopping threshold `tau` in `[target, 1)` whose pilot mean keep
/// ratio reaches `target`.
///
/// Pilot run `t` draws from `rng::stream(CALIBRATION_SEED, [side, x, t])`, the
/// same stream layout [`multi_cutout_mask`] consumes, so stopping at a larger
/// `tau` is a prefix of stopping at `target` and the mean is monotone in `tau`.
pub fn cutout_stop_threshold(side: usize, x: usize, target: f64) -> f64 {
    let total = (side * side) as f64;
    // Largest threshold that still forces at least one dropped cell.
    let ceiling = 1.0 - 0.5 / total;
    if target >= ceiling {
        return target;
    }
    let traces: Vec<Vec<f64>> = (0..CALIBRATION_TRIALS)
        .map(|t| {
            let mut rng = rng::stream(CALIBRATION_SEED, &[side as u64, x as u64, t as u64]);
            cutout_keep_trace(&mut rng, side, x, target)
        })
        .collect();
    let mean_keep = |tau: f64| {
        traces
            .iter()
            .map(|tr| tr.iter().copied().find(|&k| k <= tau).unwrap_or(1.0))
            .sum::<f64>()
            / traces.len() as f64
    };
    if mean_keep(target) >= target {
        return target;
    }
    if mean_keep(ceiling) < target {
        return ceiling;
    }
    let (mut lo, mut hi) = (target, ceiling);
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if mean_keep(mid) >= target {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    hi
}

impl Calibrated {
    pub fn method(&self) -> Method {
        match self {
            Calibrated::GridMask { .. } => Method::GridMask,
            Calibrated::Has { .. } => Method::Has,
            Calibrated::MultiCutout { .. } => Method::MultiCutout,
        }
    }

    /// Unit period for a length drawn from `[x, 2x]`.
    pub fn grid_period(r: f64, drawn: usize, sizing: GridSizing) -> u32 {
        let d = match sizing {
            GridSizing::UnitPeriod => drawn,
            GridSizing::DroppedSide if r >= 1.0 => drawn,
            GridSizing::DroppedSide => (drawn as f64 / (1.0 - r)).round() as usize,
        };
        d.max(1) as u32
    }
}

/// Something that produces one square mask per trial.
pub trait MaskSource: Sync {
    fn name(&self) -> String;

    /// Distinguishes this source's random streams from other sources'.
    fn stream_id(&self) -> u64;

    fn sample(&self, rng: &mut StreamRng, side: usize) -> Result<Mask>;
}

impl MaskSource for Calibrated {
    fn name(&self) -> String {
        self.method().name().to_string()
    }

    fn stream_id(&self) -> u64 {
        self.method().stream_id()
    }

    fn sample(&self, rng: &mut StreamRng, side: usize) -> Result<Mask> {
        match *self {
            Calibrated::GridMask { r, x, sizing } => {
                let d = Self::grid_period(r, rng.gen_range(x..=2 * x), sizing);
                let delta_x = rng.gen_range(0..d);
                let delta_y = rng.gen_range(0..d);
                let spec = GridSpec::new(r, d, delta_x, delta_y, 0.0)?;
                render_grid_mask(&spec, side, side)
            }
            Calibrated::Has { p_hide, x } => {
                let cell = rng.gen_range(x..=2 * x);
                has_mask(rng, side, side, HasParams { cell, p_hide })
            }
            Calibrated::MultiCutout { stop_keep, x } => {
                multi_cutout_mask(rng, side, side, x, 2 * x, stop_keep)
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FailureStats {
    pub method: String,
    pub x: usize,
    pub p_fail: f64,
    pub p_removed: f64,
    pub p_reserved: f64,
    pub trials: usize,
    pub removed: usize,
    pub reserved: usize,
    /// Mean keep ratio of the sampled masks over the whole image.
    pub mean_keep: f64,
}

impl FailureStats {
    /// Binomial standard error of `p_fail`.
    pub fn std_error(&self) -> f64 {
        (self.p_fail * (1.0 - self.p_fail) / self.trials as f64).sqrt()
    }
}

#[derive(Clone, Copy, Default)]
struct Tally {
    removed: usize,
    reserved: usize,
    keep_sum: f64,
}

impl Tally {
    fn merge(self, other: Tally) -> Tally {
        Tally {
            removed: self.removed + other.removed,
            reserved: self.reserved + other.reserved,
            keep_sum: self.keep_sum + other.keep_sum,
        }
    }
}

fn run_trial<M: MaskSource + ?Sized>(
    seed: u64,
    scenario: &SimScenario,
    source: &M,
    x: usize,
    trial: usize,
) -> Result<Tally> {
    let mut rng = rng::stream(seed, &[source.stream_id(), x as u64, trial as u64]);
    let side = scenario.image_side;
    let (lo, hi) = scenario.object_side_range;
    let edge = rng.gen_range(lo..=hi);
    let top = rng.gen_range(0..=side - edge);
    let left = rng.gen_range(0..=side - edge);
    let mask = source.sample(&mut rng, side)?;
    let kept = mask.count_kept_in(top, left, edge, edge);
    let mut tally = Tally {
        keep_sum: keep_ratio(&mask),
        ..Tally::default()
    };
    match classify_outcome(kept, edge * edge, scenario.failure_threshold) {
        Outcome::RemovedFailure => tally.removed = 1,
        Outcome::ReservedFailure => tally.reserved = 1,
        Outcome::Ok => {}
    }
    Ok(tally)
}

/// Run `scenario.trials` trials of `source` at removal size `x`.
///
/// With `jobs <= 1` trials run on the calling thread; otherwise on a pool of
/// `jobs` workers. Counts are identical either way.
pub fn simulate_point<M: MaskSource + ?Sized>(
    seed: u64,
    scenario: &SimScenario,
    source: &M,
    x: usize,
    jobs: usize,
) -> Result<FailureStats> {
    scenario.validate()?;
    let trial = |t| run_trial(seed, scenario, source, x, t);
    let tally = if jobs <= 1 {
        (0..scenario.trials).try_fold(Tally::default(), |acc, t| {
            Ok::<_, Error>(acc.merge(trial(t)?))
        })?
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build()
            .map_err(|e| Error::config(format!("thread pool: {e}")))?;
        // Per-trial keep ratios are collected and summed in trial order so the
        // floating-point mean matches the serial run bit for bit.
        let tallies: Vec<Tally> = pool.install(|| {
            (0..scenario.trials)
                .into_par_iter()
                .map(trial)
                .collect::<Result<_>>()
        })?;
        tallies.into_iter().fold(Tally::default(), Tally::merge)
    };
    let n = scenario.trials as f64;
    Ok(FailureStats {
        method: source.name(),
        x,
        p_fail: (tally.removed + tally.reserved) as f64 / n,
        p_removed: tally.removed as f64 / n,
        p_reserved: tally.reserved as f64 / n,
        trials: scenario.trials,
        removed: tally.removed,
        reserved: tally.reserved,
        mean_keep: tally.keep_sum / n,
    })
}

/// Simulate every `(method, x)` pair, method-major.
pub fn sweep(
    seed: u64,
    scenario: &SimScenario,
    methods: &[Method],
    xs: &[usize],
    jobs: usize,
) -> Result<Vec<FailureStats>> {
    if xs.is_empty() {
        return Err(Error::config("sweep needs at least one x"));
    }
    let mut rows = Vec::with_capacity(methods.len() * xs.len());
    for &method in methods {
        for &x in xs {
            let calibrated = calibrate_method(method, scenario, x)?;
            rows.push(simulate_point(seed, scenario, &calibrated, x, jobs)?);
        }
    }
    Ok(rows)
}
