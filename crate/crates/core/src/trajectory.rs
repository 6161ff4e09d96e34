//! Seeded Monte Carlo sampling of photon-counting trajectories.
//!
//! Each trajectory is strictly sequential: per bin one uniform variate picks
//! an outcome against the cumulative `00, 01, 10, 11` probabilities, and the
//! state is advanced with the matching kick-then-decay map. Ensembles run
//! trajectories in parallel; every trajectory owns a seed derived from the
//! master seed and its index, and all aggregates are integer tallies, so the
//! result does not depend on the worker count.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dynamics::{DetectionEvent, Propagator, StateWithDerivative};
use crate::error::{Error, Result};
use crate::exec;
use crate::network::{
    build_transforms, change_basis, transform_derivative, Basis, FeedbackConfig, ModeAmplitudes, NetworkParams, C64,
};

const GOLDEN_GAMMA: u64 = 0x9e37_79b9_7f4a_7c15;

/// SplitMix64 output function.
fn splitmix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed of trajectory `index` under `master_seed`: the `index`-th output of
/// a SplitMix64 generator started at `master_seed`.
pub fn child_seed(master_seed: u64, index: u64) -> u64 {
    splitmix64(master_seed.wrapping_add(index.wrapping_add(1).wrapping_mul(GOLDEN_GAMMA)))
}

/// How a trajectory's cavities are prepared.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum InitialState {
    /// Explicit cavity-basis coherent amplitudes `gamma(0)`.
    Cavity(ModeAmplitudes),
    /// Start from vacuum and fire one combined `beta^(1) + beta^(2)` pulse.
    FeedbackPulse,
}

impl InitialState {
    /// `gamma(0) = (1, 1)`.
    pub fn reference() -> Self {
        InitialState::Cavity(ModeAmplitudes::real(1.0, 1.0, Basis::Cavity))
    }

    pub fn vacuum() -> Self {
        InitialState::Cavity(ModeAmplitudes::vacuum(Basis::Cavity))
    }

    /// Detector-basis amplitudes at `t = 0` and their `phi1` derivative.
    pub fn resolve(&self, params: &NetworkParams, feedback: &FeedbackConfig) -> Result<StateWithDerivative> {
        let t = build_transforms(params);
        match self {
            InitialState::Cavity(gamma) => {
                if !gamma.is_finite() {
                    return Err(Error::InvalidParams("initial amplitudes must be finite".into()));
                }
                // M_ac does not depend on phi1
                Ok(StateWithDerivative::fixed(change_basis(gamma, &t.ac)?))
            }
            InitialState::FeedbackPulse => {
                let beta = feedback.combined();
                let alpha = change_basis(&beta, &t.ab)?;
                let d = transform_derivative(params).apply(beta.to_array());
                Ok(StateWithDerivative {
                    alpha,
                    dalpha_dphi: ModeAmplitudes::from_array(d, Basis::Detector),
                })
            }
        }
    }
}

/// Number of bins covering `horizon`, tolerating round-off in `horizon / dt`.
pub fn steps_for(horizon: f64, dt: f64) -> usize {
    let x = horizon / dt;
    let r = x.round();
    if (x - r).abs() <= 1e-9 * r.max(1.0) {
        r as usize
    } else {
        x.ceil() as usize
    }
}

/// Sample times of a trajectory, stored as bin indices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    dt: f64,
    steps: Vec<usize>,
}

impl TimeGrid {
    /// Every `sample_every`-th bin up to `horizon`, always including `t = 0`,
    /// the final bin and any `extra_times`.
    pub fn new(horizon: f64, dt: f64, sample_every: usize, extra_times: &[f64]) -> Result<Self> {
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(Error::InvalidParams("horizon must be positive and finite".into()));
        }
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::InvalidParams("dt must be positive".into()));
        }
        if sample_every == 0 {
            return Err(Error::InvalidParams("sample_every must be at least 1".into()));
        }
        let x = horizon / dt;
        if x > u32::MAX as f64 {
            return Err(Error::InvalidParams(format!("horizon / dt = {x} steps is too many")));
        }
        let n = steps_for(horizon, dt);
        let mut steps: Vec<usize> = (0..=n).step_by(sample_every).collect();
        steps.push(n);
        for &t in extra_times {
            let s = exact_step(t, dt).ok_or(Error::TimeNotOnGrid { time: t })?;
            if s > n {
                return Err(Error::TimeNotOnGrid { time: t });
            }
            steps.push(s);
        }
        steps.sort_unstable();
        steps.dedup();
        Ok(Self { dt, steps })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn steps(&self) -> &[usize] {
        &self.steps
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn total_steps(&self) -> usize {
        *self.steps.last().unwrap_or(&0)
    }

    pub fn time(&self, idx: usize) -> f64 {
        self.steps[idx] as f64 * self.dt
    }

    pub fn times(&self) -> Vec<f64> {
        (0..self.len()).map(|i| self.time(i)).collect()
    }

    /// Position of time `t` on the grid.
    pub fn index_of(&self, t: f64) -> Result<usize> {
        let s = exact_step(t, self.dt).ok_or(Error::TimeNotOnGrid { time: t })?;
        self.steps
            .binary_search(&s)
            .map_err(|_| Error::TimeNotOnGrid { time: t })
    }
}

/// Bin index of time `t` if `t` is (up to round-off) a multiple of `dt`.
fn exact_step(t: f64, dt: f64) -> Option<usize> {
    if !(t >= 0.0 && t.is_finite()) {
        return None;
    }
    let x = t / dt;
    let r = x.round();
    ((x - r).abs() <= 1e-9 * r.max(1.0)).then_some(r as usize)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimulationOptions {
    /// Record counts every this many bins.
    pub sample_every: usize,
    /// Keep `|alpha_2|^2` at each grid time.
    pub record_population: bool,
    /// Keep the full per-bin event string.
    pub record_events: bool,
}

impl Default for SimulationOptions {
    fn default() -> Self {
        Self {
            sample_every: 100,
            record_population: false,
            record_events: false,
        }
    }
}

/// One sampled trajectory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRecord {
    pub seed: u64,
    pub grid: TimeGrid,
    /// Cumulative detector-1 clicks at each grid time.
    pub counts_d1: Vec<u32>,
    pub counts_d2: Vec<u32>,
    pub final_alpha: ModeAmplitudes,
    pub population_d2: Option<Vec<f64>>,
    pub events: Option<Vec<DetectionEvent>>,
    /// Set when a mode population exceeded the overflow limit. Counts after
    /// the abort stay at their value at the abort bin.
    pub aborted: bool,
    /// Bins whose click probability exceeded `eps_jump`.
    pub unsound_steps: u64,
}

impl TrajectoryRecord {
    pub fn times(&self) -> Vec<f64> {
        self.grid.times()
    }

    pub fn count_at(&self, idx: usize, signal: CountSignal) -> u32 {
        signal.pick(self.counts_d1[idx], self.counts_d2[idx])
    }
}

/// Which count a threshold applies to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CountSignal {
    D1,
    D2,
    Total,
}

impl CountSignal {
    #[inline]
    pub fn pick(self, d1: u32, d2: u32) -> u32 {
        match self {
            CountSignal::D1 => d1,
            CountSignal::D2 => d2,
            CountSignal::Total => d1 + d2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ThresholdClass {
    AboveThreshold,
    BelowThreshold,
}

/// Runs one trajectory on a prebuilt grid starting from detector-basis `alpha0`.
pub fn simulate_on_grid(
    propagator: &Propagator,
    alpha0: ModeAmplitudes,
    grid: &TimeGrid,
    seed: u64,
    options: &SimulationOptions,
) -> Result<TrajectoryRecord> {
    alpha0.expect_basis(Basis::Detector)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut alpha: [C64; 2] = alpha0.to_array();
    let total = grid.total_steps();
    let n = grid.len();
    let mut counts_d1 = Vec::with_capacity(n);
    let mut counts_d2 = Vec::with_capacity(n);
    let mut pop = options.record_population.then(|| Vec::with_capacity(n));
    let mut events = options.record_events.then(|| Vec::with_capacity(total));
    let (mut c1, mut c2) = (0u32, 0u32);
    let mut unsound = 0u64;
    let mut aborted = false;
    let eps = propagator.eps_jump();

    let mut next = 0;
    for step in 0..=total {
        while next < n && grid.steps()[next] == step {
            counts_d1.push(c1);
            counts_d2.push(c2);
            if let Some(p) = pop.as_mut() {
                p.push(alpha[1].norm_sqr());
            }
            next += 1;
        }
        if step == total || aborted {
            break;
        }
        let probs = propagator.probabilities(&alpha);
        if !probs.is_sound(eps) {
            unsound += 1;
        }
        let u: f64 = rng.random();
        let event = probs.sample(u);
        let (i1, i2) = event.increments();
        c1 += i1;
        c2 += i2;
        alpha = propagator.advance(&alpha, event);
        if let Some(ev) = events.as_mut() {
            ev.push(event);
        }
        if propagator.overflowed(&alpha) {
            aborted = true;
        }
    }
    // an aborted run freezes its counts for the remaining grid times
    while counts_d1.len() < n {
        counts_d1.push(c1);
        counts_d2.push(c2);
        if let Some(p) = pop.as_mut() {
            p.push(alpha[1].norm_sqr());
        }
    }
    Ok(TrajectoryRecord {
        seed,
        grid: grid.clone(),
        counts_d1,
        counts_d2,
        final_alpha: ModeAmplitudes::from_array(alpha, Basis::Detector),
        population_d2: pop,
        events,
        aborted,
        unsound_steps: unsound,
    })
}

/// Samples one trajectory up to `horizon`; bit-identical for equal inputs.
pub fn simulate_trajectory(
    initial: &InitialState,
    params: &NetworkParams,
    feedback: &FeedbackConfig,
    horizon: f64,
    seed: u64,
    options: &SimulationOptions,
) -> Result<TrajectoryRecord> {
    let grid = TimeGrid::new(horizon, params.dt, options.sample_every, &[])?;
    let propagator = Propagator::new(params, feedback)?;
    let start = initial.resolve(params, feedback)?;
    simulate_on_grid(&propagator, start.alpha, &grid, seed, options)
}

/// Compares the chosen count at time `t` against `threshold` (strictly above).
pub fn classify_trajectory(
    record: &TrajectoryRecord,
    threshold: u32,
    t: f64,
    signal: CountSignal,
) -> Result<ThresholdClass> {
    let idx = record.grid.index_of(t)?;
    Ok(if record.count_at(idx, signal) > threshold {
        ThresholdClass::AboveThreshold
    } else {
        ThresholdClass::BelowThreshold
    })
}

/// Ensemble-level settings besides the physics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleOptions {
    pub sample_every: usize,
    /// Thresholds tallied at every grid time.
    pub thresholds: Vec<u32>,
    /// Times that must appear on the grid.
    pub extra_times: Vec<f64>,
}

impl Default for EnsembleOptions {
    fn default() -> Self {
        Self {
            sample_every: 100,
            thresholds: vec![5],
            extra_times: Vec::new(),
        }
    }
}

/// Trajectories whose count strictly exceeds a threshold.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ThresholdTally {
    pub d1: u64,
    pub d2: u64,
    pub total: u64,
    /// Both detectors above threshold.
    pub both: u64,
}

impl ThresholdTally {
    pub fn get(&self, signal: CountSignal) -> u64 {
        match signal {
            CountSignal::D1 => self.d1,
            CountSignal::D2 => self.d2,
            CountSignal::Total => self.total,
        }
    }

    fn merge(&mut self, o: &ThresholdTally) {
        self.d1 += o.d1;
        self.d2 += o.d2;
        self.total += o.total;
        self.both += o.both;
    }
}

/// Aggregated counting statistics of an ensemble.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleStats {
    pub n_traj: u64,
    pub master_seed: u64,
    pub grid: TimeGrid,
    pub thresholds: Vec<u32>,
    /// Per grid time: number of trajectories with each `(d1, d2)` count pair.
    pub histograms: Vec<BTreeMap<(u32, u32), u64>>,
    /// Per grid time, per threshold.
    pub tallies: Vec<Vec<ThresholdTally>>,
    pub aborted: u64,
    pub unsound_steps: u64,
}

impl EnsembleStats {
    fn empty(grid: &TimeGrid, thresholds: &[u32], master_seed: u64) -> Self {
        Self {
            n_traj: 0,
            master_seed,
            grid: grid.clone(),
            thresholds: thresholds.to_vec(),
            histograms: vec![BTreeMap::new(); grid.len()],
            tallies: vec![vec![ThresholdTally::default(); thresholds.len()]; grid.len()],
            aborted: 0,
            unsound_steps: 0,
        }
    }

    fn add_record(&mut self, r: &TrajectoryRecord) {
        self.n_traj += 1;
        self.aborted += u64::from(r.aborted);
        self.unsound_steps += r.unsound_steps;
        for idx in 0..self.grid.len() {
            let (c1, c2) = (r.counts_d1[idx], r.counts_d2[idx]);
            *self.histograms[idx].entry((c1, c2)).or_insert(0) += 1;
            for (tally, &th) in self.tallies[idx].iter_mut().zip(&self.thresholds) {
                let (a1, a2) = (c1 > th, c2 > th);
                tally.d1 += u64::from(a1);
                tally.d2 += u64::from(a2);
                tally.total += u64::from(c1 + c2 > th);
                tally.both += u64::from(a1 && a2);
            }
        }
    }

    fn merge(mut self, other: EnsembleStats) -> Self {
        self.n_traj += other.n_traj;
        self.aborted += other.aborted;
        self.unsound_steps += other.unsound_steps;
        for (h, oh) in self.histograms.iter_mut().zip(other.histograms) {
            for (k, v) in oh {
                *h.entry(k).or_insert(0) += v;
            }
        }
        for (t, ot) in self.tallies.iter_mut().zip(&other.tallies) {
            for (a, b) in t.iter_mut().zip(ot) {
                a.merge(b);
            }
        }
        self
    }

    /// Aggregates records that share one grid.
    pub fn from_records(records: &[TrajectoryRecord], thresholds: &[u32], master_seed: u64) -> Result<Self> {
        let first = records
            .first()
            .ok_or_else(|| Error::InvalidParams("no records to aggregate".into()))?;
        let mut stats = Self::empty(&first.grid, thresholds, master_seed);
        for r in records {
            if r.grid != first.grid {
                return Err(Error::InvalidParams("records use different grids".into()));
            }
            stats.add_record(r);
        }
        Ok(stats)
    }

    pub fn abort_fraction(&self) -> f64 {
        self.aborted as f64 / self.n_traj as f64
    }

    /// Trajectories above `threshold` in `signal` at grid index `idx`, from
    /// the stored tallies when available, otherwise from the histogram.
    pub fn count_above(&self, idx: usize, threshold: u32, signal: CountSignal) -> u64 {
        if let Some(k) = self.thresholds.iter().position(|&t| t == threshold) {
            return self.tallies[idx][k].get(signal);
        }
        self.histograms[idx]
            .iter()
            .filter(|(&(c1, c2), _)| signal.pick(c1, c2) > threshold)
            .map(|(_, &n)| n)
            .sum()
    }

    /// Trajectories with both detectors above `threshold`.
    pub fn count_both_above(&self, idx: usize, threshold: u32) -> u64 {
        if let Some(k) = self.thresholds.iter().position(|&t| t == threshold) {
            return self.tallies[idx][k].both;
        }
        self.histograms[idx]
            .iter()
            .filter(|(&(c1, c2), _)| c1 > threshold && c2 > threshold)
            .map(|(_, &n)| n)
            .sum()
    }

    /// Sample mean and standard error of the total count at grid index `idx`.
    pub fn mean_total_count(&self, idx: usize) -> (f64, f64) {
        let (mut s1, mut s2) = (0u128, 0u128);
        for (&(c1, c2), &n) in &self.histograms[idx] {
            let c = u128::from(c1 + c2);
            s1 += c * u128::from(n);
            s2 += c * c * u128::from(n);
        }
        let n = self.n_traj as f64;
        let mean = s1 as f64 / n;
        let var = if self.n_traj > 1 {
            (s2 as f64 - n * mean * mean) / (n - 1.0)
        } else {
            0.0
        };
        (mean, (var.max(0.0) / n).sqrt())
    }
}

/// Runs `n_traj` trajectories with seeds `child_seed(master_seed, i)` and
/// aggregates them. Identical for every `workers` value.
#[allow(clippy::too_many_arguments)]
pub fn simulate_ensemble(
    initial: &InitialState,
    params: &NetworkParams,
    feedback: &FeedbackConfig,
    horizon: f64,
    n_traj: usize,
    master_seed: u64,
    workers: usize,
    options: &EnsembleOptions,
) -> Result<EnsembleStats> {
    if n_traj == 0 {
        return Err(Error::InvalidParams("n_traj must be at least 1".into()));
    }
    let grid = TimeGrid::new(horizon, params.dt, options.sample_every, &options.extra_times)?;
    let propagator = Propagator::new(params, feedback)?;
    let alpha0 = initial.resolve(params, feedback)?.alpha;
    let sim = SimulationOptions {
        sample_every: options.sample_every,
        record_population: false,
        record_events: false,
    };
    let stats = exec::fold_indexed(
        workers,
        n_traj,
        || Ok(EnsembleStats::empty(&grid, &options.thresholds, master_seed)),
        |acc: Result<EnsembleStats>, i| {
            let mut acc = acc?;
            let seed = child_seed(master_seed, i as u64);
            let rec = simulate_on_grid(&propagator, alpha0, &grid, seed, &sim)?;
            acc.add_record(&rec);
            Ok(acc)
        },
        |a, b| Ok(a?.merge(b?)),
    )?;
    Ok(stats)
}

/// The individual records of an ensemble, in trajectory order.
#[allow(clippy::too_many_arguments)]
pub fn simulate_records(
    initial: &InitialState,
    params: &NetworkParams,
    feedback: &FeedbackConfig,
    horizon: f64,
    n_traj: usize,
    master_seed: u64,
    workers: usize,
    options: &SimulationOptions,
) -> Result<Vec<TrajectoryRecord>> {
    let grid = TimeGrid::new(horizon, params.dt, options.sample_every, &[])?;
    let propagator = Propagator::new(params, feedback)?;
    let alpha0 = initial.resolve(params, feedback)?.alpha;
    exec::map_indexed(workers, n_traj, |i| {
        simulate_on_grid(&propagator, alpha0, &grid, child_seed(master_seed, i as u64), options)
    })
    .into_iter()
    .collect()
}
