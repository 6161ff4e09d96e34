//! Threshold-exceedance signals and error-propagated phase uncertainty.
//!
//! The measured signal is the probability that a detector has registered
//! more than `threshold` photons by time `t`, per detector or as the
//! difference between the two detectors. Scans over the phase difference
//! hold `phi2` at the template value and set `phi1 = phi2 + phi_tilde`, and
//! every scan point reuses the same master seed (common random numbers).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::{FeedbackConfig, NetworkParams};
use crate::trajectory::{child_seed, simulate_ensemble, CountSignal, EnsembleOptions, EnsembleStats, InitialState};

/// Default photon-number threshold of the signal.
pub const DEFAULT_THRESHOLD: u32 = 5;
/// Default finite-difference half-width for the signal gradient (radians).
pub const DEFAULT_DELTA_PHI: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Observable {
    /// Probability that detector 1 exceeds the threshold.
    PD1,
    /// Probability that detector 2 exceeds the threshold.
    PD2,
    /// Difference of the two.
    PD1MinusPD2,
}

impl Observable {
    pub const ALL: [Observable; 3] = [Observable::PD1, Observable::PD2, Observable::PD1MinusPD2];

    pub fn name(self) -> &'static str {
        match self {
            Observable::PD1 => "p_d1",
            Observable::PD2 => "p_d2",
            Observable::PD1MinusPD2 => "p_d1_minus_p_d2",
        }
    }
}

/// Exceedance probability `tally / n_traj` with binomial standard error.
pub fn threshold_signal(stats: &EnsembleStats, signal: CountSignal, threshold: u32, t: f64) -> Result<(f64, f64)> {
    let idx = stats.grid.index_of(t)?;
    let n = stats.n_traj as f64;
    let p = stats.count_above(idx, threshold, signal) as f64 / n;
    Ok((p, (p * (1.0 - p) / n).sqrt()))
}

/// Value of `observable` and its standard error on one ensemble.
pub fn observable_value(stats: &EnsembleStats, observable: Observable, threshold: u32, t: f64) -> Result<(f64, f64)> {
    match observable {
        Observable::PD1 => threshold_signal(stats, CountSignal::D1, threshold, t),
        Observable::PD2 => threshold_signal(stats, CountSignal::D2, threshold, t),
        Observable::PD1MinusPD2 => {
            let idx = stats.grid.index_of(t)?;
            let n = stats.n_traj as f64;
            let p1 = stats.count_above(idx, threshold, CountSignal::D1) as f64 / n;
            let p2 = stats.count_above(idx, threshold, CountSignal::D2) as f64 / n;
            let both = stats.count_both_above(idx, threshold) as f64 / n;
            let d = p1 - p2;
            // per trajectory the indicator difference is -1, 0 or 1
            let var = (p1 + p2 - 2.0 * both - d * d).max(0.0);
            Ok((d, (var / n).sqrt()))
        }
    }
}

/// Physics shared by every point of a scan.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanSetup {
    /// Template parameters; `phi1` is overwritten per scan point.
    pub params: NetworkParams,
    pub feedback: FeedbackConfig,
    pub initial: InitialState,
    pub sample_every: usize,
    pub workers: usize,
}

impl ScanSetup {
    pub fn at_phase(&self, phi_tilde: f64) -> NetworkParams {
        self.params.with_phases(self.params.phi2 + phi_tilde, self.params.phi2)
    }

    fn ensemble(
        &self,
        phi_tilde: f64,
        times: &[f64],
        n_traj: usize,
        seed: u64,
        threshold: u32,
    ) -> Result<EnsembleStats> {
        let horizon = times.iter().copied().fold(0.0, f64::max);
        let options = EnsembleOptions {
            sample_every: self.sample_every,
            thresholds: vec![threshold],
            extra_times: times.to_vec(),
        };
        simulate_ensemble(
            &self.initial,
            &self.at_phase(phi_tilde),
            &self.feedback,
            horizon,
            n_traj,
            seed,
            self.workers,
            &options,
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SignalPoint {
    pub phi_tilde: f64,
    pub value: f64,
    pub stderr: f64,
}

/// One observable at one time over a phase grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignalCurve {
    pub observable: Observable,
    pub threshold: u32,
    pub time: f64,
    pub points: Vec<SignalPoint>,
    pub n_traj: usize,
    pub master_seed: u64,
}

fn check_times(times: &[f64]) -> Result<()> {
    if times.is_empty() || times.iter().any(|&t| !(t > 0.0 && t.is_finite())) {
        return Err(Error::InvalidParams("times must be non-empty and positive".into()));
    }
    Ok(())
}

/// Every observable at every time in `times`, one ensemble per phase point.
/// Curves come back grouped by time, then in [`Observable::ALL`] order.
pub fn signal_curves(
    setup: &ScanSetup,
    phi_grid: &[f64],
    times: &[f64],
    n_traj: usize,
    master_seed: u64,
    threshold: u32,
) -> Result<Vec<SignalCurve>> {
    if phi_grid.is_empty() {
        return Err(Error::InvalidParams("phase grid must not be empty".into()));
    }
    check_times(times)?;
    let mut curves: Vec<SignalCurve> = times
        .iter()
        .flat_map(|&time| {
            Observable::ALL.map(|observable| SignalCurve {
                observable,
                threshold,
                time,
                points: Vec::with_capacity(phi_grid.len()),
                n_traj,
                master_seed,
            })
        })
        .collect();
    for &phi in phi_grid {
        let stats = setup.ensemble(phi, times, n_traj, master_seed, threshold)?;
        for curve in curves.iter_mut() {
            let (value, stderr) = observable_value(&stats, curve.observable, threshold, curve.time)?;
            curve.points.push(SignalPoint {
                phi_tilde: phi,
                value,
                stderr,
            });
        }
    }
    Ok(curves)
}

/// A single observable over `phi_grid` at time `t`.
pub fn signal_curve(
    setup: &ScanSetup,
    phi_grid: &[f64],
    t: f64,
    n_traj: usize,
    master_seed: u64,
    observable: Observable,
    threshold: u32,
) -> Result<SignalCurve> {
    let curves = signal_curves(setup, phi_grid, &[t], n_traj, master_seed, threshold)?;
    Ok(curves
        .into_iter()
        .find(|c| c.observable == observable)
        .expect("every observable is computed"))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UncertaintyRequest {
    pub phi_star: f64,
    pub delta_phi: f64,
    pub times: Vec<f64>,
    pub n_subensembles: usize,
    pub n_traj_per_sub: usize,
    pub master_seed: u64,
    pub threshold: u32,
}

/// Error-propagated phase uncertainty of one observable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UncertaintyResult {
    pub observable: Observable,
    pub phi_star: f64,
    pub delta_phi: f64,
    pub threshold: u32,
    pub times: Vec<f64>,
    /// Mean of the observable over subensembles at `phi_star`.
    pub mean_of_o: Vec<f64>,
    /// Sample variance of the observable over subensembles at `phi_star`.
    pub variance_of_o: Vec<f64>,
    /// Central-difference slope of the subensemble-mean observable.
    pub gradient_of_o: Vec<f64>,
    /// Standard error of that slope across subensembles.
    pub gradient_stderr: Vec<f64>,
    /// `variance / gradient^2`; `None` where the slope is indistinguishable
    /// from zero and the uncertainty is unbounded.
    pub delta_phi_sq: Vec<Option<f64>>,
    pub n_subensembles: usize,
    pub n_traj_per_subensemble: usize,
    pub master_seed: u64,
}

impl UncertaintyResult {
    pub fn zero_gradient(&self) -> Vec<bool> {
        self.delta_phi_sq.iter().map(Option::is_none).collect()
    }
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn sample_variance(xs: &[f64]) -> f64 {
    let m = mean(xs);
    xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64
}

/// Phase uncertainty of every observable from one set of subensembles.
///
/// Subensemble `j` uses seed `child_seed(master_seed, j)` at `phi_star` and at
/// `phi_star +- delta_phi`, so each finite difference is taken under common
/// random numbers.
pub fn phase_uncertainty_all(setup: &ScanSetup, req: &UncertaintyRequest) -> Result<Vec<UncertaintyResult>> {
    if !(req.delta_phi > 0.0 && req.delta_phi.is_finite()) {
        return Err(Error::InvalidParams("delta_phi must be positive".into()));
    }
    if req.n_subensembles < 2 {
        return Err(Error::InvalidParams("need at least two subensembles".into()));
    }
    check_times(&req.times)?;

    // values[obs][time][sub] for the centre, plus and minus phases
    let n_obs = Observable::ALL.len();
    let shape = || vec![vec![Vec::with_capacity(req.n_subensembles); req.times.len()]; n_obs];
    let (mut centre, mut plus, mut minus) = (shape(), shape(), shape());
    for j in 0..req.n_subensembles {
        let seed = child_seed(req.master_seed, j as u64);
        for (phi, store) in [
            (req.phi_star, &mut centre),
            (req.phi_star + req.delta_phi, &mut plus),
            (req.phi_star - req.delta_phi, &mut minus),
        ] {
            let stats = setup.ensemble(phi, &req.times, req.n_traj_per_sub, seed, req.threshold)?;
            for (o, obs) in Observable::ALL.iter().enumerate() {
                for (k, &t) in req.times.iter().enumerate() {
                    store[o][k].push(observable_value(&stats, *obs, req.threshold, t)?.0);
                }
            }
        }
    }

    let n_sub = req.n_subensembles as f64;
    let mut out = Vec::with_capacity(n_obs);
    for (o, &observable) in Observable::ALL.iter().enumerate() {
        let mut res = UncertaintyResult {
            observable,
            phi_star: req.phi_star,
            delta_phi: req.delta_phi,
            threshold: req.threshold,
            times: req.times.clone(),
            mean_of_o: Vec::new(),
            variance_of_o: Vec::new(),
            gradient_of_o: Vec::new(),
            gradient_stderr: Vec::new(),
            delta_phi_sq: Vec::new(),
            n_subensembles: req.n_subensembles,
            n_traj_per_subensemble: req.n_traj_per_sub,
            master_seed: req.master_seed,
        };
        for k in 0..req.times.len() {
            let var = sample_variance(&centre[o][k]);
            let slopes: Vec<f64> = plus[o][k]
                .iter()
                .zip(&minus[o][k])
                .map(|(p, m)| (p - m) / (2.0 * req.delta_phi))
                .collect();
            let grad = (mean(&plus[o][k]) - mean(&minus[o][k])) / (2.0 * req.delta_phi);
            let grad_se = (sample_variance(&slopes) / n_sub).sqrt();
            let unbounded = grad == 0.0 || grad.abs() < grad_se;
            res.mean_of_o.push(mean(&centre[o][k]));
            res.variance_of_o.push(var);
            res.gradient_of_o.push(grad);
            res.gradient_stderr.push(grad_se);
            res.delta_phi_sq.push((!unbounded).then(|| var / (grad * grad)));
        }
        out.push(res);
    }
    Ok(out)
}

pub fn phase_uncertainty(
    setup: &ScanSetup,
    req: &UncertaintyRequest,
    observable: Observable,
) -> Result<UncertaintyResult> {
    Ok(phase_uncertainty_all(setup, req)?
        .into_iter()
        .find(|r| r.observable == observable)
        .expect("every observable is computed"))
}
