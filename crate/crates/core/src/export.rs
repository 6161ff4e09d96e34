//! CSV and JSON output formats.
//!
//! CSV files start with `#`-prefixed provenance lines (the resolved run
//! configuration) followed by a header row. Floats are written with 17
//! significant digits so that equal runs give byte-identical files.

use std::io::{self, Write};

use serde::Serialize;

use crate::estimator::{SignalCurve, UncertaintyResult};
use crate::fisher::{FisherResult, FitOutcome};
use crate::network::FeedbackConfig;
use crate::trajectory::{EnsembleStats, TrajectoryRecord};

/// Scientific notation with 17 significant digits.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

fn write_provenance<W: Write>(out: &mut W, provenance: &str) -> io::Result<()> {
    for line in provenance.lines() {
        if line.is_empty() {
            writeln!(out, "#")?;
        } else {
            writeln!(out, "# {line}")?;
        }
    }
    Ok(())
}

/// One row per record and grid time: `trajectory, seed, time, counts_d1,
/// counts_d2, pop_d2`. `pop_d2` is empty when populations were not kept.
pub fn write_trajectories_csv<W: Write>(out: &mut W, records: &[TrajectoryRecord], provenance: &str) -> io::Result<()> {
    write_provenance(out, provenance)?;
    writeln!(out, "trajectory,seed,time,counts_d1,counts_d2,pop_d2")?;
    for (i, r) in records.iter().enumerate() {
        for idx in 0..r.grid.len() {
            let pop = r.population_d2.as_ref().map(|p| fmt_f64(p[idx])).unwrap_or_default();
            writeln!(
                out,
                "{i},{},{},{},{},{pop}",
                r.seed,
                fmt_f64(r.grid.time(idx)),
                r.counts_d1[idx],
                r.counts_d2[idx],
            )?;
        }
    }
    Ok(())
}

/// Columns `phi_tilde, value, stderr, time, observable, threshold, n_traj, seed`.
pub fn write_signal_csv<W: Write>(out: &mut W, curves: &[SignalCurve], provenance: &str) -> io::Result<()> {
    write_provenance(out, provenance)?;
    writeln!(out, "phi_tilde,value,stderr,time,observable,threshold,n_traj,seed")?;
    for c in curves {
        for p in &c.points {
            writeln!(
                out,
                "{},{},{},{},{},{},{},{}",
                fmt_f64(p.phi_tilde),
                fmt_f64(p.value),
                fmt_f64(p.stderr),
                fmt_f64(c.time),
                c.observable.name(),
                c.threshold,
                c.n_traj,
                c.master_seed,
            )?;
        }
    }
    Ok(())
}

/// Columns `n, fisher`.
pub fn write_fisher_csv<W: Write>(out: &mut W, result: &FisherResult, provenance: &str) -> io::Result<()> {
    write_provenance(out, provenance)?;
    writeln!(out, "n,fisher")?;
    for (n, f) in result.n_values.iter().zip(&result.f_values) {
        writeln!(out, "{n},{}", fmt_f64(*f))?;
    }
    Ok(())
}

/// Columns `observable, time, mean, variance, gradient, gradient_stderr,
/// delta_phi_sq, zero_gradient, bound`. Unbounded or missing values are empty.
pub fn write_uncertainty_csv<W: Write>(
    out: &mut W,
    results: &[UncertaintyResult],
    bound: &dyn Fn(f64) -> Option<f64>,
    provenance: &str,
) -> io::Result<()> {
    write_provenance(out, provenance)?;
    writeln!(
        out,
        "observable,time,mean,variance,gradient,gradient_stderr,delta_phi_sq,zero_gradient,bound"
    )?;
    let opt = |v: Option<f64>| v.map(fmt_f64).unwrap_or_default();
    for r in results {
        for (k, &t) in r.times.iter().enumerate() {
            writeln!(
                out,
                "{},{},{},{},{},{},{},{},{}",
                r.observable.name(),
                fmt_f64(t),
                fmt_f64(r.mean_of_o[k]),
                fmt_f64(r.variance_of_o[k]),
                fmt_f64(r.gradient_of_o[k]),
                fmt_f64(r.gradient_stderr[k]),
                opt(r.delta_phi_sq[k]),
                r.delta_phi_sq[k].is_none(),
                opt(bound(t)),
            )?;
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Serialize)]
pub struct HistogramEntry {
    pub counts_d1: u32,
    pub counts_d2: u32,
    pub n: u64,
}

#[derive(Debug, Clone, Serialize)]
pub struct GridSummary {
    pub time: f64,
    pub histogram: Vec<HistogramEntry>,
    /// `[threshold, d1, d2, total, both]` exceedance tallies.
    pub tallies: Vec<[u64; 5]>,
}

/// JSON form of [`EnsembleStats`].
#[derive(Debug, Clone, Serialize)]
pub struct EnsembleSummary<C: Serialize> {
    pub config: C,
    pub n_traj: u64,
    pub master_seed: u64,
    pub thresholds: Vec<u32>,
    pub aborted: u64,
    pub abort_fraction: f64,
    pub unsound_steps: u64,
    pub grid: Vec<GridSummary>,
}

impl<C: Serialize> EnsembleSummary<C> {
    pub fn new(config: C, stats: &EnsembleStats) -> Self {
        let grid = (0..stats.grid.len())
            .map(|idx| GridSummary {
                time: stats.grid.time(idx),
                histogram: stats.histograms[idx]
                    .iter()
                    .map(|(&(counts_d1, counts_d2), &n)| HistogramEntry {
                        counts_d1,
                        counts_d2,
                        n,
                    })
                    .collect(),
                tallies: stats
                    .thresholds
                    .iter()
                    .zip(&stats.tallies[idx])
                    .map(|(&th, t)| [u64::from(th), t.d1, t.d2, t.total, t.both])
                    .collect(),
            })
            .collect();
        Self {
            config,
            n_traj: stats.n_traj,
            master_seed: stats.master_seed,
            thresholds: stats.thresholds.clone(),
            aborted: stats.aborted,
            abort_fraction: stats.abort_fraction(),
            unsound_steps: stats.unsound_steps,
            grid,
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct BoundSample {
    pub time: f64,
    pub n_steps: f64,
    /// `None` when the fit predicts no information at this time.
    pub bound: Option<f64>,
}

/// JSON form of a Fisher scan.
#[derive(Debug, Clone, Serialize)]
pub struct FisherReport<C: Serialize> {
    pub config: C,
    pub dt: f64,
    pub phi1: f64,
    pub phi2: f64,
    pub feedback: FeedbackConfig,
    pub n_values: Vec<usize>,
    pub f_values: Vec<f64>,
    pub total_probability: Vec<f64>,
    pub fit: FitOutcome,
    /// The bound is extrapolated from short records and is an estimate only.
    pub bound_samples: Vec<BoundSample>,
}

impl<C: Serialize> FisherReport<C> {
    pub fn new(config: C, result: &FisherResult, feedback: FeedbackConfig, times: &[f64]) -> Self {
        Self {
            config,
            dt: result.dt,
            phi1: result.phi1,
            phi2: result.phi2,
            feedback,
            n_values: result.n_values.clone(),
            f_values: result.f_values.clone(),
            total_probability: result.total_probability.clone(),
            fit: result.fit,
            bound_samples: times
                .iter()
                .map(|&t| BoundSample {
                    time: t,
                    n_steps: t / result.dt,
                    bound: result.bound_at(t),
                })
                .collect(),
        }
    }
}

/// JSON form of the uncertainty analysis.
#[derive(Debug, Clone, Serialize)]
pub struct UncertaintyReport<C: Serialize> {
    pub config: C,
    pub results: Vec<UncertaintyResult>,
    pub bound_samples: Option<Vec<BoundSample>>,
}
