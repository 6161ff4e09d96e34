//! `qjm`: trajectory, signal, uncertainty and Fisher runs from a TOML config.

mod config;

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use qjm_core::estimator::{phase_uncertainty_all, signal_curves, Observable, ScanSetup, UncertaintyRequest};
use qjm_core::export::{
    write_fisher_csv, write_signal_csv, write_trajectories_csv, write_uncertainty_csv, BoundSample, EnsembleSummary,
    FisherReport, UncertaintyReport,
};
use qjm_core::fisher::{fisher_scan, EnumerationOptions, FitOutcome};
use qjm_core::trajectory::{simulate_records, EnsembleStats, SimulationOptions};

use config::RunConfig;

#[derive(Parser)]
#[command(
    name = "qjm",
    version,
    about = "Quantum jump metrology in a two-cavity feedback network"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Individual trajectories: counts and |alpha_2|^2 over time.
    Trajectories(Common),
    /// Threshold signals as functions of the phase difference.
    Signal(Common),
    /// Phase uncertainty from subensemble variance and signal slope.
    Uncertainty(Common),
    /// Exact Fisher information for short records and its quadratic fit.
    Fisher(Common),
}

#[derive(Args)]
struct Common {
    /// TOML run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Output directory, created if missing.
    #[arg(long, default_value = ".")]
    out: PathBuf,
    /// Worker threads; 0 uses every available core.
    #[arg(long)]
    workers: Option<usize>,
    /// Overrides the master seed from the config.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Error)]
enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("budget error: {0}")]
    Budget(String),
    #[error("io error: {0}")]
    Io(String),
    #[error("{0}")]
    Numerical(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Numerical(_) => 1,
            CliError::Config(_) => 2,
            CliError::Budget(_) => 3,
            CliError::Io(_) => 4,
        }
    }
}

impl From<qjm_core::Error> for CliError {
    fn from(e: qjm_core::Error) -> Self {
        use qjm_core::Error as E;
        match e {
            E::BudgetExceeded { .. } => CliError::Budget(e.to_string()),
            E::Normalization { .. } => CliError::Numerical(e.to_string()),
            _ => CliError::Config(e.to_string()),
        }
    }
}

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> CliError + '_ {
    move |e| CliError::Io(format!("{}: {e}", path.display()))
}

struct Run {
    cfg: RunConfig,
    config_dir: PathBuf,
    out: PathBuf,
    workers: usize,
}

impl Run {
    fn load(args: &Common) -> Result<Self, CliError> {
        let text = fs::read_to_string(&args.config).map_err(io_err(&args.config))?;
        let mut cfg = RunConfig::from_toml_str(&text).map_err(CliError::Config)?;
        if let Some(seed) = args.seed {
            cfg.seed = seed;
        }
        let workers = args.workers.or(cfg.workers).unwrap_or(0);
        fs::create_dir_all(&args.out).map_err(io_err(&args.out))?;
        Ok(Self {
            cfg,
            config_dir: args.config.parent().map(Path::to_path_buf).unwrap_or_default(),
            out: args.out.clone(),
            workers,
        })
    }

    fn provenance(&self) -> String {
        self.cfg.resolved().to_toml_string()
    }

    fn section<'a, T>(&self, s: &'a Option<T>, name: &str) -> Result<&'a T, CliError> {
        s.as_ref()
            .ok_or_else(|| CliError::Config(format!("missing [{name}] section")))
    }

    fn write(
        &self,
        name: &str,
        body: impl FnOnce(&mut BufWriter<File>) -> std::io::Result<()>,
    ) -> Result<(), CliError> {
        let path = self.out.join(name);
        let file = File::create(&path).map_err(io_err(&path))?;
        let mut w = BufWriter::new(file);
        body(&mut w).and_then(|_| w.flush()).map_err(io_err(&path))
    }

    fn write_json<T: Serialize>(&self, name: &str, value: &T) -> Result<(), CliError> {
        self.write(name, |w| {
            serde_json::to_writer_pretty(&mut *w, value)?;
            writeln!(w)
        })
    }

    fn scan_setup(&self, sample_every: usize) -> Result<ScanSetup, CliError> {
        Ok(ScanSetup {
            params: self.cfg.params().map_err(CliError::Config)?,
            feedback: self.cfg.feedback().map_err(CliError::Config)?,
            initial: self.cfg.initial(),
            sample_every,
            workers: self.workers,
        })
    }
}

fn cmd_trajectories(run: &Run) -> Result<(), CliError> {
    let sec = run.section(&run.cfg.trajectories, "trajectories")?;
    let setup = run.scan_setup(sec.sample_every)?;
    let opts = SimulationOptions {
        sample_every: sec.sample_every,
        record_population: sec.record_population,
        record_events: false,
    };
    let records = simulate_records(
        &setup.initial,
        &setup.params,
        &setup.feedback,
        sec.horizon,
        sec.n_traj,
        run.cfg.seed,
        run.workers,
        &opts,
    )?;
    let provenance = run.provenance();
    run.write("trajectories.csv", |w| write_trajectories_csv(w, &records, &provenance))?;
    let stats = EnsembleStats::from_records(&records, &sec.thresholds, run.cfg.seed)?;
    run.write_json(
        "trajectories_summary.json",
        &EnsembleSummary::new(run.cfg.resolved(), &stats),
    )
}

fn cmd_signal(run: &Run) -> Result<(), CliError> {
    let sec = run.section(&run.cfg.signal, "signal")?;
    let setup = run.scan_setup(sec.sample_every)?;
    let curves = signal_curves(
        &setup,
        &sec.phi_grid(),
        &sec.times,
        sec.n_traj,
        run.cfg.seed,
        sec.threshold,
    )?;
    let provenance = run.provenance();
    for obs in Observable::ALL {
        let mine: Vec<_> = curves.iter().filter(|c| c.observable == obs).cloned().collect();
        run.write(&format!("signal_{}.csv", obs.name()), |w| {
            write_signal_csv(w, &mine, &provenance)
        })?;
    }
    Ok(())
}

/// The parts of a `fisher` output needed to draw the bound.
#[derive(Deserialize)]
struct FisherFile {
    dt: f64,
    fit: FitOutcome,
}

fn cmd_uncertainty(run: &Run) -> Result<(), CliError> {
    let sec = run.section(&run.cfg.uncertainty, "uncertainty")?;
    let setup = run.scan_setup(sec.sample_every)?;
    let req = UncertaintyRequest {
        phi_star: sec.phi_star,
        delta_phi: sec.delta_phi,
        times: sec.times.clone(),
        n_subensembles: sec.n_subensembles,
        n_traj_per_sub: sec.n_traj_per_sub,
        master_seed: run.cfg.seed,
        threshold: sec.threshold,
    };
    let fisher = match &sec.fisher_json {
        Some(rel) => {
            let path = run.config_dir.join(rel);
            let text = fs::read_to_string(&path).map_err(io_err(&path))?;
            let f: FisherFile =
                serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
            Some(f)
        }
        None => None,
    };
    let bound = |t: f64| {
        fisher
            .as_ref()
            .and_then(|f| f.fit.fit().and_then(|q| q.bound_at(t, f.dt)))
    };
    let results = phase_uncertainty_all(&setup, &req)?;
    let provenance = run.provenance();
    run.write("uncertainty.csv", |w| {
        write_uncertainty_csv(w, &results, &bound, &provenance)
    })?;
    let bound_samples = fisher.as_ref().map(|f| {
        sec.times
            .iter()
            .map(|&t| BoundSample {
                time: t,
                n_steps: t / f.dt,
                bound: bound(t),
            })
            .collect()
    });
    run.write_json(
        "uncertainty.json",
        &UncertaintyReport {
            config: run.cfg.resolved(),
            results,
            bound_samples,
        },
    )
}

fn cmd_fisher(run: &Run) -> Result<(), CliError> {
    let sec = run.section(&run.cfg.fisher, "fisher")?;
    let mut params = run.cfg.params().map_err(CliError::Config)?;
    if let Some(dt) = sec.dt {
        params = params.with_dt(dt);
    }
    let feedback = run.cfg.feedback().map_err(CliError::Config)?;
    let options = EnumerationOptions {
        step_cap: sec.step_cap,
        workers: run.workers,
    };
    let result = fisher_scan(&run.cfg.initial(), &params, &feedback, sec.n_max, &options)?;
    let provenance = run.provenance();
    run.write("fisher.csv", |w| write_fisher_csv(w, &result, &provenance))?;
    run.write_json(
        "fisher.json",
        &FisherReport::new(run.cfg.resolved(), &result, feedback, &sec.bound_times),
    )
}

type Handler = fn(&Run) -> Result<(), CliError>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (args, cmd): (&Common, Handler) = match &cli.command {
        Command::Trajectories(a) => (a, cmd_trajectories),
        Command::Signal(a) => (a, cmd_signal),
        Command::Uncertainty(a) => (a, cmd_uncertainty),
        Command::Fisher(a) => (a, cmd_fisher),
    };
    match Run::load(args).and_then(|run| cmd(&run)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("qjm: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
