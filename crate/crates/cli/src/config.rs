//! TOML run configuration.
//!
//! Complex amplitudes are written as `"re+imi"` strings, e.g. `"1+0i"`,
//! `"-0.5-2i"`, `"3i"` or `"2"`.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use qjm_core::estimator::{DEFAULT_DELTA_PHI, DEFAULT_THRESHOLD};
use qjm_core::fisher::DEFAULT_STEP_CAP;
use qjm_core::{Basis, FeedbackConfig, InitialState, ModeAmplitudes, NetworkParams, C64};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Complex(pub C64);

impl fmt::Display for Complex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sign = if self.0.im.is_sign_negative() { '-' } else { '+' };
        write!(f, "{}{sign}{}i", self.0.re, self.0.im.abs())
    }
}

impl FromStr for Complex {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let t: String = s.chars().filter(|c| !c.is_whitespace()).collect();
        let bad = || format!("cannot parse complex number {s:?}");
        let num = |x: &str| x.parse::<f64>().map_err(|_| bad());
        let Some(body) = t.strip_suffix('i') else {
            return Ok(Complex(C64::new(num(&t)?, 0.0)));
        };
        // split at the last sign that is neither leading nor an exponent sign
        let split = body
            .char_indices()
            .filter(|&(k, c)| (c == '+' || c == '-') && k > 0 && !matches!(body.as_bytes()[k - 1], b'e' | b'E'))
            .map(|(k, _)| k)
            .next_back();
        let imag = |x: &str| match x {
            "" | "+" => Ok(1.0),
            "-" => Ok(-1.0),
            _ => num(x),
        };
        let z = match split {
            Some(k) => C64::new(num(&body[..k])?, imag(&body[k..])?),
            None => C64::new(0.0, imag(body)?),
        };
        Ok(Complex(z))
    }
}

impl Serialize for Complex {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Complex {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

fn default_kappa() -> f64 {
    1.0
}
fn default_eps_jump() -> f64 {
    NetworkParams::DEFAULT_EPS_JUMP
}
fn default_abort_population() -> f64 {
    NetworkParams::DEFAULT_ABORT_POPULATION
}
fn default_sample_every() -> usize {
    100
}
fn default_threshold() -> u32 {
    DEFAULT_THRESHOLD
}
fn default_thresholds() -> Vec<u32> {
    vec![DEFAULT_THRESHOLD]
}
fn default_true() -> bool {
    true
}
fn default_phi_min() -> f64 {
    -PI
}
fn default_phi_max() -> f64 {
    PI
}
fn default_points() -> usize {
    21
}
fn default_signal_times() -> Vec<f64> {
    vec![0.5, 1.0, 10.0]
}
fn default_phi_star() -> f64 {
    PI / 10.0
}
fn default_delta_phi() -> f64 {
    DEFAULT_DELTA_PHI
}
fn default_subensembles() -> usize {
    10
}
fn default_n_max() -> usize {
    12
}
fn default_step_cap() -> usize {
    DEFAULT_STEP_CAP
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkSection {
    #[serde(default)]
    pub phi1: f64,
    #[serde(default)]
    pub phi2: f64,
    #[serde(default = "default_kappa")]
    pub kappa1: f64,
    #[serde(default = "default_kappa")]
    pub kappa2: f64,
    pub dt: f64,
    #[serde(default = "default_eps_jump")]
    pub eps_jump: f64,
    #[serde(default = "default_abort_population")]
    pub abort_population: f64,
}

/// Laser-basis pulse amplitudes fired on each detector's click.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeedbackSection {
    pub beta_d1: [Complex; 2],
    pub beta_d2: [Complex; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "kebab-case")]
pub enum InitialSection {
    /// Explicit cavity amplitudes `gamma(0)`.
    Cavity { gamma: [Complex; 2] },
    /// Vacuum followed by one combined feedback pulse.
    FeedbackPulse,
}

impl Default for InitialSection {
    fn default() -> Self {
        let one = Complex(C64::new(1.0, 0.0));
        InitialSection::Cavity { gamma: [one, one] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrajectoriesSection {
    pub horizon: f64,
    pub n_traj: usize,
    #[serde(default = "default_sample_every")]
    pub sample_every: usize,
    #[serde(default = "default_true")]
    pub record_population: bool,
    /// Count thresholds tallied in the summary.
    #[serde(default = "default_thresholds")]
    pub thresholds: Vec<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SignalSection {
    #[serde(default = "default_phi_min")]
    pub phi_min: f64,
    #[serde(default = "default_phi_max")]
    pub phi_max: f64,
    /// Evenly spaced grid points including both ends.
    #[serde(default = "default_points")]
    pub points: usize,
    #[serde(default = "default_signal_times")]
    pub times: Vec<f64>,
    pub n_traj: usize,
    #[serde(default = "default_threshold")]
    pub threshold: u32,
    #[serde(default = "default_sample_every")]
    pub sample_every: usize,
}

impl SignalSection {
    pub fn phi_grid(&self) -> Vec<f64> {
        if self.points == 1 {
            return vec![self.phi_min];
        }
        let step = (self.phi_max - self.phi_min) / (self.points - 1) as f64;
        (0..self.points).map(|k| self.phi_min + k as f64 * step).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UncertaintySection {
    #[serde(default = "default_phi_star")]
    pub phi_star: f64,
    #[serde(default = "default_delta_phi")]
    pub delta_phi: f64,
    pub times: Vec<f64>,
    #[serde(default = "default_subensembles")]
    pub n_subensembles: usize,
    pub n_traj_per_sub: usize,
    #[serde(default = "default_threshold")]
    pub threshold: u32,
    #[serde(default = "default_sample_every")]
    pub sample_every: usize,
    /// Output of the `fisher` command to draw the bound from, relative to
    /// the config file.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fisher_json: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FisherSection {
    #[serde(default = "default_n_max")]
    pub n_max: usize,
    #[serde(default = "default_step_cap")]
    pub step_cap: usize,
    /// Bin width for the enumeration; defaults to the network's.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
    /// Times at which the extrapolated bound is sampled.
    #[serde(default)]
    pub bound_times: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub workers: Option<usize>,
    pub network: NetworkSection,
    pub feedback: FeedbackSection,
    #[serde(default)]
    pub initial: InitialSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trajectories: Option<TrajectoriesSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub signal: Option<SignalSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub uncertainty: Option<UncertaintySection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fisher: Option<FisherSection>,
}

fn check_times(what: &str, times: &[f64]) -> Result<(), String> {
    if times.is_empty() {
        return Err(format!("{what}: at least one time is required"));
    }
    if times.iter().any(|t| !(t.is_finite() && *t > 0.0)) {
        return Err(format!("{what}: times must be positive and finite"));
    }
    Ok(())
}

fn check_positive(what: &str, n: usize) -> Result<(), String> {
    if n == 0 {
        return Err(format!("{what} must be at least 1"));
    }
    Ok(())
}

impl RunConfig {
    /// Parses and validates.
    pub fn from_toml_str(text: &str) -> Result<Self, String> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| e.to_string())?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config always serializes")
    }

    /// The configuration as echoed into output files. The worker count is
    /// left out because it never changes results.
    pub fn resolved(&self) -> RunConfig {
        RunConfig {
            workers: None,
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        self.params()?;
        self.feedback()?;
        let init = self.initial();
        if let InitialState::Cavity(g) = init {
            if !g.is_finite() {
                return Err("initial amplitudes must be finite".into());
            }
        }
        if let Some(t) = &self.trajectories {
            check_times("trajectories.horizon", &[t.horizon])?;
            check_positive("trajectories.n_traj", t.n_traj)?;
            check_positive("trajectories.sample_every", t.sample_every)?;
        }
        if let Some(s) = &self.signal {
            check_times("signal.times", &s.times)?;
            check_positive("signal.n_traj", s.n_traj)?;
            check_positive("signal.points", s.points)?;
            check_positive("signal.sample_every", s.sample_every)?;
            if !(s.phi_min.is_finite() && s.phi_max.is_finite()) {
                return Err("signal phase range must be finite".into());
            }
        }
        if let Some(u) = &self.uncertainty {
            check_times("uncertainty.times", &u.times)?;
            check_positive("uncertainty.n_traj_per_sub", u.n_traj_per_sub)?;
            check_positive("uncertainty.sample_every", u.sample_every)?;
            if u.n_subensembles < 2 {
                return Err("uncertainty.n_subensembles must be at least 2".into());
            }
            if !(u.delta_phi > 0.0 && u.delta_phi.is_finite()) || !u.phi_star.is_finite() {
                return Err("uncertainty phases must be finite with delta_phi > 0".into());
            }
        }
        if let Some(f) = &self.fisher {
            check_positive("fisher.n_max", f.n_max)?;
            if let Some(dt) = f.dt {
                self.params()?.with_dt(dt).validate().map_err(|e| e.to_string())?;
            }
            if !f.bound_times.is_empty() {
                check_times("fisher.bound_times", &f.bound_times)?;
            }
        }
        Ok(())
    }

    pub fn params(&self) -> Result<NetworkParams, String> {
        let n = &self.network;
        let p = NetworkParams {
            phi1: n.phi1,
            phi2: n.phi2,
            kappa1: n.kappa1,
            kappa2: n.kappa2,
            dt: n.dt,
            eps_jump: n.eps_jump,
            abort_population: n.abort_population,
        };
        p.validate().map_err(|e| e.to_string())?;
        Ok(p)
    }

    pub fn feedback(&self) -> Result<FeedbackConfig, String> {
        let amp = |b: &[Complex; 2]| ModeAmplitudes::new(b[0].0, b[1].0, Basis::Feedback);
        FeedbackConfig::new(amp(&self.feedback.beta_d1), amp(&self.feedback.beta_d2)).map_err(|e| e.to_string())
    }

    pub fn initial(&self) -> InitialState {
        match &self.initial {
            InitialSection::Cavity { gamma } => {
                InitialState::Cavity(ModeAmplitudes::new(gamma[0].0, gamma[1].0, Basis::Cavity))
            }
            InitialSection::FeedbackPulse => InitialState::FeedbackPulse,
        }
    }
}
