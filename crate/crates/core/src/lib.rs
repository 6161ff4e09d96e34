//! Quantum jump metrology in a two-cavity network with photon-triggered
//! feedback.
//!
//! Two leaky cavities in coherent states are watched by two photon
//! detectors through a beamsplitter network; every click fires a laser
//! pulse that displaces the cavities through a second network whose arms
//! carry the phases `phi1` and `phi2`. The crate covers:
//!
//! - [`network`]: mode bases and the unitary transforms between them,
//! - [`dynamics`]: per-bin outcome probabilities and kick-then-decay maps,
//! - [`trajectory`]: seeded Monte Carlo trajectories and ensembles,
//! - [`estimator`]: threshold signals and error-propagated phase uncertainty,
//! - [`fisher`]: exact Fisher information by enumerating all records,
//! - [`export`]: CSV and JSON output formats.
//!
//! Ensembles and enumerations run on rayon when the `parallel` feature is
//! on (the default). Results are bit-identical for any worker count.

pub mod dynamics;
pub mod error;
pub mod estimator;
pub mod exec;
pub mod export;
pub mod fisher;
pub mod network;
pub mod summation;
pub mod trajectory;

pub use error::{Error, Result};
pub use network::{Basis, FeedbackConfig, ModeAmplitudes, NetworkParams, C64};
pub use trajectory::InitialState;
