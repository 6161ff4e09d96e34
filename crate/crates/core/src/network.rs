//! Two-mode coherent states and the linear-optics transforms between the
//! cavity (`c`), detector (`a`) and feedback-laser (`b`) mode bases.
//!
//! The network is two beamsplitters with one phase shifter on each arm.
//! Every transform is a 2x2 unitary, so all linear algebra here is written
//! out by hand for the two-mode case.

use std::f64::consts::FRAC_1_SQRT_2;
use std::fmt;
use std::ops::{Add, Mul, Sub};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type C64 = Complex64;

const I: C64 = C64::new(0.0, 1.0);

/// Which set of field modes a pair of amplitudes is written in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Basis {
    /// Cavity modes `c1`, `c2`.
    Cavity,
    /// Modes seen by the two photon detectors, `a1`, `a2`.
    Detector,
    /// Modes addressed by the two feedback lasers, `b1`, `b2`.
    Feedback,
}

impl fmt::Display for Basis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Basis::Cavity => "cavity",
            Basis::Detector => "detector",
            Basis::Feedback => "feedback",
        };
        f.write_str(s)
    }
}

/// Coherent amplitudes of the two modes, tagged with their basis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModeAmplitudes {
    pub a1: C64,
    pub a2: C64,
    pub basis: Basis,
}

impl ModeAmplitudes {
    pub const fn new(a1: C64, a2: C64, basis: Basis) -> Self {
        Self { a1, a2, basis }
    }

    pub const fn vacuum(basis: Basis) -> Self {
        Self::new(C64::new(0.0, 0.0), C64::new(0.0, 0.0), basis)
    }

    /// Real-valued amplitudes, a convenience for the common case.
    pub fn real(a1: f64, a2: f64, basis: Basis) -> Self {
        Self::new(C64::new(a1, 0.0), C64::new(a2, 0.0), basis)
    }

    pub fn is_finite(&self) -> bool {
        self.a1.is_finite() && self.a2.is_finite()
    }

    /// Mean photon number `|a1|^2 + |a2|^2`.
    pub fn norm_sqr(&self) -> f64 {
        self.a1.norm_sqr() + self.a2.norm_sqr()
    }

    pub fn populations(&self) -> [f64; 2] {
        [self.a1.norm_sqr(), self.a2.norm_sqr()]
    }

    pub fn from_array(a: [C64; 2], basis: Basis) -> Self {
        Self::new(a[0], a[1], basis)
    }

    pub fn to_array(self) -> [C64; 2] {
        [self.a1, self.a2]
    }

    pub fn with_basis(self, basis: Basis) -> Self {
        Self { basis, ..self }
    }

    pub(crate) fn expect_basis(&self, expected: Basis) -> Result<()> {
        if self.basis == expected {
            Ok(())
        } else {
            Err(Error::BasisMismatch {
                expected,
                found: self.basis,
            })
        }
    }
}

impl Add for ModeAmplitudes {
    type Output = ModeAmplitudes;

    /// Componentwise sum. Both operands must share a basis; the left one wins
    /// in release builds.
    fn add(self, rhs: Self) -> Self {
        debug_assert_eq!(self.basis, rhs.basis);
        Self::new(self.a1 + rhs.a1, self.a2 + rhs.a2, self.basis)
    }
}

/// Plain 2x2 complex matrix, row-major.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Mat2 {
    pub m11: C64,
    pub m12: C64,
    pub m21: C64,
    pub m22: C64,
}

impl Mat2 {
    pub const fn new(m11: C64, m12: C64, m21: C64, m22: C64) -> Self {
        Self { m11, m12, m21, m22 }
    }

    pub const fn identity() -> Self {
        let one = C64::new(1.0, 0.0);
        let zero = C64::new(0.0, 0.0);
        Self::new(one, zero, zero, one)
    }

    pub const fn zero() -> Self {
        let zero = C64::new(0.0, 0.0);
        Self::new(zero, zero, zero, zero)
    }

    pub fn diag(d1: C64, d2: C64) -> Self {
        Self::new(d1, C64::new(0.0, 0.0), C64::new(0.0, 0.0), d2)
    }

    pub fn scale(&self, s: C64) -> Self {
        Self::new(self.m11 * s, self.m12 * s, self.m21 * s, self.m22 * s)
    }

    /// Conjugate transpose.
    pub fn adjoint(&self) -> Self {
        Self::new(self.m11.conj(), self.m21.conj(), self.m12.conj(), self.m22.conj())
    }

    pub fn det(&self) -> C64 {
        self.m11 * self.m22 - self.m12 * self.m21
    }

    pub fn apply(&self, v: [C64; 2]) -> [C64; 2] {
        [self.m11 * v[0] + self.m12 * v[1], self.m21 * v[0] + self.m22 * v[1]]
    }

    /// Largest entrywise modulus of `self - other`.
    pub fn max_abs_diff(&self, other: &Mat2) -> f64 {
        let d = *self - *other;
        [d.m11, d.m12, d.m21, d.m22]
            .iter()
            .map(|z| z.norm())
            .fold(0.0, f64::max)
    }

    /// Deviation of `self^† self` from the identity (max entry modulus).
    pub fn unitarity_defect(&self) -> f64 {
        (self.adjoint() * *self).max_abs_diff(&Mat2::identity())
    }

    pub fn is_finite(&self) -> bool {
        self.m11.is_finite() && self.m12.is_finite() && self.m21.is_finite() && self.m22.is_finite()
    }
}

impl Mul for Mat2 {
    type Output = Mat2;

    fn mul(self, r: Mat2) -> Mat2 {
        Mat2::new(
            self.m11 * r.m11 + self.m12 * r.m21,
            self.m11 * r.m12 + self.m12 * r.m22,
            self.m21 * r.m11 + self.m22 * r.m21,
            self.m21 * r.m12 + self.m22 * r.m22,
        )
    }
}

impl Add for Mat2 {
    type Output = Mat2;

    fn add(self, r: Mat2) -> Mat2 {
        Mat2::new(self.m11 + r.m11, self.m12 + r.m12, self.m21 + r.m21, self.m22 + r.m22)
    }
}

impl Sub for Mat2 {
    type Output = Mat2;

    fn sub(self, r: Mat2) -> Mat2 {
        Mat2::new(self.m11 - r.m11, self.m12 - r.m12, self.m21 - r.m21, self.m22 - r.m22)
    }
}

/// A unitary map `y = M x` from amplitudes in one basis to another.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BasisTransform {
    pub matrix: Mat2,
    pub from: Basis,
    pub to: Basis,
}

impl BasisTransform {
    pub const fn new(matrix: Mat2, from: Basis, to: Basis) -> Self {
        Self { matrix, from, to }
    }

    /// The reverse transform; for a unitary this is the conjugate transpose.
    pub fn inverse(&self) -> Self {
        Self::new(self.matrix.adjoint(), self.to, self.from)
    }

    /// `self` after `first`: maps `first.from` to `self.to`.
    pub fn after(&self, first: &BasisTransform) -> Result<Self> {
        if first.to != self.from {
            return Err(Error::BasisMismatch {
                expected: self.from,
                found: first.to,
            });
        }
        Ok(Self::new(self.matrix * first.matrix, first.from, self.to))
    }
}

/// Phases and decay rates of the network plus the coarse-grained step.
///
/// Rates are in units of a reference decay rate `kappa`, times in units of
/// `1/kappa`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NetworkParams {
    pub phi1: f64,
    pub phi2: f64,
    pub kappa1: f64,
    pub kappa2: f64,
    pub dt: f64,
    /// Per-step emission probability above which the one-photon-per-bin
    /// approximation is flagged as unsound.
    pub eps_jump: f64,
    /// Trajectories abort once either detector-mode population exceeds this.
    pub abort_population: f64,
}

impl NetworkParams {
    pub const DEFAULT_EPS_JUMP: f64 = 0.05;
    pub const DEFAULT_ABORT_POPULATION: f64 = 1e12;

    pub fn new(phi1: f64, phi2: f64, kappa1: f64, kappa2: f64, dt: f64) -> Result<Self> {
        let p = Self {
            phi1,
            phi2,
            kappa1,
            kappa2,
            dt,
            eps_jump: Self::DEFAULT_EPS_JUMP,
            abort_population: Self::DEFAULT_ABORT_POPULATION,
        };
        p.validate()?;
        Ok(p)
    }

    /// Equal unit decay rates, both phases zero.
    pub fn symmetric(dt: f64) -> Result<Self> {
        Self::new(0.0, 0.0, 1.0, 1.0, dt)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::InvalidParams(what.to_string()));
        if !self.phi1.is_finite() || !self.phi2.is_finite() {
            return bad("phases must be finite");
        }
        if !(self.kappa1 > 0.0 && self.kappa1.is_finite()) {
            return bad("kappa1 must be positive and finite");
        }
        if !(self.kappa2 > 0.0 && self.kappa2.is_finite()) {
            return bad("kappa2 must be positive and finite");
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return bad("dt must be positive and finite");
        }
        if !(self.eps_jump > 0.0 && self.eps_jump <= 1.0) {
            return bad("eps_jump must lie in (0, 1]");
        }
        if self.abort_population.is_nan() || self.abort_population <= 0.0 {
            return bad("abort_population must be positive");
        }
        Ok(())
    }

    /// Phase difference `phi1 - phi2` that the network measures.
    pub fn phase_difference(&self) -> f64 {
        self.phi1 - self.phi2
    }

    pub fn with_phases(self, phi1: f64, phi2: f64) -> Self {
        Self { phi1, phi2, ..self }
    }

    pub fn with_dt(self, dt: f64) -> Self {
        Self { dt, ..self }
    }

    pub fn kappas(&self) -> [f64; 2] {
        [self.kappa1, self.kappa2]
    }
}

/// Feedback displacements in the laser (`b`) basis: `beta_d1` fires when
/// detector 1 clicks, `beta_d2` when detector 2 clicks.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeedbackConfig {
    pub beta_d1: ModeAmplitudes,
    pub beta_d2: ModeAmplitudes,
}

impl FeedbackConfig {
    pub fn new(beta_d1: ModeAmplitudes, beta_d2: ModeAmplitudes) -> Result<Self> {
        let f = Self { beta_d1, beta_d2 };
        f.validate()?;
        Ok(f)
    }

    /// No feedback at all; the cavities just decay.
    pub fn none() -> Self {
        Self {
            beta_d1: ModeAmplitudes::vacuum(Basis::Feedback),
            beta_d2: ModeAmplitudes::vacuum(Basis::Feedback),
        }
    }

    /// Cross feedback: a detector-1 click pulses laser 2 with `beta2_on_d1`,
    /// a detector-2 click pulses laser 1 with `beta1_on_d2`.
    pub fn crossed(beta2_on_d1: C64, beta1_on_d2: C64) -> Self {
        let zero = C64::new(0.0, 0.0);
        Self {
            beta_d1: ModeAmplitudes::new(zero, beta2_on_d1, Basis::Feedback),
            beta_d2: ModeAmplitudes::new(beta1_on_d2, zero, Basis::Feedback),
        }
    }

    /// `beta_2^(1) = 1`, `beta_1^(2) = 2`, the strengths used for the
    /// reference figures.
    pub fn reference() -> Self {
        Self::crossed(C64::new(1.0, 0.0), C64::new(2.0, 0.0))
    }

    pub fn validate(&self) -> Result<()> {
        self.beta_d1.expect_basis(Basis::Feedback)?;
        self.beta_d2.expect_basis(Basis::Feedback)?;
        if !self.beta_d1.is_finite() || !self.beta_d2.is_finite() {
            return Err(Error::InvalidParams("feedback amplitudes must be finite".into()));
        }
        Ok(())
    }

    pub fn is_zero(&self) -> bool {
        self.beta_d1.norm_sqr() == 0.0 && self.beta_d2.norm_sqr() == 0.0
    }

    /// `beta^(1) + beta^(2)`, the kick for a double click.
    pub fn combined(&self) -> ModeAmplitudes {
        self.beta_d1 + self.beta_d2
    }
}

/// The three basis changes the dynamics needs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NetworkTransforms {
    /// Feedback modes to cavity modes.
    pub cb: BasisTransform,
    /// Cavity modes to detector modes.
    pub ac: BasisTransform,
    /// Feedback modes to detector modes, `M_ac M_cb`.
    pub ab: BasisTransform,
}

fn beamsplitter() -> Mat2 {
    let s = C64::new(FRAC_1_SQRT_2, 0.0);
    Mat2::new(s, I * s, I * s, s)
}

fn phase_arm1(phi1: f64) -> Mat2 {
    Mat2::diag(C64::new(1.0, 0.0), C64::from_polar(1.0, phi1))
}

fn phase_arm2(phi2: f64) -> Mat2 {
    Mat2::diag(C64::from_polar(1.0, phi2), C64::new(1.0, 0.0))
}

/// Closed form of the feedback-to-detector matrix.
///
/// ```text
/// M_ab = 1/2 [ e2 - e1       i (e1 + e2) ]
///            [ i (e1 + e2)   e1 - e2     ]     e_k = exp(i phi_k)
/// ```
pub fn feedback_to_detector(phi1: f64, phi2: f64) -> Mat2 {
    let e1 = C64::from_polar(1.0, phi1);
    let e2 = C64::from_polar(1.0, phi2);
    let half = C64::new(0.5, 0.0);
    Mat2::new(e2 - e1, I * (e1 + e2), I * (e1 + e2), e1 - e2).scale(half)
}

/// Builds `M_cb = S_phi1 S_BS`, `M_ac = S_BS S_phi2` and `M_ab = M_ac M_cb`.
pub fn build_transforms(params: &NetworkParams) -> NetworkTransforms {
    let bs = beamsplitter();
    let cb = BasisTransform::new(phase_arm1(params.phi1) * bs, Basis::Feedback, Basis::Cavity);
    let ac = BasisTransform::new(bs * phase_arm2(params.phi2), Basis::Cavity, Basis::Detector);
    let ab = BasisTransform::new(ac.matrix * cb.matrix, Basis::Feedback, Basis::Detector);
    NetworkTransforms { cb, ac, ab }
}

/// Applies `t` to `state`; the state must already be in `t.from`.
pub fn change_basis(state: &ModeAmplitudes, t: &BasisTransform) -> Result<ModeAmplitudes> {
    state.expect_basis(t.from)?;
    let [a1, a2] = t.matrix.apply(state.to_array());
    Ok(ModeAmplitudes::new(a1, a2, t.to))
}

/// Derivatives of the three transforms with respect to `phi1` at fixed `phi2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransformDerivatives {
    pub cb: Mat2,
    pub ac: Mat2,
    pub ab: Mat2,
}

/// `dM_ab/dphi1 = 1/2 [[-i e1, -e1], [-e1, i e1]]`.
pub fn transform_derivative(params: &NetworkParams) -> Mat2 {
    let e1 = C64::from_polar(1.0, params.phi1);
    Mat2::new(-I * e1, -e1, -e1, I * e1).scale(C64::new(0.5, 0.0))
}

pub fn transform_derivatives(params: &NetworkParams) -> TransformDerivatives {
    let e1 = C64::from_polar(1.0, params.phi1);
    let s = C64::new(FRAC_1_SQRT_2, 0.0);
    let zero = C64::new(0.0, 0.0);
    TransformDerivatives {
        // only the second row of S_phi1 S_BS carries exp(i phi1)
        cb: Mat2::new(zero, zero, -e1 * s, I * e1 * s),
        ac: Mat2::zero(),
        ab: transform_derivative(params),
    }
}
