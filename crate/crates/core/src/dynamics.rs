//! Coarse-grained per-step physics in the detector basis.
//!
//! Over one bin of length `dt` each detector independently registers "no
//! photon" or "at least one photon". A bin with clicks is treated as exactly
//! one photon per clicking detector: the matching feedback kick `M_ab beta`
//! is added to the detector-basis amplitudes, and then the amplitudes decay
//! over the full bin.
//!
//! The free functions mirror the individual steps. [`Propagator`] caches
//! everything that does not depend on the state and is what the trajectory
//! sampler and the enumerator use in their inner loops.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::network::{
    build_transforms, transform_derivative, Basis, FeedbackConfig, Mat2, ModeAmplitudes, NetworkParams,
    NetworkTransforms, C64,
};

/// Outcome of one bin. Discriminants follow the `(d1, d2)` click pattern.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum DetectionEvent {
    NoClick = 0,
    ClickD2Only = 1,
    ClickD1Only = 2,
    ClickBoth = 3,
}

impl DetectionEvent {
    /// In sampling order: `00, 01, 10, 11`.
    pub const ALL: [DetectionEvent; 4] = [
        DetectionEvent::NoClick,
        DetectionEvent::ClickD2Only,
        DetectionEvent::ClickD1Only,
        DetectionEvent::ClickBoth,
    ];

    #[inline]
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    /// Count increments `(d1, d2)`.
    #[inline]
    pub fn increments(self) -> (u32, u32) {
        match self {
            DetectionEvent::NoClick => (0, 0),
            DetectionEvent::ClickD2Only => (0, 1),
            DetectionEvent::ClickD1Only => (1, 0),
            DetectionEvent::ClickBoth => (1, 1),
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            DetectionEvent::NoClick => "00",
            DetectionEvent::ClickD2Only => "01",
            DetectionEvent::ClickD1Only => "10",
            DetectionEvent::ClickBoth => "11",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EventProbabilities {
    pub p00: f64,
    pub p01: f64,
    pub p10: f64,
    pub p11: f64,
}

impl EventProbabilities {
    pub fn as_array(&self) -> [f64; 4] {
        [self.p00, self.p01, self.p10, self.p11]
    }

    pub fn from_array(p: [f64; 4]) -> Self {
        Self {
            p00: p[0],
            p01: p[1],
            p10: p[2],
            p11: p[3],
        }
    }

    #[inline]
    pub fn get(&self, event: DetectionEvent) -> f64 {
        self.as_array()[event.index()]
    }

    pub fn total(&self) -> f64 {
        self.p00 + self.p01 + self.p10 + self.p11
    }

    /// Probability of any click in the bin.
    pub fn emission_probability(&self) -> f64 {
        self.p01 + self.p10 + self.p11
    }

    /// Whether the one-photon-per-bin approximation is still reasonable.
    pub fn is_sound(&self, eps_jump: f64) -> bool {
        self.emission_probability() <= eps_jump
    }

    /// Picks an event by comparing `u` in `[0, 1)` against the cumulative
    /// probabilities in the fixed order `00, 01, 10, 11`.
    #[inline]
    pub fn sample(&self, u: f64) -> DetectionEvent {
        let mut acc = self.p00;
        if u < acc {
            return DetectionEvent::NoClick;
        }
        acc += self.p01;
        if u < acc {
            return DetectionEvent::ClickD2Only;
        }
        acc += self.p10;
        if u < acc {
            return DetectionEvent::ClickD1Only;
        }
        DetectionEvent::ClickBoth
    }
}

/// Detector-basis amplitudes together with their derivative w.r.t. `phi1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StateWithDerivative {
    pub alpha: ModeAmplitudes,
    pub dalpha_dphi: ModeAmplitudes,
}

impl StateWithDerivative {
    /// A state whose amplitudes do not depend on `phi1`.
    pub fn fixed(alpha: ModeAmplitudes) -> Self {
        Self {
            alpha,
            dalpha_dphi: ModeAmplitudes::vacuum(alpha.basis),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.alpha.is_finite() && self.dalpha_dphi.is_finite()
    }
}

#[inline]
fn decay_factor(kappa: f64, t: f64) -> f64 {
    (-0.5 * kappa * t).exp()
}

/// `1 - exp(-kappa t)`, the fraction of a mode's photons leaking out in `t`.
#[inline]
fn leak_fraction(kappa: f64, t: f64) -> f64 {
    -(-kappa * t).exp_m1()
}

/// No-photon evolution over `t`: `alpha_i -> alpha_i exp(-kappa_i t / 2)`.
pub fn no_photon_map(alpha: &ModeAmplitudes, params: &NetworkParams, t: f64) -> ModeAmplitudes {
    debug_assert_eq!(alpha.basis, Basis::Detector);
    ModeAmplitudes::new(
        alpha.a1 * decay_factor(params.kappa1, t),
        alpha.a2 * decay_factor(params.kappa2, t),
        alpha.basis,
    )
}

/// Probability that neither detector fires during `t`.
pub fn no_detection_probability(alpha: &ModeAmplitudes, params: &NetworkParams, t: f64) -> f64 {
    let x1 = alpha.a1.norm_sqr() * leak_fraction(params.kappa1, t);
    let x2 = alpha.a2.norm_sqr() * leak_fraction(params.kappa2, t);
    (-x1).exp() * (-x2).exp()
}

/// The four outcome probabilities for one bin of length `params.dt`.
pub fn event_probabilities(alpha: &ModeAmplitudes, params: &NetworkParams) -> EventProbabilities {
    let leak = [
        leak_fraction(params.kappa1, params.dt),
        leak_fraction(params.kappa2, params.dt),
    ];
    bin_probabilities(&alpha.to_array(), &leak)
}

#[inline]
fn bin_probabilities(alpha: &[C64; 2], leak: &[f64; 2]) -> EventProbabilities {
    let x1 = alpha[0].norm_sqr() * leak[0];
    let x2 = alpha[1].norm_sqr() * leak[1];
    let (q1, r1) = ((-x1).exp(), -(-x1).exp_m1());
    let (q2, r2) = ((-x2).exp(), -(-x2).exp_m1());
    EventProbabilities {
        p00: q1 * q2,
        p01: q1 * r2,
        p10: r1 * q2,
        p11: r1 * r2,
    }
}

/// Detector-basis kick triggered by `event`.
fn kick_for(event: DetectionEvent, feedback: &FeedbackConfig, m_ab: &Mat2) -> [C64; 2] {
    let zero = [C64::new(0.0, 0.0); 2];
    let beta = match event {
        DetectionEvent::NoClick => return zero,
        DetectionEvent::ClickD1Only => feedback.beta_d1,
        DetectionEvent::ClickD2Only => feedback.beta_d2,
        DetectionEvent::ClickBoth => feedback.combined(),
    };
    m_ab.apply(beta.to_array())
}

/// One bin: apply the feedback kick for `event` (if any), then decay over `dt`.
pub fn apply_event(
    alpha: &ModeAmplitudes,
    event: DetectionEvent,
    feedback: &FeedbackConfig,
    transforms: &NetworkTransforms,
    params: &NetworkParams,
) -> Result<ModeAmplitudes> {
    alpha.expect_basis(Basis::Detector)?;
    feedback.validate()?;
    let kick = kick_for(event, feedback, &transforms.ab.matrix);
    let kicked = ModeAmplitudes::new(alpha.a1 + kick[0], alpha.a2 + kick[1], Basis::Detector);
    Ok(no_photon_map(&kicked, params, params.dt))
}

/// [`apply_event`] plus forward-mode propagation of `d alpha / d phi1`.
///
/// `phi1` enters only through `M_ab`, so a click adds `(dM_ab/dphi1) beta` to
/// the derivative and the decay scales it like the amplitudes.
pub fn step_with_derivative(
    s: &StateWithDerivative,
    event: DetectionEvent,
    feedback: &FeedbackConfig,
    transforms: &NetworkTransforms,
    d_m_ab: &Mat2,
    params: &NetworkParams,
) -> Result<StateWithDerivative> {
    s.dalpha_dphi.expect_basis(Basis::Detector)?;
    let alpha = apply_event(&s.alpha, event, feedback, transforms, params)?;
    let dkick = kick_for(event, feedback, d_m_ab);
    let d = ModeAmplitudes::new(
        s.dalpha_dphi.a1 + dkick[0],
        s.dalpha_dphi.a2 + dkick[1],
        Basis::Detector,
    );
    Ok(StateWithDerivative {
        alpha,
        dalpha_dphi: no_photon_map(&d, params, params.dt),
    })
}

/// Outcome probabilities and their `phi1` derivatives, indexed by event.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProbabilitiesWithDerivative {
    pub p: [f64; 4],
    pub dp: [f64; 4],
}

/// Per-step maps for fixed parameters and feedback, precomputed for the
/// inner loops. Works on raw `[C64; 2]` detector-basis amplitudes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Propagator {
    decay: [f64; 2],
    leak: [f64; 2],
    kicks: [[C64; 2]; 4],
    dkicks: [[C64; 2]; 4],
    eps_jump: f64,
    abort_population: f64,
}

impl Propagator {
    pub fn new(params: &NetworkParams, feedback: &FeedbackConfig) -> Result<Self> {
        params.validate()?;
        feedback.validate()?;
        let transforms = build_transforms(params);
        let d_m_ab = transform_derivative(params);
        let kicks = DetectionEvent::ALL.map(|e| kick_for(e, feedback, &transforms.ab.matrix));
        let dkicks = DetectionEvent::ALL.map(|e| kick_for(e, feedback, &d_m_ab));
        Ok(Self {
            decay: [
                decay_factor(params.kappa1, params.dt),
                decay_factor(params.kappa2, params.dt),
            ],
            leak: [
                leak_fraction(params.kappa1, params.dt),
                leak_fraction(params.kappa2, params.dt),
            ],
            kicks,
            dkicks,
            eps_jump: params.eps_jump,
            abort_population: params.abort_population,
        })
    }

    #[inline]
    pub fn probabilities(&self, alpha: &[C64; 2]) -> EventProbabilities {
        bin_probabilities(alpha, &self.leak)
    }

    /// Outcome probabilities and their derivatives given `d alpha / d phi1`.
    #[inline]
    pub fn probabilities_with_derivative(&self, alpha: &[C64; 2], dalpha: &[C64; 2]) -> ProbabilitiesWithDerivative {
        let mut q = [0.0; 2];
        let mut r = [0.0; 2];
        let mut dq = [0.0; 2];
        for k in 0..2 {
            let x = alpha[k].norm_sqr() * self.leak[k];
            q[k] = (-x).exp();
            r[k] = -(-x).exp_m1();
            let dn = 2.0 * (alpha[k].conj() * dalpha[k]).re;
            dq[k] = -q[k] * self.leak[k] * dn;
        }
        let dr = [-dq[0], -dq[1]];
        ProbabilitiesWithDerivative {
            p: [q[0] * q[1], q[0] * r[1], r[0] * q[1], r[0] * r[1]],
            dp: [
                dq[0] * q[1] + q[0] * dq[1],
                dq[0] * r[1] + q[0] * dr[1],
                dr[0] * q[1] + r[0] * dq[1],
                dr[0] * r[1] + r[0] * dr[1],
            ],
        }
    }

    #[inline]
    pub fn advance(&self, alpha: &[C64; 2], event: DetectionEvent) -> [C64; 2] {
        let k = &self.kicks[event.index()];
        [(alpha[0] + k[0]) * self.decay[0], (alpha[1] + k[1]) * self.decay[1]]
    }

    #[inline]
    pub fn advance_derivative(&self, dalpha: &[C64; 2], event: DetectionEvent) -> [C64; 2] {
        let k = &self.dkicks[event.index()];
        [(dalpha[0] + k[0]) * self.decay[0], (dalpha[1] + k[1]) * self.decay[1]]
    }

    /// Detector-basis kick for `event`.
    pub fn kick(&self, event: DetectionEvent) -> [C64; 2] {
        self.kicks[event.index()]
    }

    /// `phi1` derivative of the kick for `event`.
    pub fn kick_derivative(&self, event: DetectionEvent) -> [C64; 2] {
        self.dkicks[event.index()]
    }

    pub fn eps_jump(&self) -> f64 {
        self.eps_jump
    }

    #[inline]
    pub fn overflowed(&self, alpha: &[C64; 2]) -> bool {
        let limit = self.abort_population;
        !(alpha[0].norm_sqr() <= limit && alpha[1].norm_sqr() <= limit)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn det(a1: C64, a2: C64) -> ModeAmplitudes {
        ModeAmplitudes::new(a1, a2, Basis::Detector)
    }

    fn params(k1: f64, k2: f64, dt: f64) -> NetworkParams {
        NetworkParams::new(0.0, 0.0, k1, k2, dt).unwrap()
    }

    #[test]
    fn no_photon_map_examples() {
        let p = params(1.0, 1.0, 1e-3);
        let half = no_photon_map(&det(c(1.0, 0.0), c(1.0, 0.0)), &p, 4f64.ln());
        assert!((half.a1 - c(0.5, 0.0)).norm() < 1e-15);
        assert!((half.a2 - c(0.5, 0.0)).norm() < 1e-15);

        let a = det(c(0.3, -0.2), c(1.5, 2.0));
        assert_eq!(no_photon_map(&a, &p, 0.0), a);

        let p2 = params(1.0, 2.0, 1e-3);
        let out = no_photon_map(&det(c(2.0, 0.0), c(0.0, 1.0)), &p2, 1.0);
        assert!((out.a1 - c(2.0 * (-0.5f64).exp(), 0.0)).norm() < 1e-15);
        assert!((out.a2 - c(0.0, (-1.0f64).exp())).norm() < 1e-15);
    }

    #[test]
    fn no_photon_map_composes() {
        let p = params(0.7, 1.9, 1e-3);
        let a = det(c(1.2, -0.4), c(-0.3, 2.5));
        let two_steps = no_photon_map(&no_photon_map(&a, &p, 0.37), &p, 1.21);
        let one_step = no_photon_map(&a, &p, 0.37 + 1.21);
        assert!((two_steps.a1 - one_step.a1).norm() < 1e-12);
        assert!((two_steps.a2 - one_step.a2).norm() < 1e-12);
    }

    #[test]
    fn no_detection_probability_examples() {
        let p = params(1.0, 1.0, 1e-3);
        assert_eq!(
            no_detection_probability(&ModeAmplitudes::vacuum(Basis::Detector), &p, 3.0),
            1.0
        );
        let v = no_detection_probability(&det(c(1.0, 0.0), c(1.0, 0.0)), &p, 4f64.ln());
        assert!((v - (-1.5f64).exp()).abs() < 1e-15);
        assert!((v - 0.223130).abs() < 1e-6);
        let long = no_detection_probability(&det(c(1.0, 0.0), c(0.0, 0.0)), &p, 1e3);
        assert!((long - (-1.0f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn event_probabilities_examples() {
        let p = params(1.0, 1.0, 1e-3);
        let vac = event_probabilities(&ModeAmplitudes::vacuum(Basis::Detector), &p);
        assert_eq!(vac.as_array(), [1.0, 0.0, 0.0, 0.0]);

        let one = event_probabilities(&det(c(1.0, 0.0), c(0.0, 0.0)), &p);
        let expect = 1.0 - (-(1.0 - (-1e-3f64).exp())).exp();
        assert!((one.p10 - expect).abs() < 1e-15);
        assert!((one.p10 - 9.995e-4).abs() < 1e-6);
        assert_eq!(one.p01, 0.0);
        assert_eq!(one.p11, 0.0);
    }

    #[test]
    fn emission_flags_unsound_bins() {
        let p = params(1.0, 1.0, 1e-3);
        let small = event_probabilities(&det(c(1.0, 0.0), c(1.0, 0.0)), &p);
        assert!(small.is_sound(p.eps_jump));
        let big = event_probabilities(&det(c(10.0, 0.0), c(0.0, 0.0)), &p);
        assert!(!big.is_sound(p.eps_jump));
    }

    #[test]
    fn small_step_scaling() {
        let a = det(c(0.8, 0.6), c(-1.1, 0.4));
        let mut last_p11 = f64::INFINITY;
        for dt in [1e-3, 1e-4, 1e-5] {
            let p = params(1.3, 0.7, dt);
            let probs = event_probabilities(&a, &p);
            let linear = a.a1.norm_sqr() * p.kappa1 * dt;
            // p10 = |a1|^2 kappa1 dt + O(dt^2)
            assert!((probs.p10 - linear).abs() < 10.0 * dt * dt);
            if last_p11.is_finite() {
                let ratio = last_p11 / probs.p11;
                assert!((ratio - 100.0).abs() < 1.0, "p11 ratio {ratio}");
            }
            last_p11 = probs.p11;
        }
    }

    #[test]
    fn sampling_uses_cumulative_order() {
        let p = EventProbabilities::from_array([0.5, 0.2, 0.2, 0.1]);
        assert_eq!(p.sample(0.0), DetectionEvent::NoClick);
        assert_eq!(p.sample(0.49), DetectionEvent::NoClick);
        assert_eq!(p.sample(0.5), DetectionEvent::ClickD2Only);
        assert_eq!(p.sample(0.69), DetectionEvent::ClickD2Only);
        assert_eq!(p.sample(0.7), DetectionEvent::ClickD1Only);
        assert_eq!(p.sample(0.95), DetectionEvent::ClickBoth);
    }

    #[test]
    fn kick_at_zero_phase() {
        let p = NetworkParams::new(0.0, 0.0, 1.0, 1.0, 0.0 + 1e-300).unwrap();
        let t = build_transforms(&p);
        let fb = FeedbackConfig::crossed(c(1.0, 0.0), c(0.0, 0.0));
        let a = det(c(0.2, 0.1), c(-0.5, 0.3));
        let out = apply_event(&a, DetectionEvent::ClickD1Only, &fb, &t, &p).unwrap();
        assert!((out.a1 - (a.a1 + c(0.0, 1.0))).norm() < 1e-15);
        assert!((out.a2 - a.a2).norm() < 1e-15);
    }

    #[test]
    fn zero_feedback_is_pure_decay() {
        let p = NetworkParams::new(0.4, 1.0, 1.0, 2.0, 0.1).unwrap();
        let t = build_transforms(&p);
        let a = det(c(0.2, 0.1), c(-0.5, 0.3));
        for e in DetectionEvent::ALL {
            let out = apply_event(&a, e, &FeedbackConfig::none(), &t, &p).unwrap();
            assert_eq!(out, no_photon_map(&a, &p, p.dt));
        }
    }

    #[test]
    fn cavity_kick_example() {
        let p = NetworkParams::symmetric(1e-3).unwrap();
        let t = build_transforms(&p);
        let beta = ModeAmplitudes::real(2.0, 0.0, Basis::Feedback);
        let dgamma = crate::network::change_basis(&beta, &t.cb).unwrap();
        let r2 = std::f64::consts::SQRT_2;
        assert!((dgamma.a1 - c(r2, 0.0)).norm() < 1e-15);
        assert!((dgamma.a2 - c(0.0, r2)).norm() < 1e-15);
    }

    #[test]
    fn apply_event_checks_basis() {
        let p = NetworkParams::symmetric(1e-3).unwrap();
        let t = build_transforms(&p);
        let a = ModeAmplitudes::real(1.0, 1.0, Basis::Cavity);
        assert!(apply_event(&a, DetectionEvent::NoClick, &FeedbackConfig::none(), &t, &p).is_err());
    }

    #[test]
    fn derivative_stays_zero_without_feedback() {
        let p = NetworkParams::new(0.3, 0.0, 1.0, 1.0, 0.1).unwrap();
        let t = build_transforms(&p);
        let d = transform_derivative(&p);
        let mut s = StateWithDerivative::fixed(det(c(1.0, 0.2), c(0.4, -0.1)));
        for e in [
            DetectionEvent::ClickBoth,
            DetectionEvent::ClickD1Only,
            DetectionEvent::NoClick,
        ] {
            s = step_with_derivative(&s, e, &FeedbackConfig::none(), &t, &d, &p).unwrap();
        }
        assert_eq!(s.dalpha_dphi.norm_sqr(), 0.0);
    }

    #[test]
    fn single_click_derivative() {
        let p = NetworkParams::new(0.3, 0.0, 1.0, 1.5, 0.1).unwrap();
        let t = build_transforms(&p);
        let d = transform_derivative(&p);
        let fb = FeedbackConfig::reference();
        let s = StateWithDerivative::fixed(det(c(1.0, 0.2), c(0.4, -0.1)));
        let out = step_with_derivative(&s, DetectionEvent::ClickD1Only, &fb, &t, &d, &p).unwrap();
        let expect = no_photon_map(
            &ModeAmplitudes::from_array(d.apply(fb.beta_d1.to_array()), Basis::Detector),
            &p,
            p.dt,
        );
        assert!((out.dalpha_dphi.a1 - expect.a1).norm() < 1e-15);
        assert!((out.dalpha_dphi.a2 - expect.a2).norm() < 1e-15);
    }

    #[test]
    fn kick_commutes_with_basis_change() {
        let p = NetworkParams::new(0.9, -0.4, 1.0, 1.0, 1e-3).unwrap();
        let t = build_transforms(&p);
        let fb = FeedbackConfig::reference();
        let gamma = ModeAmplitudes::new(c(0.3, 0.7), c(-1.2, 0.1), Basis::Cavity);
        // detector-basis kick
        let alpha = crate::network::change_basis(&gamma, &t.ac).unwrap();
        let kick = t.ab.matrix.apply(fb.beta_d2.to_array());
        // cavity-basis kick, then to detector basis
        let dgamma = crate::network::change_basis(&fb.beta_d2, &t.cb).unwrap();
        let via_cavity = crate::network::change_basis(&(gamma + dgamma), &t.ac).unwrap();
        assert!((via_cavity.a1 - (alpha.a1 + kick[0])).norm() < 1e-12);
        assert!((via_cavity.a2 - (alpha.a2 + kick[1])).norm() < 1e-12);
    }

    #[test]
    fn propagator_matches_free_functions() {
        let p = NetworkParams::new(0.6, 0.1, 1.0, 0.5, 0.05).unwrap();
        let fb = FeedbackConfig::reference();
        let prop = Propagator::new(&p, &fb).unwrap();
        let t = build_transforms(&p);
        let a = det(c(0.5, -0.5), c(1.0, 0.25));
        for e in DetectionEvent::ALL {
            let free = apply_event(&a, e, &fb, &t, &p).unwrap();
            let fast = prop.advance(&a.to_array(), e);
            assert_eq!([free.a1, free.a2], fast);
        }
        assert_eq!(prop.probabilities(&a.to_array()), event_probabilities(&a, &p));
    }

    #[test]
    fn probability_derivative_matches_finite_difference() {
        let p = NetworkParams::new(0.2, 0.0, 1.0, 1.0, 0.3).unwrap();
        let prop = Propagator::new(&p, &FeedbackConfig::none()).unwrap();
        let alpha = [c(0.7, 0.3), c(-0.2, 1.1)];
        let dalpha = [c(0.1, -0.4), c(0.5, 0.2)];
        let h = 1e-6;
        let shift = |s: f64| [alpha[0] + dalpha[0] * s, alpha[1] + dalpha[1] * s];
        let plus = prop.probabilities(&shift(h)).as_array();
        let minus = prop.probabilities(&shift(-h)).as_array();
        let got = prop.probabilities_with_derivative(&alpha, &dalpha);
        for k in 0..4 {
            let fd = (plus[k] - minus[k]) / (2.0 * h);
            assert!((fd - got.dp[k]).abs() < 1e-8, "k={k} fd={fd} an={}", got.dp[k]);
        }
        let s: f64 = got.dp.iter().sum();
        assert!(s.abs() < 1e-15);
    }

    proptest! {
        #[test]
        fn probabilities_normalized(
            re1 in -30.0f64..30.0, im1 in -30.0f64..30.0,
            re2 in -30.0f64..30.0, im2 in -30.0f64..30.0,
            k1 in 0.01f64..5.0, k2 in 0.01f64..5.0, dt in 1e-5f64..2.0,
        ) {
            let p = params(k1, k2, dt);
            let a = det(c(re1, im1), c(re2, im2));
            let probs = event_probabilities(&a, &p);
            prop_assert!((probs.total() - 1.0).abs() < 1e-12);
            for v in probs.as_array() {
                prop_assert!((0.0..=1.0).contains(&v));
            }
            // factorization into per-detector no-click factors
            let q1 = (-(a.a1.norm_sqr() * (1.0 - (-k1 * dt).exp()))).exp();
            let q2 = (-(a.a2.norm_sqr() * (1.0 - (-k2 * dt).exp()))).exp();
            prop_assert!((probs.p00 - q1 * q2).abs() < 1e-12);
            prop_assert!((probs.p01 - q1 * (1.0 - q2)).abs() < 1e-12);
            prop_assert!((probs.p10 - (1.0 - q1) * q2).abs() < 1e-12);
            prop_assert!((probs.p11 - (1.0 - q1) * (1.0 - q2)).abs() < 1e-12);
        }
    }
}
