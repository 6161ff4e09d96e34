//! Exact Fisher information of the photon-counting record.
//!
//! A record of `N` bins is a string over the four outcomes, so its
//! distribution is enumerated exactly over the 4-ary event tree. Each node
//! carries the detector-basis amplitudes, their `phi1` derivative, the prefix
//! probability `P` and `dP/dphi1`; children are produced with the product
//! rule, so every prefix is computed once and a depth-first walk needs O(N)
//! memory. The tree is split at depth two into 16 subtrees that run in
//! parallel; partial sums are compensated and combined in prefix order,
//! which makes the result independent of the worker count.

use serde::{Deserialize, Serialize};

use crate::dynamics::{DetectionEvent, Propagator};
use crate::error::{Error, Result};
use crate::exec;
use crate::network::{FeedbackConfig, NetworkParams, C64};
use crate::summation::CompensatedSum;
use crate::trajectory::InitialState;

/// Largest record length enumerated unless the caller raises it.
pub const DEFAULT_STEP_CAP: usize = 14;
/// Probabilities are clamped to this before dividing by them.
pub const PROBABILITY_FLOOR: f64 = 1e-30;
/// Allowed deviation of the enumerated total probability from one.
pub const NORMALIZATION_TOLERANCE: f64 = 1e-10;
/// Dense string distributions are limited to this many bins.
pub const DISTRIBUTION_STEP_CAP: usize = 10;

const SPLIT_DEPTH: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EnumerationOptions {
    pub step_cap: usize,
    pub workers: usize,
}

impl Default for EnumerationOptions {
    fn default() -> Self {
        Self {
            step_cap: DEFAULT_STEP_CAP,
            workers: 0,
        }
    }
}

impl EnumerationOptions {
    pub fn with_workers(workers: usize) -> Self {
        Self {
            workers,
            ..Self::default()
        }
    }

    fn check(&self, steps: usize) -> Result<()> {
        if steps > self.step_cap {
            Err(Error::BudgetExceeded {
                steps,
                cap: self.step_cap,
            })
        } else {
            Ok(())
        }
    }
}

/// Detector-basis amplitudes with their `phi1` derivative, as raw arrays.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelState {
    pub alpha: [C64; 2],
    pub dalpha: [C64; 2],
}

/// One outcome's Kraus-like map on coherent amplitudes: its probability at
/// the current state and the state it leaves behind.
#[derive(Debug, Clone, Copy)]
pub struct StepKernel<'a> {
    pub event: DetectionEvent,
    propagator: &'a Propagator,
}

impl<'a> StepKernel<'a> {
    pub fn all(propagator: &'a Propagator) -> [StepKernel<'a>; 4] {
        DetectionEvent::ALL.map(|event| StepKernel { event, propagator })
    }

    pub fn probability(&self, state: &KernelState) -> f64 {
        self.propagator.probabilities(&state.alpha).get(self.event)
    }

    /// `(p, dp/dphi1)` of this outcome.
    pub fn probability_with_derivative(&self, state: &KernelState) -> (f64, f64) {
        let pd = self
            .propagator
            .probabilities_with_derivative(&state.alpha, &state.dalpha);
        let i = self.event.index();
        (pd.p[i], pd.dp[i])
    }

    pub fn update(&self, state: &KernelState) -> KernelState {
        KernelState {
            alpha: self.propagator.advance(&state.alpha, self.event),
            dalpha: self.propagator.advance_derivative(&state.dalpha, self.event),
        }
    }
}

fn start_state(
    initial: &InitialState,
    params: &NetworkParams,
    feedback: &FeedbackConfig,
) -> Result<(Propagator, KernelState)> {
    let propagator = Propagator::new(params, feedback)?;
    let s = initial.resolve(params, feedback)?;
    Ok((
        propagator,
        KernelState {
            alpha: s.alpha.to_array(),
            dalpha: s.dalpha_dphi.to_array(),
        },
    ))
}

/// Probability of the outcome string `events` and its derivative w.r.t. `phi1`.
pub fn string_probability_with_derivative(
    events: &[DetectionEvent],
    initial: &InitialState,
    params: &NetworkParams,
    feedback: &FeedbackConfig,
) -> Result<(f64, f64)> {
    if events.is_empty() {
        return Err(Error::InvalidParams("event string must not be empty".into()));
    }
    let (propagator, mut state) = start_state(initial, params, feedback)?;
    let kernels = StepKernel::all(&propagator);
    let (mut p, mut dp) = (1.0, 0.0);
    for &e in events {
        let k = &kernels[e.index()];
        let (pe, dpe) = k.probability_with_derivative(&state);
        dp = dp * pe + p * dpe;
        p *= pe;
        state = k.update(&state);
    }
    Ok((p, dp))
}

/// Receives every enumerated string (prefixes included) once.
trait Visitor: Send + Sized {
    fn visit(&mut self, path: &[DetectionEvent], p: f64, dp: f64);
    /// Absorbs a visitor that covered a later part of the tree.
    fn absorb(&mut self, later: Self);
}

#[derive(Clone, Copy)]
struct Node {
    state: KernelState,
    p: f64,
    dp: f64,
}

fn descend<V: Visitor>(
    kernels: &[StepKernel<'_>; 4],
    propagator: &Propagator,
    node: &Node,
    max_depth: usize,
    path: &mut Vec<DetectionEvent>,
    visitor: &mut V,
) {
    let pd = propagator.probabilities_with_derivative(&node.state.alpha, &node.state.dalpha);
    for k in kernels {
        let i = k.event.index();
        let p = node.p * pd.p[i];
        let dp = node.dp * pd.p[i] + node.p * pd.dp[i];
        // every descendant of a (0, 0) node is (0, 0) as well
        if p == 0.0 && dp == 0.0 {
            continue;
        }
        path.push(k.event);
        visitor.visit(path, p, dp);
        if path.len() < max_depth {
            let child = Node {
                state: k.update(&node.state),
                p,
                dp,
            };
            descend(kernels, propagator, &child, max_depth, path, visitor);
        }
        path.pop();
    }
}

/// Collects nodes at `depth` below `node` without visiting anything.
fn frontier(
    kernels: &[StepKernel<'_>; 4],
    propagator: &Propagator,
    node: Node,
    path: Vec<DetectionEvent>,
    depth: usize,
    out: &mut Vec<(Vec<DetectionEvent>, Node)>,
) {
    if path.len() == depth {
        out.push((path, node));
        return;
    }
    let pd = propagator.probabilities_with_derivative(&node.state.alpha, &node.state.dalpha);
    for k in kernels {
        let i = k.event.index();
        let child = Node {
            state: k.update(&node.state),
            p: node.p * pd.p[i],
            dp: node.dp * pd.p[i] + node.p * pd.dp[i],
        };
        let mut next = path.clone();
        next.push(k.event);
        frontier(kernels, propagator, child, next, depth, out);
    }
}

/// Walks all strings of length `1..=max_depth`. Strings up to the split depth
/// are visited by the first visitor; each depth-two subtree gets its own and
/// they are absorbed in prefix order.
fn walk<V, F>(propagator: &Propagator, root: KernelState, max_depth: usize, workers: usize, make: F) -> V
where
    V: Visitor,
    F: Fn() -> V + Sync + Send,
{
    let kernels = StepKernel::all(propagator);
    let root = Node {
        state: root,
        p: 1.0,
        dp: 0.0,
    };
    let mut head = make();
    if max_depth <= SPLIT_DEPTH {
        descend(&kernels, propagator, &root, max_depth, &mut Vec::new(), &mut head);
        return head;
    }
    descend(&kernels, propagator, &root, SPLIT_DEPTH, &mut Vec::new(), &mut head);
    let mut prefixes = Vec::with_capacity(1 << (2 * SPLIT_DEPTH));
    frontier(&kernels, propagator, root, Vec::new(), SPLIT_DEPTH, &mut prefixes);
    let parts = exec::map_indexed(workers, prefixes.len(), |i| {
        let (prefix, node) = &prefixes[i];
        let mut v = make();
        if !(node.p == 0.0 && node.dp == 0.0) {
            let kernels = StepKernel::all(propagator);
            let mut path = prefix.clone();
            descend(&kernels, propagator, node, max_depth, &mut path, &mut v);
        }
        v
    });
    for part in parts {
        head.absorb(part);
    }
    head
}

/// Fisher information and total probability per record length.
struct FisherSums {
    fisher: Vec<CompensatedSum>,
    total: Vec<CompensatedSum>,
}

impl FisherSums {
    fn new(max_depth: usize) -> Self {
        Self {
            fisher: vec![CompensatedSum::new(); max_depth + 1],
            total: vec![CompensatedSum::new(); max_depth + 1],
        }
    }
}

impl Visitor for FisherSums {
    #[inline]
    fn visit(&mut self, path: &[DetectionEvent], p: f64, dp: f64) {
        let d = path.len();
        self.total[d].add(p);
        if p < f64::MIN_POSITIVE && dp.abs() < f64::MIN_POSITIVE {
            return;
        }
        self.fisher[d].add(dp * dp / p.max(PROBABILITY_FLOOR));
    }

    fn absorb(&mut self, later: Self) {
        for (a, b) in self.fisher.iter_mut().zip(&later.fisher) {
            a.merge(b);
        }
        for (a, b) in self.total.iter_mut().zip(&later.total) {
            a.merge(b);
        }
    }
}

fn check_normalization(steps: usize, total: f64) -> Result<()> {
    if (total - 1.0).abs() <= NORMALIZATION_TOLERANCE {
        Ok(())
    } else {
        Err(Error::Normalization { steps, total })
    }
}

/// `F(N)` for every `N` in `1..=n_max`, from a single traversal, together
/// with the enumerated total probability per `N`.
pub fn fisher_values(
    initial: &InitialState,
    params: &NetworkParams,
    feedback: &FeedbackConfig,
    n_max: usize,
    options: &EnumerationOptions,
) -> Result<(Vec<f64>, Vec<f64>)> {
    if n_max == 0 {
        return Err(Error::InvalidParams("need at least one step".into()));
    }
    options.check(n_max)?;
    let (propagator, root) = start_state(initial, params, feedback)?;
    let sums = walk(&propagator, root, n_max, options.workers, || FisherSums::new(n_max));
    let mut f = Vec::with_capacity(n_max);
    let mut totals = Vec::with_capacity(n_max);
    for n in 1..=n_max {
        let total = sums.total[n].value();
        check_normalization(n, total)?;
        f.push(sums.fisher[n].value());
        totals.push(total);
    }
    Ok((f, totals))
}

/// Fisher information of an `n`-bin record w.r.t. `phi1`.
pub fn fisher_information(
    initial: &InitialState,
    params: &NetworkParams,
    feedback: &FeedbackConfig,
    n: usize,
    options: &EnumerationOptions,
) -> Result<f64> {
    let (f, _) = fisher_values(initial, params, feedback, n, options)?;
    Ok(f[n - 1])
}

/// Least-squares fit `F(N) ~ a N^2 + b N`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadraticFit {
    pub a: f64,
    pub b: f64,
    pub r_squared: f64,
}

impl QuadraticFit {
    pub fn fisher_at(&self, n: f64) -> f64 {
        self.a * n * n + self.b * n
    }

    /// Extrapolated `1 / F(t / dt)`. This is an estimate: nothing guarantees
    /// the fitted growth persists beyond the enumerated lengths.
    pub fn bound_at(&self, t: f64, dt: f64) -> Option<f64> {
        let f = self.fisher_at(t / dt);
        (f > 0.0).then(|| 1.0 / f)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum FitOutcome {
    Fitted(QuadraticFit),
    /// Every `F` is zero: the record carries no information about the phase.
    NoInformation,
    /// Fewer than three distinct record lengths.
    Underdetermined,
}

impl FitOutcome {
    pub fn fit(&self) -> Option<&QuadraticFit> {
        match self {
            FitOutcome::Fitted(f) => Some(f),
            _ => None,
        }
    }
}

/// Ordinary least squares of `F = a N^2 + b N` (no intercept) with the
/// centered coefficient of determination.
pub fn fit_and_extrapolate(points: &[(usize, f64)]) -> FitOutcome {
    if points.iter().all(|&(_, f)| f == 0.0) {
        return FitOutcome::NoInformation;
    }
    let mut ns: Vec<usize> = points.iter().map(|&(n, _)| n).collect();
    ns.sort_unstable();
    ns.dedup();
    if ns.len() < 3 {
        return FitOutcome::Underdetermined;
    }
    let (mut s4, mut s3, mut s2, mut s2f, mut s1f) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for &(n, f) in points {
        let x = n as f64;
        s4 += x.powi(4);
        s3 += x.powi(3);
        s2 += x * x;
        s2f += x * x * f;
        s1f += x * f;
    }
    let det = s4 * s2 - s3 * s3;
    let a = (s2f * s2 - s3 * s1f) / det;
    let b = (s4 * s1f - s3 * s2f) / det;
    let mean = points.iter().map(|&(_, f)| f).sum::<f64>() / points.len() as f64;
    let (mut ss_res, mut ss_tot) = (0.0, 0.0);
    for &(n, f) in points {
        let x = n as f64;
        ss_res += (f - (a * x * x + b * x)).powi(2);
        ss_tot += (f - mean).powi(2);
    }
    let r_squared = if ss_tot > 0.0 { 1.0 - ss_res / ss_tot } else { 1.0 };
    FitOutcome::Fitted(QuadraticFit { a, b, r_squared })
}

/// Exact Fisher information per record length with its scaling fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FisherResult {
    pub dt: f64,
    pub phi1: f64,
    pub phi2: f64,
    pub n_values: Vec<usize>,
    pub f_values: Vec<f64>,
    /// Enumerated `sum_x P(x)` per length.
    pub total_probability: Vec<f64>,
    pub fit: FitOutcome,
}

impl FisherResult {
    /// Extrapolated Cramér–Rao bound `1 / F(t / dt)`, if a fit exists.
    pub fn bound_at(&self, t: f64) -> Option<f64> {
        self.fit.fit().and_then(|f| f.bound_at(t, self.dt))
    }

    pub fn points(&self) -> Vec<(usize, f64)> {
        self.n_values
            .iter()
            .copied()
            .zip(self.f_values.iter().copied())
            .collect()
    }
}

/// `F(N)` for `N = 1..=n_max` plus the fit over `N >= 2`.
///
/// `F(1)` is left out of the fit: under the fixed-`phi2` convention it is
/// identically zero and carries no scaling information.
pub fn fisher_scan(
    initial: &InitialState,
    params: &NetworkParams,
    feedback: &FeedbackConfig,
    n_max: usize,
    options: &EnumerationOptions,
) -> Result<FisherResult> {
    let (f, totals) = fisher_values(initial, params, feedback, n_max, options)?;
    let n_values: Vec<usize> = (1..=n_max).collect();
    let points: Vec<(usize, f64)> = n_values.iter().copied().zip(f.iter().copied()).collect();
    let fit = if points.iter().all(|&(_, v)| v == 0.0) {
        FitOutcome::NoInformation
    } else {
        fit_and_extrapolate(&points[1.min(points.len())..])
    };
    Ok(FisherResult {
        dt: params.dt,
        phi1: params.phi1,
        phi2: params.phi2,
        n_values,
        f_values: f,
        total_probability: totals,
        fit,
    })
}

/// Index of a string in base 4, first event most significant.
pub fn string_index(events: &[DetectionEvent]) -> usize {
    events.iter().fold(0, |acc, e| acc * 4 + e.index())
}

/// Inverse of [`string_index`] for strings of length `n`.
pub fn string_from_index(mut index: usize, n: usize) -> Vec<DetectionEvent> {
    let mut out = vec![DetectionEvent::NoClick; n];
    for slot in out.iter_mut().rev() {
        *slot = DetectionEvent::ALL[index % 4];
        index /= 4;
    }
    out
}

struct LeafCollector {
    depth: usize,
    leaves: Vec<(usize, f64)>,
}

impl Visitor for LeafCollector {
    fn visit(&mut self, path: &[DetectionEvent], p: f64, _dp: f64) {
        if path.len() == self.depth {
            self.leaves.push((string_index(path), p));
        }
    }

    fn absorb(&mut self, later: Self) {
        self.leaves.extend(later.leaves);
    }
}

/// Exact probability of every `n`-bin string, indexed by [`string_index`].
pub fn string_distribution(
    initial: &InitialState,
    params: &NetworkParams,
    feedback: &FeedbackConfig,
    n: usize,
    options: &EnumerationOptions,
) -> Result<Vec<f64>> {
    if n == 0 {
        return Err(Error::InvalidParams("need at least one step".into()));
    }
    let cap = options.step_cap.min(DISTRIBUTION_STEP_CAP);
    if n > cap {
        return Err(Error::BudgetExceeded { steps: n, cap });
    }
    let (propagator, root) = start_state(initial, params, feedback)?;
    let collected = walk(&propagator, root, n, options.workers, || LeafCollector {
        depth: n,
        leaves: Vec::new(),
    });
    let mut dist = vec![0.0; 1 << (2 * n)];
    for (i, p) in collected.leaves {
        dist[i] = p;
    }
    let total: f64 = dist.iter().copied().sum::<CompensatedSum>().value();
    check_normalization(n, total)?;
    Ok(dist)
}

/// Joint probability of the last three outcomes of an `n`-bin record.
struct TailJoint {
    depth: usize,
    joint: [CompensatedSum; 64],
}

impl Visitor for TailJoint {
    fn visit(&mut self, path: &[DetectionEvent], p: f64, _dp: f64) {
        if path.len() == self.depth {
            let k = string_index(&path[path.len() - 3..]);
            self.joint[k].add(p);
        }
    }

    fn absorb(&mut self, later: Self) {
        for (a, b) in self.joint.iter_mut().zip(&later.joint) {
            a.merge(b);
        }
    }
}

/// Comparison of one- and two-step conditionals of the last outcome.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarkovComparison {
    /// `max |p(x_N | x_{N-1}) - p(x_N | x_{N-1}, x_{N-2})|` over histories
    /// with nonzero probability.
    pub gap: f64,
    /// `(x_{N-2}, x_{N-1}, x_N)` attaining the gap.
    pub worst: Option<[DetectionEvent; 3]>,
    /// `p(x_N | x_{N-1})`, indexed `[x_{N-1}][x_N]`; `None` for impossible
    /// conditions.
    pub given_one: Vec<Option<[f64; 4]>>,
    /// `p(x_N | x_{N-2}, x_{N-1})`, indexed `[4 x_{N-2} + x_{N-1}][x_N]`.
    pub given_two: Vec<Option<[f64; 4]>>,
}

/// How far the last outcome of an `n`-bin record is from being Markov.
pub fn markov_gap(
    initial: &InitialState,
    params: &NetworkParams,
    feedback: &FeedbackConfig,
    n: usize,
    options: &EnumerationOptions,
) -> Result<MarkovComparison> {
    if n < 3 {
        return Err(Error::InvalidParams("markov gap needs at least three steps".into()));
    }
    options.check(n)?;
    let (propagator, root) = start_state(initial, params, feedback)?;
    let tail = walk(&propagator, root, n, options.workers, || TailJoint {
        depth: n,
        joint: [CompensatedSum::new(); 64],
    });
    let joint: Vec<f64> = tail.joint.iter().map(CompensatedSum::value).collect();
    check_normalization(n, joint.iter().copied().sum::<CompensatedSum>().value())?;

    // p(x_{N-1}, x_N) and p(x_{N-2}, x_{N-1}), both from the same joint
    let mut last_two = [[0.0; 4]; 4];
    for (k, &p) in joint.iter().enumerate() {
        last_two[(k / 4) % 4][k % 4] += p;
    }
    let normalize = |row: [f64; 4]| -> Option<[f64; 4]> {
        let s: f64 = row.iter().sum();
        (s > 0.0).then(|| row.map(|v| v / s))
    };
    let given_one: Vec<Option<[f64; 4]>> = last_two.iter().map(|r| normalize(*r)).collect();
    let given_two: Vec<Option<[f64; 4]>> = (0..16)
        .map(|h| normalize([joint[4 * h], joint[4 * h + 1], joint[4 * h + 2], joint[4 * h + 3]]))
        .collect();

    let mut gap = 0.0;
    let mut worst = None;
    for h in 0..16 {
        let (Some(two), Some(one)) = (given_two[h], given_one[h % 4]) else {
            continue;
        };
        for x in 0..4 {
            let d = (two[x] - one[x]).abs();
            if worst.is_none() || d > gap {
                gap = d;
                worst = Some([
                    DetectionEvent::ALL[h / 4],
                    DetectionEvent::ALL[h % 4],
                    DetectionEvent::ALL[x],
                ]);
            }
        }
    }
    Ok(MarkovComparison {
        gap,
        worst,
        given_one,
        given_two,
    })
}
