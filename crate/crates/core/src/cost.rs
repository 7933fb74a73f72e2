//! Freshness cost functions and their time averages.
//!
//! `C1` and `C2` are latching: once a system leaves the state it was sampled
//! in, its indicator stays raised until a synchronization whose sample was
//! taken after that transition completes, even if the system has since
//! returned. `C3` compares the current physical and twin states directly.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::trace::{Event, EventTrace};

/// Distance catalog for `C3`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Distance {
    /// Weighted count of components whose labels differ.
    Hamming,
    /// `Σ_i √((a_i − b_i)²)`, the per-component form used in the numerical
    /// study. Numerically identical to [`Distance::Manhattan`].
    EuclideanPaper,
    /// `√(Σ_i (a_i − b_i)²)`.
    EuclideanTrue,
    Manhattan,
    Chebyshev,
    /// `1 − cos(a, b)`; two zero vectors are at distance 0, a zero and a
    /// non-zero vector at distance 1.
    Cosine,
}

impl Distance {
    pub const ALL: [Distance; 6] = [
        Distance::Hamming,
        Distance::EuclideanPaper,
        Distance::EuclideanTrue,
        Distance::Manhattan,
        Distance::Chebyshev,
        Distance::Cosine,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Distance::Hamming => "hamming",
            Distance::EuclideanPaper => "euclidean_paper",
            Distance::EuclideanTrue => "euclidean_true",
            Distance::Manhattan => "manhattan",
            Distance::Chebyshev => "chebyshev",
            Distance::Cosine => "cosine",
        }
    }

    /// Distance between label vectors `a` and `b`. Weights scale each
    /// component (ignored by cosine); `None` means unit weights.
    pub fn eval(self, a: &[f64], b: &[f64], weights: Option<&[f64]>) -> f64 {
        let w = |i: usize| weights.map_or(1.0, |w| w[i]);
        let diffs = a.iter().zip(b).enumerate();
        match self {
            Distance::Hamming => diffs
                .filter(|(_, (x, y))| x != y)
                .map(|(i, _)| w(i))
                .sum(),
            Distance::EuclideanPaper => diffs
                .map(|(i, (x, y))| w(i) * ((x - y) * (x - y)).sqrt())
                .sum(),
            Distance::EuclideanTrue => diffs
                .map(|(i, (x, y))| w(i) * (x - y) * (x - y))
                .sum::<f64>()
                .sqrt(),
            Distance::Manhattan => diffs.map(|(i, (x, y))| w(i) * (x - y).abs()).sum(),
            Distance::Chebyshev => diffs
                .map(|(i, (x, y))| w(i) * (x - y).abs())
                .fold(0.0, f64::max),
            Distance::Cosine => {
                let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
                let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
                let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
                if a == b {
                    return 0.0;
                }
                match (na == 0.0, nb == 0.0) {
                    (true, true) => 0.0,
                    (true, false) | (false, true) => 1.0,
                    _ => (1.0 - dot / (na * nb)).clamp(0.0, 2.0),
                }
            }
        }
    }
}

impl fmt::Display for Distance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Distance {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Distance::ALL
            .into_iter()
            .find(|d| d.as_str() == s)
            .ok_or_else(|| Error::UnknownDistance(s.to_string()))
    }
}

/// Numeric coordinates of one system's states, used by `C3` distances.
#[derive(Debug, Clone, PartialEq)]
pub struct StateLabels(pub Vec<f64>);

impl StateLabels {
    /// Label `k` for state `k`.
    pub fn default_for(n: usize) -> Self {
        Self((0..n).map(|k| k as f64).collect())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    #[inline]
    pub fn get(&self, state: usize) -> f64 {
        self.0[state]
    }
}

/// Which cost is being measured.
#[derive(Debug, Clone, PartialEq)]
pub enum CostFunctionSpec {
    /// Any system has transitioned since the last completed sample.
    C1,
    /// Weighted count of systems that transitioned since the last sample.
    C2 { weights: Vec<f64> },
    /// Instantaneous distance between physical and twin states.
    C3 {
        distance: Distance,
        weights: Option<Vec<f64>>,
    },
}

impl CostFunctionSpec {
    pub fn c2(weights: Vec<f64>) -> Result<Self> {
        check_weights(&weights)?;
        Ok(CostFunctionSpec::C2 { weights })
    }

    pub fn c3(distance: Distance) -> Self {
        CostFunctionSpec::C3 {
            distance,
            weights: None,
        }
    }

    pub fn c3_weighted(distance: Distance, weights: Vec<f64>) -> Result<Self> {
        check_weights(&weights)?;
        Ok(CostFunctionSpec::C3 {
            distance,
            weights: Some(weights),
        })
    }

    /// `c1`, `c2`, or `c3:<distance>`.
    pub fn label(&self) -> String {
        match self {
            CostFunctionSpec::C1 => "c1".into(),
            CostFunctionSpec::C2 { .. } => "c2".into(),
            CostFunctionSpec::C3 { distance, .. } => format!("c3:{distance}"),
        }
    }

    /// Whether the cost depends on the latch bits.
    pub fn is_latching(&self) -> bool {
        !matches!(self, CostFunctionSpec::C3 { .. })
    }

    /// Checks weight and label dimensions against a `k`-system network.
    pub fn check_dims(&self, k: usize, labels: &[StateLabels]) -> Result<()> {
        let weights = match self {
            CostFunctionSpec::C1 => None,
            CostFunctionSpec::C2 { weights } => Some(weights),
            CostFunctionSpec::C3 { weights, .. } => {
                if labels.len() != k {
                    return Err(Error::WeightLengthMismatch {
                        expected: k,
                        got: labels.len(),
                    });
                }
                weights.as_ref()
            }
        };
        match weights {
            Some(w) if w.len() != k => Err(Error::WeightLengthMismatch {
                expected: k,
                got: w.len(),
            }),
            _ => Ok(()),
        }
    }

    /// Cost value for raw state slices. Dimensions must already have been
    /// checked with [`check_dims`](Self::check_dims).
    #[inline]
    pub(crate) fn eval_raw(
        &self,
        s: &[usize],
        s_hat: &[usize],
        latch: &[bool],
        labels: &[StateLabels],
    ) -> f64 {
        match self {
            CostFunctionSpec::C1 => f64::from(u8::from(latch.iter().any(|&b| b))),
            CostFunctionSpec::C2 { weights } => weights
                .iter()
                .zip(latch)
                .filter(|(_, &b)| b)
                .map(|(w, _)| w)
                .sum(),
            CostFunctionSpec::C3 { distance, weights } => {
                eval_distance(*distance, s, s_hat, labels, weights.as_deref())
            }
        }
    }

    /// Cost value on a mismatch state.
    pub fn evaluate(&self, m: &MismatchState, labels: &[StateLabels]) -> Result<f64> {
        self.check_dims(m.s.len(), labels)?;
        Ok(self.eval_raw(&m.s, &m.s_hat, &m.latch, labels))
    }
}

impl fmt::Display for CostFunctionSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

fn check_weights(weights: &[f64]) -> Result<()> {
    match weights
        .iter()
        .enumerate()
        .find(|(_, w)| !w.is_finite() || **w < 0.0)
    {
        Some((index, &value)) => Err(Error::NegativeWeight { index, value }),
        None => Ok(()),
    }
}

fn eval_distance(
    distance: Distance,
    s: &[usize],
    s_hat: &[usize],
    labels: &[StateLabels],
    weights: Option<&[f64]>,
) -> f64 {
    // Small networks are the common case; avoid allocating for them.
    const INLINE: usize = 8;
    if s.len() <= INLINE {
        let mut a = [0.0; INLINE];
        let mut b = [0.0; INLINE];
        for i in 0..s.len() {
            a[i] = labels[i].get(s[i]);
            b[i] = labels[i].get(s_hat[i]);
        }
        distance.eval(&a[..s.len()], &b[..s.len()], weights)
    } else {
        let a: Vec<f64> = s.iter().zip(labels).map(|(&x, l)| l.get(x)).collect();
        let b: Vec<f64> = s_hat.iter().zip(labels).map(|(&x, l)| l.get(x)).collect();
        distance.eval(&a, &b, weights)
    }
}

/// Physical state, twin state, and per-system latch bits.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct MismatchState {
    pub s: Vec<usize>,
    pub s_hat: Vec<usize>,
    pub latch: Vec<bool>,
}

impl MismatchState {
    /// Twin freshly synchronized to `s`.
    pub fn synchronized(s: Vec<usize>) -> Self {
        let k = s.len();
        Self {
            s_hat: s.clone(),
            s,
            latch: vec![false; k],
        }
    }
}

/// `C1`: 1 if any system is latched.
pub fn cost_c1(m: &MismatchState) -> f64 {
    CostFunctionSpec::C1.eval_raw(&m.s, &m.s_hat, &m.latch, &[])
}

/// `C2`: `Σ_i w_i · latch_i`.
pub fn cost_c2(m: &MismatchState, weights: &[f64]) -> Result<f64> {
    if weights.len() != m.latch.len() {
        return Err(Error::WeightLengthMismatch {
            expected: m.latch.len(),
            got: weights.len(),
        });
    }
    Ok(weights
        .iter()
        .zip(&m.latch)
        .filter(|(_, &b)| b)
        .map(|(w, _)| w)
        .sum())
}

/// `C3`: the selected distance between physical and twin label vectors.
pub fn cost_c3(m: &MismatchState, spec: &CostFunctionSpec, labels: &[StateLabels]) -> Result<f64> {
    match spec {
        CostFunctionSpec::C3 { .. } => spec.evaluate(m, labels),
        other => Err(Error::WrongCostKind {
            expected: "c3",
            got: other.label(),
        }),
    }
}

/// Tracks physical state, twin state and latches through a stream of events.
///
/// A latch is raised by any transition and, on sync completion, recomputed
/// as "transitioned after the completed sync's sample time".
#[derive(Debug, Clone)]
pub struct SyncTracker {
    s: Vec<usize>,
    s_hat: Vec<usize>,
    latch: Vec<bool>,
    last_transition: Vec<f64>,
}

impl SyncTracker {
    /// Starts synchronized to `initial`, sampled at time 0.
    pub fn new(initial: &[usize]) -> Self {
        let k = initial.len();
        Self {
            s: initial.to_vec(),
            s_hat: initial.to_vec(),
            latch: vec![false; k],
            last_transition: vec![f64::NEG_INFINITY; k],
        }
    }

    #[inline]
    pub fn on_transition(&mut self, system: usize, to: usize, t: f64) {
        self.s[system] = to;
        self.latch[system] = true;
        self.last_transition[system] = t;
    }

    #[inline]
    pub fn on_sync(&mut self, snapshot: &[usize], query_time: f64) {
        self.s_hat.copy_from_slice(snapshot);
        for (latch, &last) in self.latch.iter_mut().zip(&self.last_transition) {
            *latch = last > query_time;
        }
    }

    pub fn s(&self) -> &[usize] {
        &self.s
    }

    pub fn s_hat(&self) -> &[usize] {
        &self.s_hat
    }

    pub fn latch(&self) -> &[bool] {
        &self.latch
    }

    pub fn is_synchronized(&self) -> bool {
        !self.latch.iter().any(|&b| b) && self.s == self.s_hat
    }

    pub fn mismatch(&self) -> MismatchState {
        MismatchState {
            s: self.s.clone(),
            s_hat: self.s_hat.clone(),
            latch: self.latch.clone(),
        }
    }
}

/// Exact integral of piecewise-constant costs.
#[derive(Debug, Clone)]
pub(crate) struct CostIntegrator {
    current: Vec<f64>,
    integral: Vec<f64>,
    last_t: f64,
}

impl CostIntegrator {
    pub(crate) fn new(n_costs: usize) -> Self {
        Self {
            current: vec![0.0; n_costs],
            integral: vec![0.0; n_costs],
            last_t: 0.0,
        }
    }

    #[inline]
    pub(crate) fn advance(&mut self, t: f64) {
        let dt = t - self.last_t;
        if dt > 0.0 {
            for (acc, c) in self.integral.iter_mut().zip(&self.current) {
                *acc += c * dt;
            }
            self.last_t = t;
        }
    }

    #[inline]
    pub(crate) fn refresh(
        &mut self,
        specs: &[CostFunctionSpec],
        tracker: &SyncTracker,
        labels: &[StateLabels],
    ) {
        for (c, spec) in self.current.iter_mut().zip(specs) {
            *c = spec.eval_raw(&tracker.s, &tracker.s_hat, &tracker.latch, labels);
        }
    }

    pub(crate) fn averages(&self, horizon: f64) -> Vec<f64> {
        self.integral.iter().map(|i| i / horizon).collect()
    }
}

/// `(1/T) ∫₀ᵀ C(u) du` for a recorded trace, integrated exactly between
/// events.
pub fn time_average_cost(
    trace: &EventTrace,
    spec: &CostFunctionSpec,
    labels: &[StateLabels],
    horizon: f64,
) -> Result<f64> {
    time_average_costs(trace, std::slice::from_ref(spec), labels, horizon).map(|v| v[0])
}

/// Several costs over the same trace.
pub fn time_average_costs(
    trace: &EventTrace,
    specs: &[CostFunctionSpec],
    labels: &[StateLabels],
    horizon: f64,
) -> Result<Vec<f64>> {
    if trace.initial.is_empty() {
        return Err(Error::EmptyTrace);
    }
    if !horizon.is_finite() || horizon <= 0.0 {
        return Err(Error::InvalidHorizon(horizon));
    }
    if horizon > trace.horizon {
        return Err(Error::TraceTooShort {
            covered: trace.horizon,
            requested: horizon,
        });
    }
    let k = trace.initial.len();
    for spec in specs {
        spec.check_dims(k, labels)?;
    }

    let mut tracker = SyncTracker::new(&trace.initial);
    let mut integ = CostIntegrator::new(specs.len());
    integ.refresh(specs, &tracker, labels);
    for rec in trace.records.iter().take_while(|r| r.time <= horizon) {
        integ.advance(rec.time);
        match &rec.event {
            Event::Transition { system, to, .. } => tracker.on_transition(*system, *to, rec.time),
            Event::SyncCompleted {
                snapshot,
                query_time,
                ..
            } => tracker.on_sync(snapshot, *query_time),
            Event::QueryIssued { .. } => continue,
        }
        integ.refresh(specs, &tracker, labels);
    }
    integ.advance(horizon);
    Ok(integ.averages(horizon))
}
