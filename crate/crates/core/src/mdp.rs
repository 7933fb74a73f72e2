//! Average-cost MDP for zero-delay twinning under a rate budget.
//!
//! The joint physical process is uniformized at `Λ_u = Σ_i max_j r_ij`. At
//! every tick the controller observes `(S, Ŝ, latches)` and either idles or
//! twins; twinning installs `Ŝ ← S` and clears the latches before the tick's
//! cost is charged. Then one system jumps `j → k` with probability
//! `q_i[j][k] / Λ_u`, or nothing happens.
//!
//! The rate constraint is relaxed with a per-query price `η`; relative value
//! iteration solves each relaxed problem, and `η` is bisected until the
//! greedy policy's induced query rate fits the budget.
//!
//! Latch bits are kept only to the resolution the cost needs: one "any"
//! bit for `C1`, one bit per system for `C2`, none for `C3`. Dynamics do not
//! depend on latches, so this aggregation is exact.

use std::collections::{HashMap, VecDeque};
use std::fmt::Write as _;
use std::sync::Arc;

use nalgebra::{DMatrix, RowDVector};

use crate::cost::{CostFunctionSpec, StateLabels};
use crate::error::{Error, Result};
use crate::scenario::ScenarioSpec;

pub const DEFAULT_MAX_STATES: usize = 1_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Action {
    Idle,
    Twin,
}

impl Action {
    pub fn as_str(self) -> &'static str {
        match self {
            Action::Idle => "idle",
            Action::Twin => "twin",
        }
    }
}

/// Latch resolution carried in the decision state.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LatchMode {
    None,
    Any,
    PerSystem,
}

impl LatchMode {
    pub fn for_cost(cost: &CostFunctionSpec) -> Self {
        match cost {
            CostFunctionSpec::C1 => LatchMode::Any,
            CostFunctionSpec::C2 { .. } => LatchMode::PerSystem,
            CostFunctionSpec::C3 { .. } => LatchMode::None,
        }
    }

    fn bits(self, k: usize) -> usize {
        match self {
            LatchMode::None => 0,
            LatchMode::Any => 1,
            LatchMode::PerSystem => k,
        }
    }
}

/// Decision state: physical state, twin state, and projected latches.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct MdpState {
    pub s: Vec<usize>,
    pub s_hat: Vec<usize>,
    pub latch: Vec<bool>,
}

impl MdpState {
    /// `s=0,1 hat=0,0 latch=1`.
    pub fn encode(&self) -> String {
        let join = |v: &[usize]| {
            v.iter()
                .map(ToString::to_string)
                .collect::<Vec<_>>()
                .join(",")
        };
        let latch: String = self.latch.iter().map(|&b| if b { '1' } else { '0' }).collect();
        format!("s={} hat={} latch={}", join(&self.s), join(&self.s_hat), latch)
    }

    fn synchronized(&self) -> Self {
        Self {
            s: self.s.clone(),
            s_hat: self.s.clone(),
            latch: vec![false; self.latch.len()],
        }
    }
}

/// Enumerated reachable decision states.
#[derive(Debug, Clone)]
pub struct StateSpace {
    radices: Vec<usize>,
    latch_mode: LatchMode,
    states: Vec<MdpState>,
    index: HashMap<u64, usize>,
}

impl StateSpace {
    fn empty(radices: Vec<usize>, latch_mode: LatchMode) -> Result<Self> {
        // The mixed-radix key must fit in 64 bits.
        let bits = latch_mode.bits(radices.len());
        let mut size: u64 = 1u64.checked_shl(bits as u32).unwrap_or(0);
        for &n in radices.iter().chain(&radices) {
            size = size.checked_mul(n as u64).unwrap_or(0);
        }
        if size == 0 {
            return Err(Error::StateSpaceTooLarge { cap: usize::MAX });
        }
        Ok(Self {
            radices,
            latch_mode,
            states: Vec::new(),
            index: HashMap::new(),
        })
    }

    fn key_prefix(&self, s: &[usize], s_hat: &[usize]) -> u64 {
        let mut key = 0u64;
        for (&x, &n) in s.iter().chain(s_hat).zip(self.radices.iter().cycle()) {
            key = key * n as u64 + x as u64;
        }
        key
    }

    fn key(&self, s: &[usize], s_hat: &[usize], latch: &[bool]) -> u64 {
        latch
            .iter()
            .fold(self.key_prefix(s, s_hat), |key, &b| key * 2 + u64::from(b))
    }

    fn insert(&mut self, state: MdpState) -> (usize, bool) {
        let key = self.key(&state.s, &state.s_hat, &state.latch);
        if let Some(&i) = self.index.get(&key) {
            return (i, false);
        }
        let i = self.states.len();
        self.index.insert(key, i);
        self.states.push(state);
        (i, true)
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn states(&self) -> &[MdpState] {
        &self.states
    }

    pub fn state_counts(&self) -> &[usize] {
        &self.radices
    }

    pub fn latch_mode(&self) -> LatchMode {
        self.latch_mode
    }

    pub fn index_of(&self, state: &MdpState) -> Option<usize> {
        if state.s.len() != self.radices.len()
            || state.s_hat.len() != self.radices.len()
            || state.latch.len() != self.latch_mode.bits(self.radices.len())
        {
            return None;
        }
        self.index
            .get(&self.key(&state.s, &state.s_hat, &state.latch))
            .copied()
    }

    /// Index of a simulation state given per-system latches.
    pub fn index_of_full(&self, s: &[usize], s_hat: &[usize], latch: &[bool]) -> Option<usize> {
        let prefix = self.key_prefix(s, s_hat);
        let key = match self.latch_mode {
            LatchMode::None => prefix,
            LatchMode::Any => prefix * 2 + u64::from(latch.iter().any(|&b| b)),
            LatchMode::PerSystem => latch
                .iter()
                .fold(prefix, |key, &b| key * 2 + u64::from(b)),
        };
        self.index.get(&key).copied()
    }
}

/// Uniformized decision model.
#[derive(Debug, Clone)]
pub struct MdpModel {
    space: Arc<StateSpace>,
    uniformization_rate: f64,
    cost: CostFunctionSpec,
    /// `transitions[a][x]`: successor distribution after action `a` in `x`.
    transitions: [Vec<Vec<(usize, f64)>>; 2],
    /// `cost_rate[a][x]`: cost per unit time of the post-action state.
    cost_rate: [Vec<f64>; 2],
    /// Stationary product law over synchronized states.
    initial: Vec<f64>,
}

fn action_slot(a: Action) -> usize {
    match a {
        Action::Idle => 0,
        Action::Twin => 1,
    }
}

/// Builds the uniformized MDP for a zero-delay scenario.
pub fn build_mdp(scenario: &ScenarioSpec, cost: &CostFunctionSpec) -> Result<MdpModel> {
    build_mdp_with_cap(scenario, cost, DEFAULT_MAX_STATES)
}

pub fn build_mdp_with_cap(
    scenario: &ScenarioSpec,
    cost: &CostFunctionSpec,
    max_states: usize,
) -> Result<MdpModel> {
    if scenario.delta != 0.0 {
        return Err(Error::DeltaNotZero(scenario.delta));
    }
    let k = scenario.len();
    let labels: Vec<StateLabels> = scenario.labels();
    cost.check_dims(k, &labels)?;

    let systems = scenario.systems();
    let radices = scenario.state_counts();
    let mode = LatchMode::for_cost(cost);
    let uniformization_rate: f64 = systems.iter().map(|s| s.generator().max_exit_rate()).sum();

    let mut space = StateSpace::empty(radices.clone(), mode)?;
    let mut queue = VecDeque::new();
    let mut initial_mass = Vec::new();

    // Seed with every synchronized state, weighted by the stationary law.
    let mut joint = vec![0usize; k];
    loop {
        let mass: f64 = joint
            .iter()
            .zip(systems)
            .map(|(&x, sys)| sys.stationary()[x])
            .product();
        let state = MdpState {
            s: joint.clone(),
            s_hat: joint.clone(),
            latch: vec![false; mode.bits(k)],
        };
        let (i, fresh) = space.insert(state);
        if fresh {
            queue.push_back(i);
        }
        initial_mass.push((i, mass));
        if space.len() > max_states {
            return Err(Error::StateSpaceTooLarge { cap: max_states });
        }
        if !advance_joint(&mut joint, &radices) {
            break;
        }
    }

    // Breadth-first closure under both actions.
    let mut succ: HashMap<usize, [Vec<(usize, f64)>; 2]> = HashMap::new();
    while let Some(x) = queue.pop_front() {
        let state = space.states[x].clone();
        let mut per_action: [Vec<(usize, f64)>; 2] = [Vec::new(), Vec::new()];
        for action in [Action::Idle, Action::Twin] {
            let post = match action {
                Action::Idle => state.clone(),
                Action::Twin => state.synchronized(),
            };
            let mut out: Vec<(MdpState, f64)> = Vec::new();
            let mut stay = 1.0;
            for (i, sys) in systems.iter().enumerate() {
                for &(to, rate) in sys.generator().jumps_from(post.s[i]) {
                    let p = rate / uniformization_rate;
                    stay -= p;
                    let mut next = post.clone();
                    next.s[i] = to;
                    match mode {
                        LatchMode::None => {}
                        LatchMode::Any => next.latch[0] = true,
                        LatchMode::PerSystem => next.latch[i] = true,
                    }
                    out.push((next, p));
                }
            }
            if stay > 1e-15 {
                out.push((post, stay));
            }
            let mut row: Vec<(usize, f64)> = Vec::with_capacity(out.len());
            for (next, p) in out {
                let (j, fresh) = space.insert(next);
                if fresh {
                    if space.len() > max_states {
                        return Err(Error::StateSpaceTooLarge { cap: max_states });
                    }
                    queue.push_back(j);
                }
                match row.iter_mut().find(|(t, _)| *t == j) {
                    Some(entry) => entry.1 += p,
                    None => row.push((j, p)),
                }
            }
            // Renormalize away rounding in the self-loop mass.
            let total: f64 = row.iter().map(|(_, p)| p).sum();
            row.iter_mut().for_each(|(_, p)| *p /= total);
            per_action[action_slot(action)] = row;
        }
        succ.insert(x, per_action);
    }

    let n = space.len();
    let mut transitions = [vec![Vec::new(); n], vec![Vec::new(); n]];
    let mut cost_rate = [vec![0.0; n], vec![0.0; n]];
    for (x, state) in space.states.iter().enumerate() {
        let [idle, twin] = succ.remove(&x).expect("every state was expanded");
        transitions[0][x] = idle;
        transitions[1][x] = twin;
        let full_latch = expand_latch(mode, &state.latch, k);
        cost_rate[0][x] = cost.eval_raw(&state.s, &state.s_hat, &full_latch, &labels);
        cost_rate[1][x] = cost.eval_raw(&state.s, &state.s, &vec![false; k], &labels);
    }
    let mut initial = vec![0.0; n];
    for (i, m) in initial_mass {
        initial[i] += m;
    }

    Ok(MdpModel {
        space: Arc::new(space),
        uniformization_rate,
        cost: cost.clone(),
        transitions,
        cost_rate,
        initial,
    })
}

/// Per-system latches consistent with a projected latch vector, for cost
/// evaluation. `Any` maps to "first system latched", which every
/// supported cost with that mode (`C1`) reads only through `any()`.
fn expand_latch(mode: LatchMode, latch: &[bool], k: usize) -> Vec<bool> {
    match mode {
        LatchMode::None => vec![false; k],
        LatchMode::Any => {
            let mut v = vec![false; k];
            v[0] = latch[0];
            v
        }
        LatchMode::PerSystem => latch.to_vec(),
    }
}

fn advance_joint(joint: &mut [usize], radices: &[usize]) -> bool {
    for i in (0..joint.len()).rev() {
        joint[i] += 1;
        if joint[i] < radices[i] {
            return true;
        }
        joint[i] = 0;
    }
    false
}

impl MdpModel {
    pub fn space(&self) -> &StateSpace {
        &self.space
    }

    pub fn n_states(&self) -> usize {
        self.space.len()
    }

    pub fn uniformization_rate(&self) -> f64 {
        self.uniformization_rate
    }

    pub fn cost(&self) -> &CostFunctionSpec {
        &self.cost
    }

    pub fn transitions(&self, x: usize, a: Action) -> &[(usize, f64)] {
        &self.transitions[action_slot(a)][x]
    }

    /// Cost per unit time after taking `a` in `x`.
    pub fn cost_rate(&self, x: usize, a: Action) -> f64 {
        self.cost_rate[action_slot(a)][x]
    }

    pub fn initial_distribution(&self) -> &[f64] {
        &self.initial
    }

    /// Per-tick Lagrangian cost.
    #[inline]
    fn tick_cost(&self, x: usize, a: Action, eta: f64) -> f64 {
        let c = self.cost_rate(x, a) / self.uniformization_rate;
        match a {
            Action::Idle => c,
            Action::Twin => c + eta,
        }
    }

    /// One-step lookahead values `(idle, twin)` at `x` for relative values `h`.
    pub fn q_values(&self, x: usize, h: &[f64], eta: f64) -> (f64, f64) {
        let ev = |a: Action| -> f64 {
            self.tick_cost(x, a, eta)
                + self
                    .transitions(x, a)
                    .iter()
                    .map(|&(y, p)| p * h[y])
                    .sum::<f64>()
        };
        (ev(Action::Idle), ev(Action::Twin))
    }

    /// A constant policy, for benchmarking and table playback.
    pub fn constant_policy(&self, action: Action) -> Vec<Action> {
        vec![action; self.n_states()]
    }
}

/// Greedy action with ties broken toward idling.
#[inline]
pub fn greedy(q_idle: f64, q_twin: f64) -> Action {
    let tol = 1e-12 * q_idle.abs().max(1.0);
    if q_twin < q_idle - tol {
        Action::Twin
    } else {
        Action::Idle
    }
}

#[derive(Debug, Clone, Copy)]
pub struct RviOptions {
    pub epsilon: f64,
    pub max_iterations: usize,
    pub reference_state: usize,
}

impl Default for RviOptions {
    fn default() -> Self {
        Self {
            epsilon: 1e-9,
            max_iterations: 1_000_000,
            reference_state: 0,
        }
    }
}

/// Solved (relaxed or constrained) twinning problem.
#[derive(Debug, Clone)]
pub struct MdpSolution {
    /// Price per query.
    pub eta: f64,
    /// Optimal long-run `cost + η·rate` per unit time.
    pub gain: f64,
    /// Long-run cost per unit time under `twin_probability`.
    pub average_cost: f64,
    /// Relative values, in per-tick units, with `bias[reference] = 0`.
    pub bias: Vec<f64>,
    /// Deterministic greedy policy at `eta`.
    pub policy: Vec<Action>,
    /// Per-state probability of twinning. Equals `policy` except in states
    /// randomized at the constraint boundary.
    pub twin_probability: Vec<f64>,
    /// Queries per unit time under `twin_probability`.
    pub achieved_rate: f64,
    pub iterations: usize,
    pub uniformization_rate: f64,
    space: Arc<StateSpace>,
}

impl MdpSolution {
    /// Wraps an arbitrary policy table (e.g. always/never twin) with its
    /// induced rate and cost. Bias values are left at zero.
    pub fn from_policy(model: &MdpModel, policy: Vec<Action>, eta: f64) -> Result<Self> {
        let mu = induced_distribution(model, &policy)?;
        let (average_cost, achieved_rate) = cost_and_rate(model, &policy, &mu);
        Ok(Self {
            eta,
            gain: average_cost + eta * achieved_rate,
            average_cost,
            bias: vec![0.0; model.n_states()],
            twin_probability: twin_probabilities(&policy),
            policy,
            achieved_rate,
            iterations: 0,
            uniformization_rate: model.uniformization_rate,
            space: Arc::clone(&model.space),
        })
    }

    pub fn space(&self) -> &StateSpace {
        &self.space
    }

    pub fn state_counts(&self) -> &[usize] {
        self.space.state_counts()
    }

    pub fn decide(&self, state: &MdpState) -> Result<Action> {
        self.space
            .index_of(state)
            .map(|i| self.policy[i])
            .ok_or_else(|| Error::UnknownState(state.encode()))
    }

    pub fn twin_probability_of(&self, state: &MdpState) -> Result<f64> {
        self.space
            .index_of(state)
            .map(|i| self.twin_probability[i])
            .ok_or_else(|| Error::UnknownState(state.encode()))
    }

    /// Whether any state randomizes.
    pub fn is_randomized(&self) -> bool {
        self.twin_probability.iter().any(|&p| p > 0.0 && p < 1.0)
    }

    /// Twin probability for a simulation state with per-system latches.
    #[inline]
    pub fn twin_probability_full(&self, s: &[usize], s_hat: &[usize], latch: &[bool]) -> Option<f64> {
        self.space
            .index_of_full(s, s_hat, latch)
            .map(|i| self.twin_probability[i])
    }

    /// Tabular export: header lines, then `state<TAB>action<TAB>bias`.
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "# eta\t{:.12e}", self.eta);
        let _ = writeln!(out, "# gain\t{:.12e}", self.gain);
        let _ = writeln!(out, "# average_cost\t{:.12e}", self.average_cost);
        let _ = writeln!(out, "# achieved_rate\t{:.12e}", self.achieved_rate);
        let _ = writeln!(out, "state\taction\tbias");
        for ((state, &p), bias) in self.space.states.iter().zip(&self.twin_probability).zip(&self.bias) {
            let action = if p <= 0.0 {
                Action::Idle.as_str().to_string()
            } else if p >= 1.0 {
                Action::Twin.as_str().to_string()
            } else {
                format!("twin:{p:.12}")
            };
            let _ = writeln!(out, "{}\t{action}\t{:.12e}", state.encode(), bias);
        }
        out
    }
}

/// Average-cost relative value iteration for price `eta`.
///
/// Stops when the span of `T h − g − h` drops below `epsilon`; the returned
/// bias is the last `h`, so the optimality residual is below `epsilon`.
pub fn relative_value_iteration(model: &MdpModel, eta: f64, opts: RviOptions) -> Result<MdpSolution> {
    if !eta.is_finite() || eta < 0.0 {
        return Err(Error::InvalidRate(eta));
    }
    let n = model.n_states();
    let r = opts.reference_state.min(n - 1);
    let mut h = vec![0.0; n];
    let mut th = vec![0.0; n];
    let mut policy = vec![Action::Idle; n];
    let mut span = f64::INFINITY;

    for iteration in 1..=opts.max_iterations {
        for x in 0..n {
            let (qi, qt) = model.q_values(x, &h, eta);
            let a = greedy(qi, qt);
            policy[x] = a;
            th[x] = if a == Action::Twin { qt } else { qi };
        }
        let g = th[r];
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for x in 0..n {
            let d = th[x] - g - h[x];
            lo = lo.min(d);
            hi = hi.max(d);
        }
        span = hi - lo;
        if span < opts.epsilon {
            let mu = induced_distribution(model, &policy)?;
            let (average_cost, achieved_rate) = cost_and_rate(model, &policy, &mu);
            return Ok(MdpSolution {
                eta,
                gain: g * model.uniformization_rate,
                average_cost,
                bias: h,
                twin_probability: twin_probabilities(&policy),
                policy,
                achieved_rate,
                iterations: iteration,
                uniformization_rate: model.uniformization_rate,
                space: Arc::clone(&model.space),
            });
        }
        for x in 0..n {
            h[x] = th[x] - g;
        }
    }
    Err(Error::NoConvergence {
        iterations: opts.max_iterations,
        span,
    })
}

/// `max_x |T h(x) − g − h(x)|` for the solution's bias and gain, in
/// per-tick units.
pub fn optimality_residual(model: &MdpModel, sol: &MdpSolution) -> f64 {
    let g = sol.gain / model.uniformization_rate;
    (0..model.n_states())
        .map(|x| {
            let (qi, qt) = model.q_values(x, &sol.bias, sol.eta);
            (qi.min(qt) - g - sol.bias[x]).abs()
        })
        .fold(0.0, f64::max)
}

/// Long-run distribution of the pre-decision state at ticks, started from
/// the stationary law over synchronized states.
pub fn induced_distribution(model: &MdpModel, policy: &[Action]) -> Result<Vec<f64>> {
    induced_distribution_randomized(model, &twin_probabilities(policy))
}

fn twin_probabilities(policy: &[Action]) -> Vec<f64> {
    policy
        .iter()
        .map(|&a| if a == Action::Twin { 1.0 } else { 0.0 })
        .collect()
}

/// [`induced_distribution`] for a policy that twins in state `x` with
/// probability `twin[x]`.
pub fn induced_distribution_randomized(model: &MdpModel, twin: &[f64]) -> Result<Vec<f64>> {
    const TOL: f64 = 1e-12;
    const MAX_ITER: usize = 20_000;
    let n = model.n_states();
    let step = |mu: &[f64], damped: bool| -> Vec<f64> {
        let mut next = vec![0.0; n];
        for (x, &m) in mu.iter().enumerate() {
            if m == 0.0 {
                continue;
            }
            let pt = twin[x];
            if pt < 1.0 {
                for &(y, p) in model.transitions(x, Action::Idle) {
                    next[y] += m * (1.0 - pt) * p;
                }
            }
            if pt > 0.0 {
                for &(y, p) in model.transitions(x, Action::Twin) {
                    next[y] += m * pt * p;
                }
            }
        }
        if damped {
            for (nx, &m) in next.iter_mut().zip(mu) {
                *nx = 0.5 * (*nx + m);
            }
        }
        next
    };

    for damped in [false, true] {
        let mut mu = model.initial.clone();
        for _ in 0..MAX_ITER {
            let next = step(&mu, damped);
            let diff: f64 = next.iter().zip(&mu).map(|(a, b)| (a - b).abs()).sum();
            mu = next;
            if diff < TOL {
                return Ok(mu);
            }
        }
    }
    limit_by_squaring(model, &step)
}

/// Slowly mixing chains (tiny twin probabilities): push the initial law
/// through `M^(2^k)` for the lazy kernel `M = (I + P) / 2`.
fn limit_by_squaring(model: &MdpModel, step: &dyn Fn(&[f64], bool) -> Vec<f64>) -> Result<Vec<f64>> {
    const TOL: f64 = 1e-12;
    let n = model.n_states();
    if n > 2048 {
        return Err(Error::PeriodicOrReducibleChain);
    }
    let mut m = DMatrix::<f64>::zeros(n, n);
    let mut unit = vec![0.0; n];
    for x in 0..n {
        unit[x] = 1.0;
        for (y, v) in step(&unit, true).into_iter().enumerate() {
            m[(x, y)] = v;
        }
        unit[x] = 0.0;
    }
    let init = RowDVector::from_row_slice(&model.initial);
    let mut mu = &init * &m;
    for _ in 0..64 {
        m = &m * &m;
        for mut row in m.row_iter_mut() {
            let total: f64 = row.sum();
            row /= total;
        }
        let next = &init * &m;
        let diff = (&next - &mu).abs().sum();
        mu = next;
        if diff < TOL {
            return Ok(mu.iter().copied().collect());
        }
    }
    Err(Error::PeriodicOrReducibleChain)
}

/// Queries per unit time under `policy`.
pub fn induced_rate(model: &MdpModel, policy: &[Action]) -> Result<f64> {
    let mu = induced_distribution(model, policy)?;
    Ok(cost_and_rate(model, policy, &mu).1)
}

fn randomized_cost_and_rate(model: &MdpModel, twin: &[f64]) -> Result<(f64, f64)> {
    let mu = induced_distribution_randomized(model, twin)?;
    let mut cost = 0.0;
    let mut rate = 0.0;
    for (x, &m) in mu.iter().enumerate() {
        let pt = twin[x];
        cost += m * ((1.0 - pt) * model.cost_rate(x, Action::Idle) + pt * model.cost_rate(x, Action::Twin));
        rate += m * pt;
    }
    Ok((cost, rate * model.uniformization_rate))
}

/// Time-occupancy of decision states under `policy`: the tick distribution
/// pushed through the (instantaneous) action.
pub fn post_action_distribution(model: &MdpModel, policy: &[Action]) -> Result<Vec<f64>> {
    let mu = induced_distribution(model, policy)?;
    let mut occ = vec![0.0; model.n_states()];
    for (x, &m) in mu.iter().enumerate() {
        let y = match policy[x] {
            Action::Idle => x,
            Action::Twin => {
                let st = model.space.states[x].synchronized();
                model.space.index_of(&st).expect("synchronized states are seeded")
            }
        };
        occ[y] += m;
    }
    Ok(occ)
}

fn cost_and_rate(model: &MdpModel, policy: &[Action], mu: &[f64]) -> (f64, f64) {
    let mut cost = 0.0;
    let mut twin = 0.0;
    for (x, &m) in mu.iter().enumerate() {
        cost += m * model.cost_rate(x, policy[x]);
        if policy[x] == Action::Twin {
            twin += m;
        }
    }
    (cost, twin * model.uniformization_rate)
}

/// Smallest price (to bisection tolerance) whose greedy policy keeps the
/// induced rate within `budget`.
///
/// `policy` is that deterministic greedy policy, which may undershoot the
/// budget. The greedy policies just below and just above the price are both
/// Lagrangian-optimal, so states where they disagree are ties; twinning in
/// all of them with a common probability `q`, chosen so the rate meets the
/// budget from below, gives `twin_probability`. Cost and rate are reported
/// for the randomized policy.
pub fn solve_constrained(model: &MdpModel, budget: f64, opts: RviOptions) -> Result<MdpSolution> {
    if !budget.is_finite() || budget <= 0.0 {
        return Err(Error::InvalidRate(budget));
    }
    let fits = |s: &MdpSolution| s.achieved_rate <= budget * (1.0 + 1e-12);

    let free = relative_value_iteration(model, 0.0, opts)?;
    if fits(&free) {
        return Ok(free);
    }

    let mut lo = 0.0;
    let mut hi = 1.0;
    let mut over = free;
    let mut best = loop {
        let s = relative_value_iteration(model, hi, opts)?;
        if fits(&s) {
            break s;
        }
        lo = hi;
        over = s;
        hi *= 2.0;
        if hi > 1e18 {
            return Err(Error::NoConvergence {
                iterations: 0,
                span: f64::INFINITY,
            });
        }
    };

    for _ in 0..200 {
        if hi - lo <= 1e-10 * hi.max(1.0) {
            break;
        }
        let mid = 0.5 * (lo + hi);
        let s = relative_value_iteration(model, mid, opts)?;
        if fits(&s) {
            hi = mid;
            best = s;
        } else {
            lo = mid;
            over = s;
        }
    }
    mix_ties(model, best, &over.policy, budget)
}

fn mix_ties(model: &MdpModel, mut sol: MdpSolution, over: &[Action], budget: f64) -> Result<MdpSolution> {
    let tied: Vec<usize> = (0..sol.policy.len())
        .filter(|&x| over[x] == Action::Twin && sol.policy[x] == Action::Idle)
        .collect();
    if tied.is_empty() {
        return Ok(sol);
    }
    let mut twin = sol.twin_probability.clone();
    let mut eval = |q: f64| -> Result<(f64, f64)> {
        for &x in &tied {
            twin[x] = q;
        }
        randomized_cost_and_rate(model, &twin)
    };
    let (mut lo, mut hi) = (0.0, 1.0);
    let mut best = (0.0, sol.average_cost, sol.achieved_rate);
    for _ in 0..60 {
        let q = 0.5 * (lo + hi);
        let (cost, rate) = eval(q)?;
        if rate <= budget {
            lo = q;
            best = (q, cost, rate);
        } else {
            hi = q;
        }
    }
    let (q, cost, rate) = best;
    if q > 0.0 {
        for &x in &tied {
            sol.twin_probability[x] = q;
        }
        sol.average_cost = cost;
        sol.achieved_rate = rate;
    }
    Ok(sol)
}
