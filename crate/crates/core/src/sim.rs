//! Event-driven simulation of the physical network, twinning queries and
//! delayed synchronization.
//!
//! Pending events live in a min-heap ordered by `(time, sequence)`, so ties
//! resolve in insertion order. In-flight synchronizations all share the
//! same delay and therefore complete in issue order; they sit in a FIFO
//! that is merged with the heap by the same ordering.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, VecDeque};

use crate::cost::{CostFunctionSpec, CostIntegrator, StateLabels, SyncTracker};
use crate::error::{Error, Result};
use crate::mdp::MdpSolution;
use crate::policy::{pptp_probability, PolicySpec};
use crate::rng::RngStream;
use crate::scenario::{Overlap, ScenarioSpec};
use crate::trace::{Event, EventTrace};

/// Outcome of one replication.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplicationSummary {
    /// Time-average cost, one entry per requested cost function.
    pub costs: Vec<f64>,
    /// Queries per unit time over the horizon.
    pub twinning_rate: f64,
    pub queries: u64,
    pub completed_syncs: u64,
    pub horizon: f64,
}

#[derive(Debug, Clone)]
pub struct Replication {
    pub summary: ReplicationSummary,
    pub trace: Option<EventTrace>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Pending {
    Jump(usize),
    /// Scheduled query of a clock-driven policy; lookup ticks carry the
    /// state generation they were scheduled in.
    PolicyTick(u64),
}

#[derive(Debug, Clone, Copy)]
struct Scheduled {
    time: f64,
    seq: u64,
    what: Pending,
}

impl PartialEq for Scheduled {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Scheduled {}

impl PartialOrd for Scheduled {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Scheduled {
    // Reversed: BinaryHeap is a max-heap and we want the earliest event.
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .time
            .total_cmp(&self.time)
            .then_with(|| other.seq.cmp(&self.seq))
    }
}

#[derive(Debug)]
struct InFlight {
    id: u64,
    query_time: f64,
    seq: u64,
    snapshot: Vec<usize>,
}

enum Driver<'a> {
    Prtp { rate: f64 },
    Pptp { p: f64 },
    Periodic { rate: f64, next_k: u64 },
    Lookup {
        solution: &'a MdpSolution,
        generation: u64,
    },
}

struct Engine<'a> {
    scenario: &'a ScenarioSpec,
    costs: &'a [CostFunctionSpec],
    labels: Vec<StateLabels>,
    horizon: f64,
    rng: &'a mut RngStream,
    heap: BinaryHeap<Scheduled>,
    in_flight: VecDeque<InFlight>,
    spare: Vec<Vec<usize>>,
    seq: u64,
    tracker: SyncTracker,
    integ: CostIntegrator,
    trace: Option<EventTrace>,
    queries: u64,
    completed: u64,
    driver: Driver<'a>,
}

impl<'a> Engine<'a> {
    fn schedule(&mut self, time: f64, what: Pending) {
        let seq = self.seq;
        self.seq += 1;
        self.heap.push(Scheduled { time, seq, what });
    }

    fn schedule_jump(&mut self, system: usize, now: f64) {
        let g = self.scenario.systems()[system].generator();
        let dt = self.rng.exponential(g.exit_rate(self.tracker.s()[system]));
        self.schedule(now + dt, Pending::Jump(system));
    }

    fn issue_query(&mut self, now: f64) {
        let id = self.queries;
        self.queries += 1;
        let mut snapshot = self.spare.pop().unwrap_or_default();
        snapshot.clear();
        snapshot.extend_from_slice(self.tracker.s());
        if let Some(trace) = &mut self.trace {
            trace.push(
                now,
                Event::QueryIssued {
                    id,
                    snapshot: snapshot.clone(),
                },
            );
        }
        if self.scenario.overlap == Overlap::Preempt {
            while let Some(old) = self.in_flight.pop_front() {
                self.spare.push(old.snapshot);
            }
        }
        let seq = self.seq;
        self.seq += 1;
        self.in_flight.push_back(InFlight {
            id,
            query_time: now,
            seq,
            snapshot,
        });
    }

    /// Starts a fictitious-tick clock if the lookup table may twin in the
    /// current state. Decisions repeat at the uniformization ticks that do
    /// not move the physical state; ticks that would idle are thinned out.
    fn lookup_rearm(&mut self, now: f64) {
        let Driver::Lookup {
            solution,
            generation,
        } = &mut self.driver
        else {
            return;
        };
        *generation += 1;
        let (sol, gen) = (*solution, *generation);
        let t = &self.tracker;
        let p = sol.twin_probability_full(t.s(), t.s_hat(), t.latch()).unwrap_or(0.0);
        if p <= 0.0 {
            return;
        }
        let exit: f64 = self
            .scenario
            .systems()
            .iter()
            .zip(t.s())
            .map(|(sys, &x)| sys.generator().exit_rate(x))
            .sum();
        let rate = p * (sol.uniformization_rate - exit);
        if rate > 1e-12 {
            let dt = self.rng.exponential(rate);
            self.schedule(now + dt, Pending::PolicyTick(gen));
        }
    }

    fn refresh(&mut self) {
        self.integ.refresh(self.costs, &self.tracker, &self.labels);
    }

    fn run(mut self) -> Replication {
        let k = self.scenario.len();
        for i in 0..k {
            self.schedule_jump(i, 0.0);
        }
        match self.driver {
            Driver::Prtp { rate } => {
                let dt = self.rng.exponential(rate);
                self.schedule(dt, Pending::PolicyTick(0));
            }
            Driver::Periodic { rate, .. } => {
                self.schedule(1.0 / rate, Pending::PolicyTick(0));
            }
            Driver::Pptp { .. } | Driver::Lookup { .. } => {}
        }
        self.refresh();

        loop {
            let heap_next = self.heap.peek().map(|e| (e.time, e.seq));
            let sync_next = self
                .in_flight
                .front()
                .map(|f| (f.query_time + self.scenario.delta, f.seq));
            let take_sync = match (heap_next, sync_next) {
                (_, None) => false,
                (None, Some(_)) => true,
                (Some(h), Some(s)) => s.0 < h.0 || (s.0 == h.0 && s.1 < h.1),
            };
            let now = if take_sync {
                sync_next.map(|s| s.0)
            } else {
                heap_next.map(|h| h.0)
            };
            let Some(now) = now else { break };
            if now > self.horizon {
                break;
            }
            self.integ.advance(now);

            if take_sync {
                let done = self.in_flight.pop_front().expect("peeked");
                self.tracker.on_sync(&done.snapshot, done.query_time);
                self.completed += 1;
                if let Some(trace) = &mut self.trace {
                    trace.push(
                        now,
                        Event::SyncCompleted {
                            id: done.id,
                            snapshot: done.snapshot.clone(),
                            query_time: done.query_time,
                        },
                    );
                }
                self.spare.push(done.snapshot);
                self.refresh();
                self.lookup_rearm(now);
                continue;
            }

            let ev = self.heap.pop().expect("peeked");
            match ev.what {
                Pending::Jump(i) => {
                    let from = self.tracker.s()[i];
                    let to = self.scenario.systems()[i]
                        .generator()
                        .sample_target(from, self.rng);
                    self.tracker.on_transition(i, to, now);
                    if let Some(trace) = &mut self.trace {
                        trace.push(now, Event::Transition { system: i, from, to });
                    }
                    self.schedule_jump(i, now);
                    self.refresh();
                    match self.driver {
                        Driver::Pptp { p } => {
                            if self.rng.bernoulli(p) {
                                self.issue_query(now);
                            }
                        }
                        Driver::Lookup { solution, .. } => {
                            let t = &self.tracker;
                            let p = solution
                                .twin_probability_full(t.s(), t.s_hat(), t.latch())
                                .unwrap_or(0.0);
                            let twin = if p >= 1.0 {
                                true
                            } else {
                                p > 0.0 && self.rng.bernoulli(p)
                            };
                            if twin {
                                // The zero-delay sync that follows re-arms.
                                self.issue_query(now);
                            } else {
                                self.lookup_rearm(now);
                            }
                        }
                        Driver::Prtp { .. } | Driver::Periodic { .. } => {}
                    }
                }
                Pending::PolicyTick(gen) => match &mut self.driver {
                    Driver::Prtp { rate } => {
                        let rate = *rate;
                        self.issue_query(now);
                        let dt = self.rng.exponential(rate);
                        self.schedule(now + dt, Pending::PolicyTick(0));
                    }
                    Driver::Periodic { rate, next_k } => {
                        *next_k += 1;
                        // Multiply rather than accumulate to avoid drift.
                        let next = *next_k as f64 / *rate;
                        self.issue_query(now);
                        self.schedule(next, Pending::PolicyTick(0));
                    }
                    Driver::Lookup { generation, .. } => {
                        if gen == *generation {
                            self.issue_query(now);
                        }
                    }
                    Driver::Pptp { .. } => {}
                },
            }
        }
        self.integ.advance(self.horizon);

        let summary = ReplicationSummary {
            costs: self.integ.averages(self.horizon),
            twinning_rate: self.queries as f64 / self.horizon,
            queries: self.queries,
            completed_syncs: self.completed,
            horizon: self.horizon,
        };
        Replication {
            summary,
            trace: self.trace,
        }
    }
}

/// Simulates one replication on `[0, horizon]`.
///
/// The initial joint state is drawn per `scenario.initial` and the twin
/// starts synchronized to it with sample time 0. A query issued at `τ`
/// snapshots the physical state and installs it at `τ + Δ`; under
/// [`Overlap::Preempt`] a new query discards any in-flight one.
pub fn run_replication(
    scenario: &ScenarioSpec,
    policy: &PolicySpec,
    costs: &[CostFunctionSpec],
    horizon: f64,
    rng: &mut RngStream,
    keep_trace: bool,
) -> Result<Replication> {
    if !horizon.is_finite() || horizon <= 0.0 {
        return Err(Error::InvalidHorizon(horizon));
    }
    let labels = scenario.labels();
    for c in costs {
        c.check_dims(scenario.len(), &labels)?;
    }
    policy.check(scenario)?;

    let driver = match policy {
        PolicySpec::Prtp { rate } => Driver::Prtp { rate: *rate },
        PolicySpec::Pptp { rate } => Driver::Pptp {
            p: pptp_probability(scenario, *rate)?,
        },
        PolicySpec::Periodic { rate } => Driver::Periodic {
            rate: *rate,
            next_k: 1,
        },
        PolicySpec::Lookup(sol) => Driver::Lookup {
            solution: sol,
            generation: 0,
        },
    };

    let initial = scenario.draw_initial(rng);
    let engine = Engine {
        scenario,
        costs,
        labels,
        horizon,
        tracker: SyncTracker::new(&initial),
        trace: keep_trace.then(|| EventTrace::new(initial.clone(), horizon)),
        rng,
        heap: BinaryHeap::with_capacity(scenario.len() + 2),
        in_flight: VecDeque::new(),
        spare: Vec::new(),
        seq: 0,
        integ: CostIntegrator::new(costs.len()),
        queries: 0,
        completed: 0,
        driver,
    };
    Ok(engine.run())
}

/// What [`estimate_point_cost`] measures at elapsed time `τ`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PointSemantics {
    /// Any system transitioned in `(0, τ]`; one estimate.
    LatchedAny,
    /// Per system: transitioned in `(0, τ]`.
    LatchedPerSystem,
    /// Per system: `S_i(τ) ≠ S_i(0)`.
    StateMismatchPerSystem,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub mean: f64,
    pub stderr: f64,
}

impl Estimate {
    /// Sample mean and standard error of the mean.
    pub fn from_samples(sum: f64, sum_sq: f64, n: u64) -> Self {
        let nf = n as f64;
        let mean = sum / nf;
        if n < 2 {
            return Self { mean, stderr: 0.0 };
        }
        let var = ((sum_sq - nf * mean * mean) / (nf - 1.0)).max(0.0);
        Self {
            mean,
            stderr: (var / nf).sqrt(),
        }
    }

    /// `(mean − reference) / stderr`; zero when both the gap and the
    /// standard error vanish.
    pub fn z_score(&self, reference: f64) -> f64 {
        let gap = self.mean - reference;
        if self.stderr == 0.0 {
            if gap.abs() < 1e-15 {
                0.0
            } else {
                gap.signum() * f64::INFINITY
            }
        } else {
            gap / self.stderr
        }
    }
}

/// Monte Carlo estimate of point-in-time mismatch indicators with no
/// twinning after the initial sample at time 0.
pub fn estimate_point_cost(
    scenario: &ScenarioSpec,
    tau: f64,
    semantics: PointSemantics,
    reps: u64,
    rng: &mut RngStream,
) -> Result<Vec<Estimate>> {
    if !tau.is_finite() || tau < 0.0 {
        return Err(Error::InvalidTime(tau));
    }
    if reps < 100 {
        return Err(Error::TooFewReplications(reps));
    }
    let k = scenario.len();
    let outputs = match semantics {
        PointSemantics::LatchedAny => 1,
        _ => k,
    };
    let mut sums = vec![0.0; outputs];
    let mut jumped = vec![false; k];
    let mut moved = vec![false; k];

    for _ in 0..reps {
        for (i, sys) in scenario.systems().iter().enumerate() {
            let g = sys.generator();
            let start = sys.stationary().sample(rng);
            let mut state = start;
            let mut t = rng.exponential(g.exit_rate(state));
            jumped[i] = t <= tau;
            while t <= tau {
                state = g.sample_target(state, rng);
                t += rng.exponential(g.exit_rate(state));
            }
            moved[i] = state != start;
        }
        match semantics {
            PointSemantics::LatchedAny => {
                sums[0] += f64::from(u8::from(jumped.iter().any(|&b| b)));
            }
            PointSemantics::LatchedPerSystem => {
                for (s, &b) in sums.iter_mut().zip(&jumped) {
                    *s += f64::from(u8::from(b));
                }
            }
            PointSemantics::StateMismatchPerSystem => {
                for (s, &b) in sums.iter_mut().zip(&moved) {
                    *s += f64::from(u8::from(b));
                }
            }
        }
    }
    // Indicators: the sum of squares equals the sum.
    Ok(sums
        .into_iter()
        .map(|s| Estimate::from_samples(s, s, reps))
        .collect())
}
