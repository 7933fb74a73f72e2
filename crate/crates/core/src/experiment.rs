//! Replicated experiments: sweeps, Monte Carlo validation, optimal-policy
//! comparison and analytic curves, with their CSV renderings.
//!
//! Replication `r` of cell `c` draws from stream `(c << 32) | r` of the
//! base seed, so results do not depend on the worker count.

use std::fmt::Write as _;
use std::sync::Arc;

use rayon::prelude::*;

use crate::analytic::{
    expected_cost_c1, expected_cost_c2, expected_cost_c3_hamming, holding_probability,
    same_state_probability, ExpectationForm,
};
use crate::config::SweepConfig;
use crate::cost::CostFunctionSpec;
use crate::error::{Error, Result};
use crate::mdp::{build_mdp, optimality_residual, solve_constrained, MdpSolution, RviOptions};
use crate::policy::{PolicyKind, PolicySpec};
use crate::rng::RngStream;
use crate::scenario::ScenarioSpec;
use crate::sim::{estimate_point_cost, run_replication, Estimate, PointSemantics};

pub const CSV_HEADER: &str =
    "policy,delta,lambda_target,cost_kind,mean_cost,stderr,lambda_empirical,replications,horizon,seed";
pub const ANALYTIC_HEADER: &str = "form,cost_kind,delta,t,value";

/// Formats `v` with 12 significant digits, `%g` style.
pub fn fmt_sig(v: f64) -> String {
    const DIGITS: i32 = 12;
    if v == 0.0 {
        return "0".into();
    }
    if !v.is_finite() {
        return format!("{v}");
    }
    let sci = format!("{:.*e}", (DIGITS - 1) as usize, v);
    let (mantissa, exp) = sci.split_once('e').expect("scientific format");
    let exp: i32 = exp.parse().expect("exponent");
    if (-5..DIGITS).contains(&exp) {
        let decimals = (DIGITS - 1 - exp).max(0) as usize;
        trim_zeros(format!("{v:.decimals$}"))
    } else {
        let m = trim_zeros(mantissa.to_string());
        format!("{m}e{}{:02}", if exp < 0 { '-' } else { '+' }, exp.abs())
    }
}

fn trim_zeros(s: String) -> String {
    if !s.contains('.') {
        return s;
    }
    s.trim_end_matches('0').trim_end_matches('.').to_string()
}

/// Runs `f` on a pool with `threads` workers, or the global pool.
pub fn with_threads<T: Send>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> T {
    match threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build()
            .expect("thread pool")
            .install(f),
        None => f(),
    }
}

/// Aggregated replications of one (scenario, policy) cell.
#[derive(Debug, Clone, PartialEq)]
pub struct CellStats {
    pub costs: Vec<Estimate>,
    pub rate: Estimate,
    pub replications: u64,
}

#[derive(Default, Clone)]
struct Moments {
    sum: f64,
    sum_sq: f64,
}

impl Moments {
    fn push(&mut self, x: f64) {
        self.sum += x;
        self.sum_sq += x * x;
    }
}

struct Job<'a> {
    scenario: &'a ScenarioSpec,
    policy: PolicySpec,
    costs: &'a [CostFunctionSpec],
    cell: u64,
}

fn run_jobs(jobs: &[Job<'_>], reps: u64, horizon: f64, seed: u64) -> Result<Vec<CellStats>> {
    let summaries = (0..jobs.len() as u64 * reps)
        .into_par_iter()
        .map(|k| {
            let job = &jobs[(k / reps) as usize];
            let rep = k % reps;
            let mut rng = RngStream::new(seed, (job.cell << 32) | rep);
            run_replication(job.scenario, &job.policy, job.costs, horizon, &mut rng, false)
                .map(|r| r.summary)
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(jobs
        .iter()
        .zip(summaries.chunks(reps as usize))
        .map(|(job, chunk)| {
            let mut costs = vec![Moments::default(); job.costs.len()];
            let mut rate = Moments::default();
            for s in chunk {
                for (m, c) in costs.iter_mut().zip(&s.costs) {
                    m.push(*c);
                }
                rate.push(s.twinning_rate);
            }
            CellStats {
                costs: costs
                    .iter()
                    .map(|m| Estimate::from_samples(m.sum, m.sum_sq, reps))
                    .collect(),
                rate: Estimate::from_samples(rate.sum, rate.sum_sq, reps),
                replications: reps,
            }
        })
        .collect())
}

/// Replicates one cell; `cell` selects the substream block.
pub fn simulate_cell(
    scenario: &ScenarioSpec,
    policy: &PolicySpec,
    costs: &[CostFunctionSpec],
    horizon: f64,
    reps: u64,
    seed: u64,
    cell: u64,
) -> Result<CellStats> {
    if reps == 0 {
        return Err(Error::TooFewReplications(0));
    }
    let jobs = [Job {
        scenario,
        policy: policy.clone(),
        costs,
        cell,
    }];
    Ok(run_jobs(&jobs, reps, horizon, seed)?.remove(0))
}

/// One CSV row.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub policy: String,
    pub delta: f64,
    pub lambda_target: f64,
    pub cost_kind: String,
    pub mean_cost: f64,
    pub stderr: f64,
    pub lambda_empirical: f64,
    pub replications: u64,
    pub horizon: f64,
    pub seed: u64,
}

impl SweepRow {
    pub fn to_csv(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{}",
            self.policy,
            fmt_sig(self.delta),
            fmt_sig(self.lambda_target),
            self.cost_kind,
            fmt_sig(self.mean_cost),
            fmt_sig(self.stderr),
            fmt_sig(self.lambda_empirical),
            self.replications,
            fmt_sig(self.horizon),
            self.seed
        )
    }
}

/// Policy column value: family and overlap semantics, e.g. `prtp:preempt`.
pub fn policy_label(policy: &str, scenario: &ScenarioSpec) -> String {
    format!("{policy}:{}", scenario.overlap.as_str())
}

pub fn rows_to_csv(rows: &[SweepRow]) -> String {
    let mut out = String::with_capacity(64 * (rows.len() + 1));
    out.push_str(CSV_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&r.to_csv());
        out.push('\n');
    }
    out
}

/// Runs every (policy, Δ, λ) cell of `sweep` on `base` (whose delay is
/// replaced per cell). Rows come out ordered by policy, Δ, λ, then cost.
pub fn run_sweep(base: &ScenarioSpec, sweep: &SweepConfig) -> Result<Vec<SweepRow>> {
    let scenarios = sweep
        .delta_grid
        .iter()
        .map(|&d| base.with_delta(d))
        .collect::<Result<Vec<_>>>()?;

    let mut jobs = Vec::new();
    let mut keys = Vec::new();
    for &kind in &sweep.policies {
        for (di, sc) in scenarios.iter().enumerate() {
            for &lambda in &sweep.lambda_grid {
                jobs.push(Job {
                    scenario: sc,
                    policy: kind.with_rate(lambda)?,
                    costs: &sweep.costs,
                    cell: jobs.len() as u64,
                });
                keys.push((kind, sweep.delta_grid[di], lambda, sc));
            }
        }
    }
    let stats = run_jobs(&jobs, sweep.replications, sweep.horizon, sweep.seed)?;

    let mut rows = Vec::with_capacity(stats.len() * sweep.costs.len());
    for ((kind, delta, lambda, sc), cell) in keys.into_iter().zip(stats) {
        for (cost, est) in sweep.costs.iter().zip(&cell.costs) {
            rows.push(SweepRow {
                policy: policy_label(kind.as_str(), sc),
                delta,
                lambda_target: lambda,
                cost_kind: cost.label(),
                mean_cost: est.mean,
                stderr: est.stderr,
                lambda_empirical: cell.rate.mean,
                replications: sweep.replications,
                horizon: sweep.horizon,
                seed: sweep.seed,
            });
        }
    }
    Ok(rows)
}

/// A single simulate run: every policy in `policies` at one rate.
pub fn run_simulate(
    scenario: &ScenarioSpec,
    policies: &[PolicyKind],
    lambda: f64,
    costs: &[CostFunctionSpec],
    reps: u64,
    horizon: f64,
    seed: u64,
) -> Result<Vec<SweepRow>> {
    let sweep = SweepConfig::new(
        vec![scenario.delta],
        vec![lambda],
        policies.to_vec(),
        costs.to_vec(),
        reps,
        horizon,
        seed,
    )?;
    run_sweep(scenario, &sweep)
}

/// Simulated point estimate compared against a closed form.
#[derive(Debug, Clone, PartialEq)]
pub struct ValidationPoint {
    pub tau: f64,
    /// What was simulated, e.g. `latched_any` or `state_mismatch[ps1]`.
    pub quantity: String,
    pub form: ExpectationForm,
    pub estimate: Estimate,
    pub reference: f64,
    pub z: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValidationReport {
    pub points: Vec<ValidationPoint>,
    pub threshold: f64,
    pub replications: u64,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.points.iter().all(|p| p.z.abs() <= self.threshold)
    }

    pub fn max_abs_z(&self) -> f64 {
        self.points.iter().map(|p| p.z.abs()).fold(0.0, f64::max)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("tau,quantity,form,estimate,stderr,reference,z,pass\n");
        for p in &self.points {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{}",
                fmt_sig(p.tau),
                p.quantity,
                p.form.as_str(),
                fmt_sig(p.estimate.mean),
                fmt_sig(p.estimate.stderr),
                fmt_sig(p.reference),
                fmt_sig(p.z),
                p.z.abs() <= self.threshold
            );
        }
        out
    }
}

pub const VALIDATION_Z_THRESHOLD: f64 = 4.0;

/// Compares no-twinning Monte Carlo against the closed forms on `taus`.
///
/// Matched pairs are latched-any vs. the product of holding probabilities
/// and per-system state mismatch vs. the occupancy diagonal. With `crossed`
/// the per-system latched indicator is compared against the occupancy
/// diagonal instead, which should fail.
pub fn run_validation(
    scenario: &ScenarioSpec,
    taus: &[f64],
    reps: u64,
    seed: u64,
    crossed: bool,
) -> Result<ValidationReport> {
    let semantics: &[PointSemantics] = if crossed {
        &[PointSemantics::LatchedPerSystem]
    } else {
        &[PointSemantics::LatchedAny, PointSemantics::StateMismatchPerSystem]
    };
    let tasks: Vec<(f64, PointSemantics)> = taus
        .iter()
        .flat_map(|&t| semantics.iter().map(move |&s| (t, s)))
        .collect();
    let estimates = tasks
        .par_iter()
        .enumerate()
        .map(|(i, &(tau, sem))| {
            let mut rng = RngStream::new(seed, i as u64);
            estimate_point_cost(scenario, tau, sem, reps, &mut rng)
        })
        .collect::<Result<Vec<_>>>()?;

    let mut points = Vec::new();
    for (&(tau, sem), ests) in tasks.iter().zip(estimates) {
        match sem {
            PointSemantics::LatchedAny => {
                let mut hold = 1.0;
                for sys in scenario.systems() {
                    hold *= holding_probability(sys, tau)?;
                }
                let reference = 1.0 - hold;
                points.push(ValidationPoint {
                    tau,
                    quantity: "latched_any".into(),
                    form: ExpectationForm::Sojourn,
                    estimate: ests[0],
                    reference,
                    z: ests[0].z_score(reference),
                });
            }
            PointSemantics::LatchedPerSystem | PointSemantics::StateMismatchPerSystem => {
                let name = if sem == PointSemantics::LatchedPerSystem {
                    "latched"
                } else {
                    "state_mismatch"
                };
                for (sys, est) in scenario.systems().iter().zip(ests) {
                    let reference = 1.0 - same_state_probability(sys, tau)?;
                    points.push(ValidationPoint {
                        tau,
                        quantity: format!("{name}[{}]", sys.name),
                        form: ExpectationForm::PaperDiagonal,
                        estimate: est,
                        reference,
                        z: est.z_score(reference),
                    });
                }
            }
        }
    }
    Ok(ValidationReport {
        points,
        threshold: VALIDATION_Z_THRESHOLD,
        replications: reps,
    })
}

/// Optimal policy for one cost, with simulated comparisons.
#[derive(Debug, Clone)]
pub struct OptimalEntry {
    pub cost: CostFunctionSpec,
    pub solution: Arc<MdpSolution>,
    pub residual: f64,
    pub n_states: usize,
    /// `lookup`, then PPTP and PRTP at the budget rate.
    pub comparison: Vec<SweepRow>,
}

#[derive(Debug, Clone)]
pub struct OptimalReport {
    pub budget: f64,
    pub entries: Vec<OptimalEntry>,
}

impl OptimalReport {
    pub fn comparison_csv(&self) -> String {
        let rows: Vec<SweepRow> = self
            .entries
            .iter()
            .flat_map(|e| e.comparison.iter().cloned())
            .collect();
        rows_to_csv(&rows)
    }
}

/// Solves the rate-constrained problem for each cost and replays the
/// policy against PPTP and PRTP at the same rate. `reps == 0` skips the
/// simulations.
pub fn run_optimal(
    scenario: &ScenarioSpec,
    costs: &[CostFunctionSpec],
    budget: f64,
    reps: u64,
    horizon: f64,
    seed: u64,
) -> Result<OptimalReport> {
    let opts = RviOptions::default();
    let mut entries = Vec::with_capacity(costs.len());
    for (ci, cost) in costs.iter().enumerate() {
        let model = build_mdp(scenario, cost)?;
        let solution = solve_constrained(&model, budget, opts)?;
        let residual = optimality_residual(&model, &solution);
        let solution = Arc::new(solution);
        let mut comparison = Vec::new();
        if reps > 0 {
            let one = std::slice::from_ref(cost);
            let policies = [
                PolicySpec::Lookup(Arc::clone(&solution)),
                PolicyKind::Pptp.with_rate(budget)?,
                PolicyKind::Prtp.with_rate(budget)?,
            ];
            let jobs: Vec<Job<'_>> = policies
                .into_iter()
                .enumerate()
                .map(|(pi, policy)| Job {
                    scenario,
                    policy,
                    costs: one,
                    cell: (ci * 3 + pi) as u64,
                })
                .collect();
            let stats = run_jobs(&jobs, reps, horizon, seed)?;
            for (job, cell) in jobs.iter().zip(stats) {
                comparison.push(SweepRow {
                    policy: policy_label(job.policy.name(), scenario),
                    delta: scenario.delta,
                    lambda_target: budget,
                    cost_kind: cost.label(),
                    mean_cost: cell.costs[0].mean,
                    stderr: cell.costs[0].stderr,
                    lambda_empirical: cell.rate.mean,
                    replications: reps,
                    horizon,
                    seed,
                });
            }
        }
        entries.push(OptimalEntry {
            cost: cost.clone(),
            n_states: model.n_states(),
            solution,
            residual,
            comparison,
        });
    }
    Ok(OptimalReport { budget, entries })
}

/// Default elapsed-time grid for analytic curves: 0, 0.1, ..., 2.
pub fn default_t_grid() -> Vec<f64> {
    (0..=20).map(|i| f64::from(i) * 0.1).collect()
}

/// Closed-form curves: `c1` and `c2` under both forms and unit-weight
/// Hamming `c3` under the occupancy form, for each delay.
pub fn analytic_csv(scenario: &ScenarioSpec, deltas: &[f64], ts: &[f64]) -> Result<String> {
    let weights = scenario.weights();
    let unit = vec![1.0; scenario.len()];
    let mut out = String::from(ANALYTIC_HEADER);
    out.push('\n');
    for &delta in deltas {
        let sc = scenario.with_delta(delta)?;
        for form in [ExpectationForm::PaperDiagonal, ExpectationForm::Sojourn] {
            for &t in ts {
                let v = expected_cost_c1(&sc, t, form)?;
                let _ = writeln!(out, "{},c1,{},{},{}", form.as_str(), fmt_sig(delta), fmt_sig(t), fmt_sig(v));
            }
            for &t in ts {
                let v = expected_cost_c2(&sc, &weights, t, form)?;
                let _ = writeln!(out, "{},c2,{},{},{}", form.as_str(), fmt_sig(delta), fmt_sig(t), fmt_sig(v));
            }
        }
        for &t in ts {
            let v = expected_cost_c3_hamming(&sc, &unit, t)?;
            let _ = writeln!(
                out,
                "{},c3:hamming,{},{},{}",
                ExpectationForm::PaperDiagonal.as_str(),
                fmt_sig(delta),
                fmt_sig(t),
                fmt_sig(v)
            );
        }
    }
    Ok(out)
}
