//! JSON scenario/experiment configuration.
//!
//! ```json
//! {
//!   "systems": [{"name": "ps1", "Q": [[-1, 1], [2, -2]], "weight": 5}],
//!   "delta": 0.3,
//!   "overlap": "preempt",
//!   "initial": "stationary",
//!   "policies": ["prtp", "pptp"],
//!   "lambda": 10,
//!   "costs": [{"type": "c1"}, {"type": "c3", "distance": "euclidean_paper"}],
//!   "horizon": 500, "replications": 200, "seed": 7
//! }
//! ```
//!
//! Sweeps use `delta_grid` and `lambda_grid` instead of (or alongside)
//! `delta` and `lambda`. `initial` may also be `{"fixed": [0, 1]}`.

use std::path::Path;

use serde::Deserialize;

use crate::cost::{CostFunctionSpec, Distance, StateLabels};
use crate::ctmc::GeneratorMatrix;
use crate::error::{Error, Result};
use crate::policy::PolicyKind;
use crate::scenario::{InitialCondition, Overlap, PhysicalSystem, ScenarioSpec};

pub const DEFAULT_TAU_GRID: [f64; 4] = [0.1, 0.5, 1.0, 2.0];

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    systems: Vec<RawSystem>,
    delta: Option<f64>,
    delta_grid: Option<Vec<f64>>,
    lambda: Option<f64>,
    lambda_grid: Option<Vec<f64>>,
    overlap: Option<String>,
    initial: Option<RawInitial>,
    policy: Option<String>,
    policies: Option<Vec<String>>,
    costs: Option<Vec<RawCost>>,
    horizon: Option<f64>,
    replications: Option<u64>,
    seed: Option<u64>,
    tau_grid: Option<Vec<f64>>,
    t_grid: Option<Vec<f64>>,
    budget: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSystem {
    name: String,
    #[serde(rename = "Q")]
    q: Vec<Vec<f64>>,
    weight: f64,
    labels: Option<Vec<f64>>,
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum RawInitial {
    Named(String),
    Fixed { fixed: Vec<usize> },
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawCost {
    #[serde(rename = "type")]
    kind: String,
    distance: Option<String>,
    weights: Option<Vec<f64>>,
}

/// A validated configuration.
#[derive(Debug, Clone)]
pub struct Config {
    /// Scenario at the first configured delay.
    pub scenario: ScenarioSpec,
    pub deltas: Vec<f64>,
    pub lambdas: Vec<f64>,
    pub policies: Vec<PolicyKind>,
    pub costs: Vec<CostFunctionSpec>,
    pub horizon: f64,
    pub replications: u64,
    pub seed: u64,
    pub tau_grid: Vec<f64>,
    pub t_grid: Option<Vec<f64>>,
    pub budget: Option<f64>,
}

fn schema(field: impl Into<String>, reason: impl Into<String>) -> Error {
    Error::SchemaViolation {
        field: field.into(),
        reason: reason.into(),
    }
}

impl Config {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::ConfigParse(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let raw: RawConfig =
            serde_json::from_str(text).map_err(|e| Error::ConfigParse(e.to_string()))?;
        Self::from_raw(raw)
    }

    fn from_raw(raw: RawConfig) -> Result<Self> {
        if raw.systems.is_empty() {
            return Err(schema("systems", "at least one system is required"));
        }
        let mut systems = Vec::with_capacity(raw.systems.len());
        for (i, s) in raw.systems.into_iter().enumerate() {
            let field = |f: &str| format!("systems[{i}].{f}");
            let g = GeneratorMatrix::new(&s.q).map_err(|e| schema(field("Q"), e.to_string()))?;
            let labels = match s.labels {
                Some(l) => StateLabels(l),
                None => StateLabels::default_for(g.n_states()),
            };
            let sys = PhysicalSystem::with_labels(s.name, g, s.weight, labels).map_err(|e| {
                let f = match e {
                    Error::NegativeWeight { .. } => "weight",
                    Error::LabelLengthMismatch { .. } => "labels",
                    _ => "Q",
                };
                schema(field(f), e.to_string())
            })?;
            systems.push(sys);
        }
        let k = systems.len();

        let deltas = match (raw.delta_grid, raw.delta) {
            (Some(grid), _) => grid,
            (None, Some(d)) => vec![d],
            (None, None) => vec![0.0],
        };
        if deltas.is_empty() {
            return Err(schema("delta_grid", "must not be empty"));
        }
        if let Some(d) = deltas.iter().find(|d| !d.is_finite() || **d < 0.0) {
            return Err(schema("delta", format!("{d} is not a non-negative number")));
        }
        let lambdas = match (raw.lambda_grid, raw.lambda) {
            (Some(grid), _) => {
                if grid.is_empty() {
                    return Err(schema("lambda_grid", "must not be empty"));
                }
                grid
            }
            (None, Some(l)) => vec![l],
            (None, None) => Vec::new(),
        };
        if let Some(l) = lambdas.iter().find(|l| !l.is_finite() || **l <= 0.0) {
            return Err(schema("lambda", format!("{l} is not a positive rate")));
        }

        let overlap = match raw.overlap.as_deref() {
            None => Overlap::default(),
            Some(s) => s.parse().map_err(|e: String| schema("overlap", e))?,
        };
        let initial = match raw.initial {
            None => InitialCondition::Stationary,
            Some(RawInitial::Named(s)) if s == "stationary" => InitialCondition::Stationary,
            Some(RawInitial::Named(s)) => {
                return Err(schema(
                    "initial",
                    format!("unknown initial `{s}` (expected \"stationary\" or {{\"fixed\": [...]}})"),
                ))
            }
            Some(RawInitial::Fixed { fixed }) => InitialCondition::Fixed(fixed),
        };
        let scenario = ScenarioSpec::new(systems, deltas[0], overlap, initial)
            .map_err(|e| schema("initial", e.to_string()))?;

        let names = match (raw.policies, raw.policy) {
            (Some(list), _) => list,
            (None, Some(p)) => vec![p],
            (None, None) => vec!["prtp".into(), "pptp".into()],
        };
        if names.is_empty() {
            return Err(schema("policies", "must not be empty"));
        }
        let mut policies = names
            .iter()
            .map(|n| n.parse::<PolicyKind>().map_err(|e| schema("policies", e)))
            .collect::<Result<Vec<_>>>()?;
        policies.sort();
        policies.dedup();

        let raw_costs = raw.costs.unwrap_or_else(|| {
            vec![RawCost {
                kind: "c1".into(),
                distance: None,
                weights: None,
            }]
        });
        if raw_costs.is_empty() {
            return Err(schema("costs", "must not be empty"));
        }
        let weights = scenario.weights();
        let costs = raw_costs
            .into_iter()
            .enumerate()
            .map(|(i, c)| parse_cost(i, c, &weights, k))
            .collect::<Result<Vec<_>>>()?;

        let horizon = raw.horizon.unwrap_or(1000.0);
        if !horizon.is_finite() || horizon <= 0.0 {
            return Err(schema("horizon", "must be a positive number"));
        }
        let replications = raw.replications.unwrap_or(100);
        if replications == 0 {
            return Err(schema("replications", "must be at least 1"));
        }
        let tau_grid = raw.tau_grid.unwrap_or_else(|| DEFAULT_TAU_GRID.to_vec());
        if tau_grid.is_empty() || tau_grid.iter().any(|t| !t.is_finite() || *t < 0.0) {
            return Err(schema("tau_grid", "must be a non-empty list of non-negative times"));
        }
        if let Some(t) = &raw.t_grid {
            if t.is_empty() || t.iter().any(|t| !t.is_finite() || *t < 0.0) {
                return Err(schema("t_grid", "must be a non-empty list of non-negative times"));
            }
        }
        if let Some(b) = raw.budget {
            if !b.is_finite() || b <= 0.0 {
                return Err(schema("budget", "must be a positive rate"));
            }
        }

        Ok(Self {
            scenario,
            deltas,
            lambdas,
            policies,
            costs,
            horizon,
            replications,
            seed: raw.seed.unwrap_or(0),
            tau_grid,
            t_grid: raw.t_grid,
            budget: raw.budget,
        })
    }

    /// Sweep grid; every grid must be non-empty.
    pub fn sweep(&self) -> Result<SweepConfig> {
        SweepConfig::new(
            self.deltas.clone(),
            self.lambdas.clone(),
            self.policies.clone(),
            self.costs.clone(),
            self.replications,
            self.horizon,
            self.seed,
        )
    }
}

fn parse_cost(i: usize, c: RawCost, weights: &[f64], k: usize) -> Result<CostFunctionSpec> {
    let field = |f: &str| format!("costs[{i}].{f}");
    if let Some(w) = &c.weights {
        if w.len() != k {
            return Err(schema(field("weights"), format!("expected {k} weights, got {}", w.len())));
        }
    }
    let wrap = |e: Error| schema(field("weights"), e.to_string());
    match c.kind.as_str() {
        "c1" => Ok(CostFunctionSpec::C1),
        "c2" => CostFunctionSpec::c2(c.weights.unwrap_or_else(|| weights.to_vec())).map_err(wrap),
        "c3" => {
            let distance = match c.distance.as_deref() {
                None => Distance::EuclideanPaper,
                Some(d) => d
                    .parse::<Distance>()
                    .map_err(|e| schema(field("distance"), e.to_string()))?,
            };
            match c.weights {
                Some(w) => CostFunctionSpec::c3_weighted(distance, w).map_err(wrap),
                None => Ok(CostFunctionSpec::c3(distance)),
            }
        }
        other => Err(schema(
            field("type"),
            format!("unknown cost type `{other}` (expected c1|c2|c3)"),
        )),
    }
}

/// Grid of (policy, Δ, λ) cells, each simulated `replications` times.
#[derive(Debug, Clone)]
pub struct SweepConfig {
    pub delta_grid: Vec<f64>,
    pub lambda_grid: Vec<f64>,
    pub policies: Vec<PolicyKind>,
    pub costs: Vec<CostFunctionSpec>,
    pub replications: u64,
    pub horizon: f64,
    pub seed: u64,
}

impl SweepConfig {
    pub fn new(
        mut delta_grid: Vec<f64>,
        mut lambda_grid: Vec<f64>,
        mut policies: Vec<PolicyKind>,
        costs: Vec<CostFunctionSpec>,
        replications: u64,
        horizon: f64,
        seed: u64,
    ) -> Result<Self> {
        if delta_grid.is_empty() {
            return Err(schema("delta_grid", "must not be empty"));
        }
        if lambda_grid.is_empty() {
            return Err(schema("lambda_grid", "must not be empty"));
        }
        if policies.is_empty() {
            return Err(schema("policies", "must not be empty"));
        }
        if costs.is_empty() {
            return Err(schema("costs", "must not be empty"));
        }
        if replications == 0 {
            return Err(schema("replications", "must be at least 1"));
        }
        if !horizon.is_finite() || horizon <= 0.0 {
            return Err(schema("horizon", "must be a positive number"));
        }
        if delta_grid.iter().any(|d| !d.is_finite() || *d < 0.0) {
            return Err(schema("delta_grid", "entries must be non-negative"));
        }
        if lambda_grid.iter().any(|l| !l.is_finite() || *l <= 0.0) {
            return Err(schema("lambda_grid", "entries must be positive"));
        }
        delta_grid.sort_by(f64::total_cmp);
        delta_grid.dedup();
        lambda_grid.sort_by(f64::total_cmp);
        lambda_grid.dedup();
        policies.sort();
        policies.dedup();
        Ok(Self {
            delta_grid,
            lambda_grid,
            policies,
            costs,
            replications,
            horizon,
            seed,
        })
    }
}
