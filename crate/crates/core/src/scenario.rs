//! The physical-system network being twinned.

use crate::cost::StateLabels;
use crate::ctmc::{GeneratorMatrix, StationaryDistribution};
use crate::error::{Error, Result};
use crate::rng::RngStream;

/// How a query issued while a synchronization is in flight is handled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Overlap {
    /// The new query aborts the in-flight synchronization.
    #[default]
    Preempt,
    /// Every query completes, in issue order.
    Parallel,
}

impl Overlap {
    pub fn as_str(self) -> &'static str {
        match self {
            Overlap::Preempt => "preempt",
            Overlap::Parallel => "parallel",
        }
    }
}

impl std::str::FromStr for Overlap {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "preempt" => Ok(Overlap::Preempt),
            "parallel" => Ok(Overlap::Parallel),
            other => Err(format!("unknown overlap `{other}` (expected preempt|parallel)")),
        }
    }
}

/// Joint state at time 0.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub enum InitialCondition {
    /// Independent draws from each system's stationary law.
    #[default]
    Stationary,
    Fixed(Vec<usize>),
}

/// One physical system: its generator plus the data the cost functions need.
#[derive(Debug, Clone)]
pub struct PhysicalSystem {
    pub name: String,
    generator: GeneratorMatrix,
    stationary: StationaryDistribution,
    pub weight: f64,
    pub labels: StateLabels,
}

impl PhysicalSystem {
    pub fn new(name: impl Into<String>, generator: GeneratorMatrix, weight: f64) -> Result<Self> {
        let labels = StateLabels::default_for(generator.n_states());
        Self::with_labels(name, generator, weight, labels)
    }

    pub fn with_labels(
        name: impl Into<String>,
        generator: GeneratorMatrix,
        weight: f64,
        labels: StateLabels,
    ) -> Result<Self> {
        if !weight.is_finite() || weight < 0.0 {
            return Err(Error::NegativeWeight {
                index: 0,
                value: weight,
            });
        }
        if labels.len() != generator.n_states() {
            return Err(Error::LabelLengthMismatch {
                system: 0,
                states: generator.n_states(),
                labels: labels.len(),
            });
        }
        let stationary = generator.stationary_distribution()?;
        Ok(Self {
            name: name.into(),
            generator,
            stationary,
            weight,
            labels,
        })
    }

    pub fn generator(&self) -> &GeneratorMatrix {
        &self.generator
    }

    pub fn stationary(&self) -> &StationaryDistribution {
        &self.stationary
    }

    /// `Σ_j π_j r_j`: long-run transition rate of this system.
    pub fn event_rate(&self) -> f64 {
        self.stationary
            .probabilities()
            .iter()
            .zip(self.generator.exit_rates())
            .map(|(p, r)| p * r)
            .sum()
    }
}

/// The PS network with its synchronization parameters.
#[derive(Debug, Clone)]
pub struct ScenarioSpec {
    systems: Vec<PhysicalSystem>,
    pub delta: f64,
    pub overlap: Overlap,
    pub initial: InitialCondition,
}

impl ScenarioSpec {
    pub fn new(
        systems: Vec<PhysicalSystem>,
        delta: f64,
        overlap: Overlap,
        initial: InitialCondition,
    ) -> Result<Self> {
        if systems.is_empty() {
            return Err(Error::InvalidScenario("at least one system is required".into()));
        }
        check_delta(delta)?;
        let spec = Self {
            systems,
            delta,
            overlap,
            initial,
        };
        spec.validate_initial()?;
        Ok(spec)
    }

    fn validate_initial(&self) -> Result<()> {
        if let InitialCondition::Fixed(state) = &self.initial {
            if state.len() != self.systems.len() {
                return Err(Error::InvalidScenario(format!(
                    "fixed initial state has {} entries for {} systems",
                    state.len(),
                    self.systems.len()
                )));
            }
            for (i, (&s, sys)) in state.iter().zip(&self.systems).enumerate() {
                if s >= sys.generator.n_states() {
                    return Err(Error::InvalidScenario(format!(
                        "fixed initial state {s} out of range for system {i}"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Copy of this scenario with a different synchronization delay.
    pub fn with_delta(&self, delta: f64) -> Result<Self> {
        check_delta(delta)?;
        Ok(Self {
            delta,
            ..self.clone()
        })
    }

    pub fn with_overlap(&self, overlap: Overlap) -> Self {
        Self {
            overlap,
            ..self.clone()
        }
    }

    pub fn systems(&self) -> &[PhysicalSystem] {
        &self.systems
    }

    pub fn len(&self) -> usize {
        self.systems.len()
    }

    pub fn is_empty(&self) -> bool {
        self.systems.is_empty()
    }

    pub fn weights(&self) -> Vec<f64> {
        self.systems.iter().map(|s| s.weight).collect()
    }

    pub fn labels(&self) -> Vec<StateLabels> {
        self.systems.iter().map(|s| s.labels.clone()).collect()
    }

    pub fn state_counts(&self) -> Vec<usize> {
        self.systems.iter().map(|s| s.generator.n_states()).collect()
    }

    /// Aggregate stationary transition rate σ = Σ_i Σ_j π_ij r_ij.
    pub fn total_event_rate(&self) -> f64 {
        self.systems.iter().map(PhysicalSystem::event_rate).sum()
    }

    pub fn draw_initial(&self, rng: &mut RngStream) -> Vec<usize> {
        match &self.initial {
            InitialCondition::Stationary => self
                .systems
                .iter()
                .map(|s| s.stationary.sample(rng))
                .collect(),
            InitialCondition::Fixed(state) => state.clone(),
        }
    }
}

fn check_delta(delta: f64) -> Result<()> {
    if !delta.is_finite() || delta < 0.0 {
        return Err(Error::InvalidScenario(format!(
            "delta must be finite and non-negative (got {delta})"
        )));
    }
    Ok(())
}

/// The two-system network used throughout the numerical study: rates
/// `[[-1,1],[2,-2]]` and `[[-3,3],[6,-6]]`, weights 5 and 1.
pub fn reference_scenario(delta: f64) -> Result<ScenarioSpec> {
    let a = GeneratorMatrix::new(&[vec![-1.0, 1.0], vec![2.0, -2.0]])?;
    let b = GeneratorMatrix::new(&[vec![-3.0, 3.0], vec![6.0, -6.0]])?;
    ScenarioSpec::new(
        vec![
            PhysicalSystem::new("ps1", a, 5.0)?,
            PhysicalSystem::new("ps2", b, 1.0)?,
        ],
        delta,
        Overlap::Preempt,
        InitialCondition::Stationary,
    )
}
