//! Digital-twin synchronization of independent continuous-time Markov
//! systems under a twinning-rate budget.
//!
//! * [`ctmc`]: generators, stationary laws, uniformized transition matrices.
//! * [`cost`]: the latching (`C1`, `C2`) and distance (`C3`) costs.
//! * [`analytic`]: closed-form expected costs after a sample.
//! * [`sim`]: event-driven simulation with delayed synchronization.
//! * [`policy`]: PRTP, PPTP, periodic and lookup twinning policies.
//! * [`mdp`]: optimal zero-delay policies by relative value iteration.
//! * [`config`], [`experiment`]: JSON scenarios, sweeps and reports.

pub mod analytic;
pub mod config;
pub mod cost;
pub mod ctmc;
pub mod error;
pub mod experiment;
pub mod mdp;
pub mod policy;
pub mod rng;
pub mod scenario;
pub mod sim;
pub mod trace;

pub use analytic::ExpectationForm;
pub use cost::{CostFunctionSpec, Distance, MismatchState, StateLabels};
pub use ctmc::{GeneratorMatrix, StationaryDistribution};
pub use error::{Error, Result};
pub use mdp::{Action, MdpModel, MdpSolution};
pub use policy::{PolicyKind, PolicySpec};
pub use rng::RngStream;
pub use scenario::{InitialCondition, Overlap, PhysicalSystem, ScenarioSpec};
pub use sim::{Replication, ReplicationSummary};
pub use trace::EventTrace;
