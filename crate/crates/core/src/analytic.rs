//! Closed-form expected costs at elapsed time `τ = t + Δ` after a sample.
//!
//! Two per-system "no mismatch" probabilities are available:
//!
//! * [`ExpectationForm::PaperDiagonal`]: `Σ_k π_k (e^{Qτ})_kk`, the
//!   probability that the system *occupies* its sampled state at `τ`. Return
//!   paths are included, so this is exact for instantaneous mismatch
//!   (Hamming-type `C3`) but not for the latching costs.
//! * [`ExpectationForm::Sojourn`]: `Σ_k π_k e^{−r_k τ}`, the probability
//!   that the system has *never left* its sampled state, i.e. `P(T₁ ≥ τ)`.
//!   This is exact for the latching costs `C1`/`C2`.

use crate::error::{Error, Result};
use crate::scenario::{PhysicalSystem, ScenarioSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ExpectationForm {
    PaperDiagonal,
    Sojourn,
}

impl ExpectationForm {
    pub fn as_str(self) -> &'static str {
        match self {
            ExpectationForm::PaperDiagonal => "paper_diagonal",
            ExpectationForm::Sojourn => "sojourn",
        }
    }
}

fn check_tau(tau: f64) -> Result<()> {
    if !tau.is_finite() || tau < 0.0 {
        return Err(Error::InvalidTime(tau));
    }
    Ok(())
}

/// `Σ_k π_k (e^{Qτ})_kk`.
pub fn same_state_probability(system: &PhysicalSystem, tau: f64) -> Result<f64> {
    check_tau(tau)?;
    let p = system.generator().transition_matrix(tau)?;
    Ok(system
        .stationary()
        .probabilities()
        .iter()
        .enumerate()
        .map(|(k, pk)| pk * p[(k, k)])
        .sum())
}

/// `Σ_k π_k e^{−r_k τ}`.
pub fn holding_probability(system: &PhysicalSystem, tau: f64) -> Result<f64> {
    check_tau(tau)?;
    Ok(system
        .stationary()
        .probabilities()
        .iter()
        .zip(system.generator().exit_rates())
        .map(|(pk, rk)| pk * (-rk * tau).exp())
        .sum())
}

fn stay_probability(system: &PhysicalSystem, tau: f64, form: ExpectationForm) -> Result<f64> {
    match form {
        ExpectationForm::PaperDiagonal => same_state_probability(system, tau),
        ExpectationForm::Sojourn => holding_probability(system, tau),
    }
}

fn elapsed(t: f64, delta: f64) -> Result<f64> {
    check_tau(t)?;
    check_tau(delta)?;
    Ok(t + delta)
}

/// `E[C1(t)] = 1 − ∏_i p_i(t + Δ)`, using the scenario's Δ.
pub fn expected_cost_c1(scenario: &ScenarioSpec, t: f64, form: ExpectationForm) -> Result<f64> {
    let tau = elapsed(t, scenario.delta)?;
    let mut stay = 1.0;
    for sys in scenario.systems() {
        stay *= stay_probability(sys, tau, form)?;
    }
    Ok(1.0 - stay)
}

/// `E[C2(t)] = Σ_i w_i (1 − p_i(t + Δ))`.
pub fn expected_cost_c2(
    scenario: &ScenarioSpec,
    weights: &[f64],
    t: f64,
    form: ExpectationForm,
) -> Result<f64> {
    if weights.len() != scenario.len() {
        return Err(Error::WeightLengthMismatch {
            expected: scenario.len(),
            got: weights.len(),
        });
    }
    let tau = elapsed(t, scenario.delta)?;
    scenario
        .systems()
        .iter()
        .zip(weights)
        .map(|(sys, w)| Ok(w * (1.0 - stay_probability(sys, tau, form)?)))
        .sum()
}

/// Expected weighted Hamming mismatch `Σ_i w_i P(S_i(τ) ≠ S_i(0))`. The
/// occupancy form is exact here since mismatch is not latched.
pub fn expected_cost_c3_hamming(scenario: &ScenarioSpec, weights: &[f64], t: f64) -> Result<f64> {
    expected_cost_c2(scenario, weights, t, ExpectationForm::PaperDiagonal)
}
