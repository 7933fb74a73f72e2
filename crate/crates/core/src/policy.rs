//! Twinning policies.
//!
//! * PRTP (pull): the monitor issues queries as a Poisson process.
//! * PPTP (push): each physical transition triggers a query with probability
//!   `p_t = min(1, λ/σ)`, snapshotting the post-transition state.
//! * Periodic: queries every `1/λ`.
//! * Lookup: replays a tabulated MDP policy (zero-delay scenarios only).

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::mdp::{Action, MdpSolution, MdpState};
use crate::rng::RngStream;
use crate::scenario::ScenarioSpec;

/// Rate-parameterized policy families, as named in configs and CSV output.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum PolicyKind {
    Periodic,
    Pptp,
    Prtp,
}

impl PolicyKind {
    pub fn as_str(self) -> &'static str {
        match self {
            PolicyKind::Periodic => "periodic",
            PolicyKind::Pptp => "pptp",
            PolicyKind::Prtp => "prtp",
        }
    }

    pub fn with_rate(self, rate: f64) -> Result<PolicySpec> {
        check_rate(rate)?;
        Ok(match self {
            PolicyKind::Periodic => PolicySpec::Periodic { rate },
            PolicyKind::Pptp => PolicySpec::Pptp { rate },
            PolicyKind::Prtp => PolicySpec::Prtp { rate },
        })
    }
}

impl fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PolicyKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "prtp" => Ok(PolicyKind::Prtp),
            "pptp" => Ok(PolicyKind::Pptp),
            "periodic" => Ok(PolicyKind::Periodic),
            other => Err(format!(
                "unknown policy `{other}` (expected prtp|pptp|periodic)"
            )),
        }
    }
}

#[derive(Debug, Clone)]
pub enum PolicySpec {
    Prtp { rate: f64 },
    Pptp { rate: f64 },
    Periodic { rate: f64 },
    Lookup(Arc<MdpSolution>),
}

impl PolicySpec {
    pub fn name(&self) -> &'static str {
        match self {
            PolicySpec::Prtp { .. } => "prtp",
            PolicySpec::Pptp { .. } => "pptp",
            PolicySpec::Periodic { .. } => "periodic",
            PolicySpec::Lookup(_) => "lookup",
        }
    }

    /// The configured average rate; `None` for lookup policies.
    pub fn target_rate(&self) -> Option<f64> {
        match *self {
            PolicySpec::Prtp { rate } | PolicySpec::Pptp { rate } | PolicySpec::Periodic { rate } => {
                Some(rate)
            }
            PolicySpec::Lookup(_) => None,
        }
    }

    /// Rejects invalid rates and lookup tables that do not fit `scenario`.
    pub fn check(&self, scenario: &ScenarioSpec) -> Result<()> {
        match self {
            PolicySpec::Lookup(sol) => {
                if scenario.delta != 0.0 {
                    return Err(Error::PolicyMismatch(format!(
                        "lookup policies require delta = 0 (got {})",
                        scenario.delta
                    )));
                }
                if sol.state_counts() != scenario.state_counts().as_slice() {
                    return Err(Error::PolicyMismatch(
                        "lookup table was solved for a different state space".into(),
                    ));
                }
                Ok(())
            }
            other => check_rate(other.target_rate().unwrap_or(f64::NAN)),
        }
    }
}

fn check_rate(rate: f64) -> Result<()> {
    if !rate.is_finite() || rate <= 0.0 {
        return Err(Error::InvalidRate(rate));
    }
    Ok(())
}

/// Next PRTP inter-query time, `Exponential(rate)`.
pub fn prtp_next_query(rng: &mut RngStream, rate: f64) -> Result<f64> {
    check_rate(rate)?;
    Ok(rng.exponential(rate))
}

/// PPTP trigger probability `min(1, λ/σ)`.
pub fn pptp_probability(scenario: &ScenarioSpec, lambda_avg: f64) -> Result<f64> {
    check_rate(lambda_avg)?;
    Ok((lambda_avg / scenario.total_event_rate()).min(1.0))
}

/// Whether a transition triggers a PPTP query.
pub fn pptp_on_transition(rng: &mut RngStream, p: f64) -> Result<bool> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::InvalidProbability(p));
    }
    Ok(rng.bernoulli(p))
}

/// Periodic inter-query time `1/rate`.
pub fn periodic_next_query(rate: f64) -> Result<f64> {
    check_rate(rate)?;
    Ok(1.0 / rate)
}

/// Tabulated greedy action for `state`. Constrained solutions may also
/// randomize some states; see [`lookup_sample`].
pub fn lookup_decide(solution: &MdpSolution, state: &MdpState) -> Result<Action> {
    solution.decide(state)
}

/// Draws an action from the solution's (possibly randomized) table.
pub fn lookup_sample(solution: &MdpSolution, state: &MdpState, rng: &mut RngStream) -> Result<Action> {
    let p = solution.twin_probability_of(state)?;
    Ok(if rng.bernoulli(p) { Action::Twin } else { Action::Idle })
}
