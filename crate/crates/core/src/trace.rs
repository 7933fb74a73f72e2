//! Recorded sample paths of one replication.

use std::fmt::Write as _;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub enum Event {
    /// Physical system `system` jumped `from` → `to`.
    Transition {
        system: usize,
        from: usize,
        to: usize,
    },
    /// A twinning query snapshotted the joint physical state.
    QueryIssued { id: u64, snapshot: Vec<usize> },
    /// The snapshot taken by query `id` was installed into the twin.
    SyncCompleted {
        id: u64,
        snapshot: Vec<usize>,
        query_time: f64,
    },
}

impl Event {
    pub fn kind(&self) -> &'static str {
        match self {
            Event::Transition { .. } => "ps_transition",
            Event::QueryIssued { .. } => "query_issued",
            Event::SyncCompleted { .. } => "sync_completed",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Record {
    pub time: f64,
    pub event: Event,
}

/// Time-ordered events on `[0, horizon]`, starting from `initial` with the
/// twin synchronized to it at time 0.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct EventTrace {
    pub initial: Vec<usize>,
    pub horizon: f64,
    pub records: Vec<Record>,
}

impl EventTrace {
    pub fn new(initial: Vec<usize>, horizon: f64) -> Self {
        Self {
            initial,
            horizon,
            records: Vec::new(),
        }
    }

    pub fn push(&mut self, time: f64, event: Event) {
        self.records.push(Record { time, event });
    }

    pub fn query_count(&self) -> usize {
        self.records
            .iter()
            .filter(|r| matches!(r.event, Event::QueryIssued { .. }))
            .count()
    }

    /// Tab-separated dump: `timestamp<TAB>event_kind<TAB>details`, timestamps
    /// at 9 decimals. The first line carries the initial joint state.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{:.9}\tinitial\tstate={}", 0.0, join(&self.initial));
        for r in &self.records {
            let details = match &r.event {
                Event::Transition { system, from, to } => {
                    format!("system={system} from={from} to={to}")
                }
                Event::QueryIssued { id, snapshot } => {
                    format!("id={id} snapshot={}", join(snapshot))
                }
                Event::SyncCompleted {
                    id,
                    snapshot,
                    query_time,
                } => format!(
                    "id={id} snapshot={} query_time={query_time:.9}",
                    join(snapshot)
                ),
            };
            let _ = writeln!(out, "{:.9}\t{}\t{}", r.time, r.event.kind(), details);
        }
        out
    }
}

fn join(v: &[usize]) -> String {
    v.iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join(",")
}

/// `λ(t)`: queries issued at or before `t`, divided by `t`.
pub fn empirical_twinning_rate(trace: &EventTrace, t: f64) -> Result<f64> {
    if !t.is_finite() || t <= 0.0 || t > trace.horizon {
        return Err(Error::InvalidTime(t));
    }
    let count = trace
        .records
        .iter()
        .take_while(|r| r.time <= t)
        .filter(|r| matches!(r.event, Event::QueryIssued { .. }))
        .count();
    Ok(count as f64 / t)
}
