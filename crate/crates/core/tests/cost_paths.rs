//! Cost semantics on scripted sample paths and random mismatch states.

use proptest::prelude::*;
use twinsim::cost::{cost_c1, cost_c2, cost_c3, time_average_cost};
use twinsim::trace::{Event, EventTrace};
use twinsim::{CostFunctionSpec, Distance, MismatchState, StateLabels};

fn binary_labels(k: usize) -> Vec<StateLabels> {
    vec![StateLabels::default_for(2); k]
}

fn query(trace: &mut EventTrace, id: u64, t: f64, delta: f64, snapshot: &[usize]) {
    trace.push(t, Event::QueryIssued { id, snapshot: snapshot.to_vec() });
    trace.push(
        t + delta,
        Event::SyncCompleted {
            id,
            snapshot: snapshot.to_vec(),
            query_time: t,
        },
    );
}

fn jump(trace: &mut EventTrace, t: f64, system: usize, from: usize, to: usize) {
    trace.push(t, Event::Transition { system, from, to });
}

/// Two twinning instances at t=1 and t=4 with Δ=0.5; the physical state
/// moves (0,0) → (0,1) at t=2 and (0,1) → (1,1) at t=3.
fn two_sync_path() -> EventTrace {
    let mut tr = EventTrace::new(vec![0, 0], 5.0);
    query(&mut tr, 0, 1.0, 0.5, &[0, 0]);
    jump(&mut tr, 2.0, 1, 0, 1);
    jump(&mut tr, 3.0, 0, 0, 1);
    query(&mut tr, 1, 4.0, 0.5, &[1, 1]);
    tr
}

/// Like [`two_sync_path`] but both systems return to 0 before the second
/// query: (1,1) → (0,1) at 3.5 and (0,1) → (0,0) at 3.8.
fn return_path() -> EventTrace {
    let mut tr = EventTrace::new(vec![0, 0], 5.0);
    query(&mut tr, 0, 1.0, 0.5, &[0, 0]);
    jump(&mut tr, 2.0, 1, 0, 1);
    jump(&mut tr, 3.0, 0, 0, 1);
    jump(&mut tr, 3.5, 0, 1, 0);
    jump(&mut tr, 3.8, 1, 1, 0);
    query(&mut tr, 1, 4.0, 0.5, &[0, 0]);
    tr
}

fn averages(tr: &EventTrace) -> [f64; 3] {
    let labels = binary_labels(2);
    let c2 = CostFunctionSpec::c2(vec![5.0, 1.0]).unwrap();
    let c3 = CostFunctionSpec::c3(Distance::EuclideanPaper);
    [
        time_average_cost(tr, &CostFunctionSpec::C1, &labels, 5.0).unwrap(),
        time_average_cost(tr, &c2, &labels, 5.0).unwrap(),
        time_average_cost(tr, &c3, &labels, 5.0).unwrap(),
    ]
}

#[test]
fn two_sync_path_integrals() {
    // C1 = 1 on [2, 4.5); C2 = 1 on [2, 3), 6 on [3, 4.5);
    // C3 = 1 on [2, 3), 2 on [3, 4.5).
    let [c1, c2, c3] = averages(&two_sync_path());
    assert!((c1 - 2.5 / 5.0).abs() < 1e-12, "{c1}");
    assert!((c2 - 10.0 / 5.0).abs() < 1e-12, "{c2}");
    assert!((c3 - 4.0 / 5.0).abs() < 1e-12, "{c3}");
}

#[test]
fn returns_clear_c3_but_not_latches() {
    // C3 = 1 on [2, 3), 2 on [3, 3.5), 1 on [3.5, 3.8), 0 after.
    let [c1, c2, c3] = averages(&return_path());
    assert!((c1 - 0.5).abs() < 1e-12, "{c1}");
    assert!((c2 - 2.0).abs() < 1e-12, "{c2}");
    assert!((c3 - 2.3 / 5.0).abs() < 1e-12, "{c3}");
}

#[test]
fn partial_horizon() {
    let tr = two_sync_path();
    let labels = binary_labels(2);
    let c1 = time_average_cost(&tr, &CostFunctionSpec::C1, &labels, 2.5).unwrap();
    assert!((c1 - 0.5 / 2.5).abs() < 1e-12);
}

#[test]
fn rectangle_and_zero_paths() {
    let labels = binary_labels(1);
    let quiet = EventTrace::new(vec![0], 10.0);
    assert_eq!(time_average_cost(&quiet, &CostFunctionSpec::C1, &labels, 10.0).unwrap(), 0.0);

    let mut half = EventTrace::new(vec![0], 10.0);
    jump(&mut half, 5.0, 0, 0, 1);
    let c1 = time_average_cost(&half, &CostFunctionSpec::C1, &labels, 10.0).unwrap();
    assert!((c1 - 0.5).abs() < 1e-15);
}

#[test]
fn zero_effect_syncs_do_not_change_averages() {
    let base = two_sync_path();
    let mut refined = EventTrace::new(base.initial.clone(), base.horizon);
    // Before any transition the extra sync reinstalls the same state.
    query(&mut refined, 7, 1.6, 0.1, &[0, 0]);
    for r in &base.records {
        refined.push(r.time, r.event.clone());
    }
    refined.records.sort_by(|a, b| a.time.total_cmp(&b.time));
    assert_eq!(averages(&base), averages(&refined));
}

#[test]
fn sync_after_query_keeps_later_transitions_latched() {
    // A transition between query and sync completion stays latched.
    let mut tr = EventTrace::new(vec![0], 4.0);
    tr.push(1.0, Event::QueryIssued { id: 0, snapshot: vec![0] });
    jump(&mut tr, 1.2, 0, 0, 1);
    tr.push(
        1.5,
        Event::SyncCompleted {
            id: 0,
            snapshot: vec![0],
            query_time: 1.0,
        },
    );
    let labels = binary_labels(1);
    let c1 = time_average_cost(&tr, &CostFunctionSpec::C1, &labels, 4.0).unwrap();
    assert!((c1 - 2.8 / 4.0).abs() < 1e-12, "{c1}");
}

fn mismatch(k: usize) -> impl Strategy<Value = MismatchState> {
    (
        prop::collection::vec(0usize..2, k),
        prop::collection::vec(0usize..2, k),
        prop::collection::vec(any::<bool>(), k),
    )
        .prop_map(|(s, s_hat, mut latch)| {
            // Consistency: an unlatched system matches its twin.
            for i in 0..s.len() {
                if s[i] != s_hat[i] {
                    latch[i] = true;
                }
            }
            MismatchState { s, s_hat, latch }
        })
}

proptest! {
    #[test]
    fn c1_iff_c2_positive(m in mismatch(3), w in prop::collection::vec(0.01f64..10.0, 3)) {
        let c2 = cost_c2(&m, &w).unwrap();
        prop_assert_eq!(cost_c1(&m) == 1.0, c2 > 0.0);
    }

    #[test]
    fn unit_c2_dominates_hamming(m in mismatch(3)) {
        let labels = binary_labels(3);
        let ham = cost_c3(&m, &CostFunctionSpec::c3(Distance::Hamming), &labels).unwrap();
        prop_assert!(cost_c2(&m, &[1.0; 3]).unwrap() >= ham);
    }

    #[test]
    fn distances_are_symmetric_and_vanish_on_diagonal(
        a in prop::collection::vec(-3.0f64..3.0, 3),
        b in prop::collection::vec(-3.0f64..3.0, 3),
    ) {
        for d in Distance::ALL {
            prop_assert_eq!(d.eval(&a, &a, None), 0.0);
            let ab = d.eval(&a, &b, None);
            let ba = d.eval(&b, &a, None);
            prop_assert!((ab - ba).abs() <= 1e-12, "{} {} {}", d, ab, ba);
            prop_assert!(ab >= 0.0);
        }
    }

    #[test]
    fn binary_distances_coincide(m in mismatch(4)) {
        let labels = binary_labels(4);
        let eval = |d| cost_c3(&m, &CostFunctionSpec::c3(d), &labels).unwrap();
        let ham = eval(Distance::Hamming);
        prop_assert_eq!(eval(Distance::EuclideanPaper), ham);
        prop_assert_eq!(eval(Distance::Manhattan), ham);
    }
}
