use proptest::prelude::*;
use twinsim::analytic::{
    expected_cost_c1, expected_cost_c2, expected_cost_c3_hamming, holding_probability,
    same_state_probability, ExpectationForm,
};
use twinsim::scenario::reference_scenario;
use twinsim::{GeneratorMatrix, InitialCondition, Overlap, PhysicalSystem, RngStream, ScenarioSpec};

fn two_state(a: f64, b: f64) -> PhysicalSystem {
    PhysicalSystem::new("x", GeneratorMatrix::new(&[vec![-a, a], vec![b, -b]]).unwrap(), 1.0).unwrap()
}

/// One path of a 2-state chain from a stationary draw, run to `tau` with
/// plain exponential clocks. Returns (left the start state, differs at tau).
fn sample_path(a: f64, b: f64, tau: f64, rng: &mut RngStream) -> (bool, bool) {
    let start = if rng.uniform() < b / (a + b) { 0 } else { 1 };
    let mut state = start;
    let mut t = 0.0;
    let mut left = false;
    loop {
        let rate = if state == 0 { a } else { b };
        t += -(-rng.uniform()).ln_1p() / rate;
        if t > tau {
            return (left, state != start);
        }
        state = 1 - state;
        left = true;
    }
}

fn within(samples: impl Iterator<Item = f64>, want: f64, k: f64) -> (bool, f64, f64) {
    let xs: Vec<f64> = samples.collect();
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let se = (var / n).sqrt();
    ((mean - want).abs() <= k * se, mean, se)
}

#[test]
fn latched_any_at_half_matches_sojourn_form() {
    let sc = reference_scenario(0.0).unwrap();
    let tau = 0.5;
    let want = 1.0
        - ((2.0 / 3.0) * (-0.5f64).exp() + (1.0 / 3.0) * (-1.0f64).exp())
            * ((2.0 / 3.0) * (-1.5f64).exp() + (1.0 / 3.0) * (-3.0f64).exp());
    let closed = expected_cost_c1(&sc, tau, ExpectationForm::Sojourn).unwrap();
    assert!((closed - want).abs() < 1e-12, "{closed} vs {want}");

    let mut rng = RngStream::new(101, 0);
    let draws = (0..100_000).map(|_| {
        let (l1, _) = sample_path(1.0, 2.0, tau, &mut rng);
        let (l2, _) = sample_path(3.0, 6.0, tau, &mut rng);
        f64::from(u8::from(l1 || l2))
    });
    let (ok, mean, se) = within(draws, want, 3.0);
    assert!(ok, "{mean} ± {se} vs {want}");
}

#[test]
fn q1_mismatch_at_one_matches_diagonal_form() {
    let sys = two_state(1.0, 2.0);
    let same = 5.0 / 9.0 + 4.0 / 9.0 * (-3.0f64).exp();
    assert!((same_state_probability(&sys, 1.0).unwrap() - same).abs() < 1e-12);
    let mut rng = RngStream::new(102, 0);
    let draws = (0..100_000).map(|_| f64::from(u8::from(sample_path(1.0, 2.0, 1.0, &mut rng).1)));
    let (ok, mean, se) = within(draws, 1.0 - same, 3.0);
    assert!(ok, "{mean} ± {se} vs {}", 1.0 - same);
}

#[test]
fn q1_latch_at_one_matches_holding_form() {
    let sys = two_state(1.0, 2.0);
    let hold = (2.0 / 3.0) * (-1.0f64).exp() + (1.0 / 3.0) * (-2.0f64).exp();
    assert!((holding_probability(&sys, 1.0).unwrap() - hold).abs() < 1e-12);
    let mut rng = RngStream::new(103, 0);
    let draws = (0..100_000).map(|_| f64::from(u8::from(sample_path(1.0, 2.0, 1.0, &mut rng).0)));
    let (ok, mean, se) = within(draws, 1.0 - hold, 3.0);
    assert!(ok, "{mean} ± {se} vs {}", 1.0 - hold);
    // The two forms are far apart; the gap is what the crossed validation
    // pairing detects.
    assert!((1.0 - hold) - (1.0 - 5.0 / 9.0 - 4.0 / 9.0 * (-3.0f64).exp()) > 0.25);
}

#[test]
fn zero_elapsed_time_has_no_cost() {
    let sc = reference_scenario(0.0).unwrap();
    for form in [ExpectationForm::Sojourn, ExpectationForm::PaperDiagonal] {
        assert_eq!(expected_cost_c1(&sc, 0.0, form).unwrap(), 0.0);
        assert_eq!(expected_cost_c2(&sc, &[5.0, 1.0], 0.0, form).unwrap(), 0.0);
    }
    assert_eq!(expected_cost_c3_hamming(&sc, &[1.0, 1.0], 0.0).unwrap(), 0.0);
}

fn scenario_of(a1: f64, b1: f64, a2: f64, b2: f64, delta: f64) -> ScenarioSpec {
    ScenarioSpec::new(
        vec![two_state(a1, b1), two_state(a2, b2)],
        delta,
        Overlap::Preempt,
        InitialCondition::Stationary,
    )
    .unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn holding_never_exceeds_occupancy(a in 0.05f64..8.0, b in 0.05f64..8.0, tau in 0.0f64..6.0) {
        let sys = two_state(a, b);
        let hold = holding_probability(&sys, tau).unwrap();
        let same = same_state_probability(&sys, tau).unwrap();
        prop_assert!((0.0..=1.0).contains(&hold));
        prop_assert!((0.0..=1.0 + 1e-12).contains(&same));
        prop_assert!(hold <= same + 1e-12, "{} > {}", hold, same);
    }

    #[test]
    fn diagonal_tends_to_collision_probability(a in 0.5f64..8.0, b in 0.5f64..8.0) {
        let sys = two_state(a, b);
        let pi0 = b / (a + b);
        let want = pi0 * pi0 + (1.0 - pi0) * (1.0 - pi0);
        prop_assert!((same_state_probability(&sys, 50.0).unwrap() - want).abs() < 1e-9);
    }

    #[test]
    fn latching_costs_grow_and_stay_bounded(
        a1 in 0.05f64..8.0, b1 in 0.05f64..8.0, a2 in 0.05f64..8.0, b2 in 0.05f64..8.0,
        delta in 0.0f64..1.0,
        t1 in 0.0f64..4.0, dt in 0.0f64..4.0,
        w1 in 0.1f64..10.0, w2 in 0.1f64..10.0,
    ) {
        let sc = scenario_of(a1, b1, a2, b2, delta);
        let w = [w1, w2];
        let t2 = t1 + dt;
        for form in [ExpectationForm::Sojourn, ExpectationForm::PaperDiagonal] {
            let c1a = expected_cost_c1(&sc, t1, form).unwrap();
            let c2a = expected_cost_c2(&sc, &w, t1, form).unwrap();
            prop_assert!((0.0..=1.0).contains(&c1a));
            prop_assert!(c2a >= -1e-12 && c2a <= w1 + w2 + 1e-12);
            if form == ExpectationForm::Sojourn {
                prop_assert!(expected_cost_c1(&sc, t2, form).unwrap() >= c1a - 1e-12);
                prop_assert!(expected_cost_c2(&sc, &w, t2, form).unwrap() >= c2a - 1e-12);
            }
        }
        // Latching is at least as costly as instantaneous mismatch.
        let lat = expected_cost_c1(&sc, t1, ExpectationForm::Sojourn).unwrap();
        let occ = expected_cost_c1(&sc, t1, ExpectationForm::PaperDiagonal).unwrap();
        prop_assert!(lat >= occ - 1e-12);
    }

    #[test]
    fn hamming_matches_two_state_closed_form(
        a1 in 0.05f64..8.0, b1 in 0.05f64..8.0, a2 in 0.05f64..8.0, b2 in 0.05f64..8.0,
        t in 0.0f64..4.0, delta in 0.0f64..1.0,
    ) {
        let sc = scenario_of(a1, b1, a2, b2, delta);
        // P(same) = π0² + π1² + 2·π0·π1·e^{−(a+b)τ}.
        let differ = |a: f64, b: f64| {
            let p0 = b / (a + b);
            let p1 = 1.0 - p0;
            1.0 - (p0 * p0 + p1 * p1 + 2.0 * p0 * p1 * (-(a + b) * (t + delta)).exp())
        };
        let want = 2.0 * differ(a1, b1) + 0.5 * differ(a2, b2);
        let got = expected_cost_c3_hamming(&sc, &[2.0, 0.5], t).unwrap();
        prop_assert!((got - want).abs() < 1e-9, "{} vs {}", got, want);
    }
}
