//! Acceptance gate: one PASS/FAIL line per criterion, non-zero exit if any
//! criterion fails.

use std::time::{Duration, Instant};

use twinsim::config::SweepConfig;
use twinsim::experiment::{rows_to_csv, run_optimal, run_sweep, run_validation, simulate_cell, with_threads, SweepRow};
use twinsim::policy::pptp_probability;
use twinsim::scenario::reference_scenario;
use twinsim::{CostFunctionSpec, Distance, GeneratorMatrix, PolicyKind};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

fn q1() -> GeneratorMatrix {
    GeneratorMatrix::new(&[vec![-1.0, 1.0], vec![2.0, -2.0]]).unwrap()
}

fn q2() -> GeneratorMatrix {
    GeneratorMatrix::new(&[vec![-3.0, 3.0], vec![6.0, -6.0]]).unwrap()
}

fn costs() -> Vec<CostFunctionSpec> {
    vec![
        CostFunctionSpec::C1,
        CostFunctionSpec::c2(vec![5.0, 1.0]).unwrap(),
        CostFunctionSpec::c3(Distance::EuclideanPaper),
    ]
}

fn stationary() -> Outcome {
    let mut err: f64 = 0.0;
    for g in [q1(), q2()] {
        let pi = g.stationary_distribution().unwrap();
        err = err.max((pi.probabilities()[0] - 2.0 / 3.0).abs());
        err = err.max((pi.probabilities()[1] - 1.0 / 3.0).abs());
    }
    outcome(err <= 1e-10, format!("max |π − (2/3, 1/3)| = {err:.3e}"))
}

fn calibration() -> Outcome {
    let sc = reference_scenario(0.0).unwrap();
    let sigma = sc.total_event_rate();
    let p = pptp_probability(&sc, 1.0).unwrap();
    let pass = (sigma - 16.0 / 3.0).abs() <= 1e-12 && (p - 3.0 / 16.0).abs() <= 1e-12;
    outcome(pass, format!("σ = {sigma}, p_t = {p}"))
}

fn matrix_exponential() -> Outcome {
    let mut err: f64 = 0.0;
    for (a, b, g) in [(1.0, 2.0, q1()), (3.0, 6.0, q2())] {
        let s: f64 = a + b;
        for tau in [0.01, 0.1, 1.0, 5.0] {
            let e = (-s * tau).exp();
            let want = [
                [b / s + a / s * e, a / s - a / s * e],
                [b / s - b / s * e, a / s + b / s * e],
            ];
            let p = g.transition_matrix(tau).unwrap();
            for i in 0..2 {
                for j in 0..2 {
                    err = err.max((p[(i, j)] - want[i][j]).abs());
                }
            }
        }
    }
    outcome(err <= 1e-9, format!("max entrywise error {err:.3e}"))
}

fn theorem_validation() -> Outcome {
    let sc = reference_scenario(0.0).unwrap();
    let start = Instant::now();
    let matched = run_validation(&sc, &[0.1, 0.5, 1.0, 2.0], 100_000, 4, false).unwrap();
    let crossed = run_validation(&sc, &[1.0], 100_000, 4, true).unwrap();
    let elapsed = start.elapsed();
    let crossed_z = crossed.max_abs_z();
    let pass = matched.passed() && crossed_z > 4.0 && elapsed <= Duration::from_secs(60);
    outcome(
        pass,
        format!(
            "matched max |z| = {:.3} over {} points, crossed max |z| = {crossed_z:.1}, {elapsed:.1?}",
            matched.max_abs_z(),
            matched.points.len()
        ),
    )
}

fn rate_compliance() -> Outcome {
    let sc = reference_scenario(0.0).unwrap();
    let sigma = sc.total_event_rate();
    let start = Instant::now();
    let mut worst: f64 = 0.0;
    let mut failures = Vec::new();
    for (pi, kind) in [PolicyKind::Prtp, PolicyKind::Pptp, PolicyKind::Periodic].into_iter().enumerate() {
        for (li, lambda) in [1.0f64, 10.0, 30.0].into_iter().enumerate() {
            let target = if kind == PolicyKind::Pptp { lambda.min(sigma) } else { lambda };
            let policy = kind.with_rate(lambda).unwrap();
            let cell = (pi * 3 + li) as u64;
            let stats = simulate_cell(&sc, &policy, &[CostFunctionSpec::C1], 1000.0, 100, 5, cell).unwrap();
            let dev = (stats.rate.mean - target).abs();
            let z = if stats.rate.stderr > 0.0 { dev / stats.rate.stderr } else if dev < 1e-12 { 0.0 } else { f64::INFINITY };
            worst = worst.max(z);
            if z > 3.0 {
                failures.push(format!("{}@{lambda}", kind.as_str()));
            }
        }
    }
    let elapsed = start.elapsed();
    let pass = failures.is_empty() && elapsed <= Duration::from_secs(60);
    outcome(pass, format!("max |z| = {worst:.3}, off-target {failures:?}, {elapsed:.1?}"))
}

fn figure_sweep() -> SweepConfig {
    SweepConfig::new(
        (0..=6).map(|i| f64::from(i) * 0.1).collect(),
        (1..=30).map(f64::from).collect(),
        vec![PolicyKind::Prtp, PolicyKind::Pptp],
        costs(),
        200,
        500.0,
        2024,
    )
    .unwrap()
}

fn find<'a>(rows: &'a [SweepRow], policy: &str, delta: f64, lambda: f64, cost: &str) -> &'a SweepRow {
    rows.iter()
        .find(|r| r.policy == policy && r.delta == delta && r.lambda_target == lambda && r.cost_kind == cost)
        .expect("cell present")
}

fn qualitative(rows: &[SweepRow], sweep: &SweepConfig, elapsed: Duration) -> Outcome {
    let mut shares = Vec::new();
    let mut all_shares = true;
    for cost in &sweep.costs {
        let label = cost.label();
        let mut wins = 0;
        let mut total = 0;
        for &d in &sweep.delta_grid {
            for &l in &sweep.lambda_grid {
                let pptp = find(rows, "pptp:preempt", d, l, &label);
                let prtp = find(rows, "prtp:preempt", d, l, &label);
                total += 1;
                if pptp.mean_cost <= prtp.mean_cost {
                    wins += 1;
                }
            }
        }
        let share = f64::from(wins) / f64::from(total);
        all_shares &= share >= 0.8;
        shares.push(format!("{label} {:.0}%", 100.0 * share));
    }

    let d = *sweep.delta_grid.last().unwrap();
    let mut rises = 0;
    for policy in ["prtp:preempt", "pptp:preempt"] {
        for cost in &sweep.costs {
            let label = cost.label();
            let curve: Vec<&SweepRow> = sweep.lambda_grid.iter().map(|&l| find(rows, policy, d, l, &label)).collect();
            let rising = curve.iter().enumerate().any(|(i, lo)| {
                curve[i + 1..]
                    .iter()
                    .any(|hi| hi.mean_cost - lo.mean_cost > hi.stderr + lo.stderr)
            });
            if rising {
                rises += 1;
            }
        }
    }
    let pass = all_shares && rises > 0 && elapsed <= Duration::from_secs(600);
    outcome(
        pass,
        format!(
            "PPTP ≤ PRTP on {}; {rises} rising policy/cost curves at Δ = {d:.1}; {elapsed:.1?}",
            shares.join(", ")
        ),
    )
}

fn optimal_benchmark() -> Outcome {
    let sc = reference_scenario(0.0).unwrap();
    let start = Instant::now();
    let report = run_optimal(&sc, &[CostFunctionSpec::C1], 1.0, 1000, 1000.0, 7).unwrap();
    let elapsed = start.elapsed();
    let e = &report.entries[0];
    let sol = &e.solution;
    let [lookup, pptp, prtp] = [&e.comparison[0], &e.comparison[1], &e.comparison[2]];
    let beats = |b: &SweepRow| lookup.mean_cost <= b.mean_cost + 2.0 * b.stderr;
    let pass = sol.achieved_rate <= 1.0
        && e.residual <= 1e-8
        && beats(pptp)
        && beats(prtp)
        && elapsed <= Duration::from_secs(300);
    outcome(
        pass,
        format!(
            "rate {:.6}, residual {:.2e}, lookup {:.4} ± {:.4} vs PPTP {:.4} ± {:.4}, PRTP {:.4} ± {:.4}, {elapsed:.1?}",
            sol.achieved_rate,
            e.residual,
            lookup.mean_cost,
            lookup.stderr,
            pptp.mean_cost,
            pptp.stderr,
            prtp.mean_cost,
            prtp.stderr
        ),
    )
}

fn report(n: usize, name: &str, o: &Outcome) {
    let verdict = if o.pass { "PASS" } else { "FAIL" };
    println!("criterion {n} [{verdict}] {name}: {}", o.detail);
}

fn main() {
    let mut results = Vec::new();
    let mut run = |n: usize, name: &str, o: Outcome| {
        report(n, name, &o);
        results.push(o.pass);
    };

    run(1, "stationary solve", stationary());
    run(2, "rate calibration", calibration());
    run(3, "matrix exponential", matrix_exponential());
    run(4, "closed-form validation", theorem_validation());
    run(5, "policy rate compliance", rate_compliance());

    let sweep = figure_sweep();
    let base = reference_scenario(0.0).unwrap();
    let start = Instant::now();
    let rows = run_sweep(&base, &sweep).unwrap();
    let elapsed = start.elapsed();
    run(6, "sweep qualitative shape", qualitative(&rows, &sweep, elapsed));

    run(7, "constrained MDP benchmark", optimal_benchmark());

    let first = rows_to_csv(&rows);
    let single = with_threads(Some(1), || rows_to_csv(&run_sweep(&base, &sweep).unwrap()));
    let double = with_threads(Some(2), || rows_to_csv(&run_sweep(&base, &sweep).unwrap()));
    run(
        8,
        "determinism",
        outcome(
            first == single && first == double,
            format!("{} bytes, identical across default, 1 and 2 threads: {}", first.len(), first == single && first == double),
        ),
    );

    let passed = results.iter().filter(|&&p| p).count();
    println!("acceptance: {passed}/{} criteria passed", results.len());
    if passed != results.len() {
        std::process::exit(1);
    }
}
