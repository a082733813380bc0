//! Acceptance suite: prints one PASS/FAIL line per criterion and exits
//! nonzero if any criterion fails.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use composite_charging::analytic3::{analytic_report, solve_ce, ThreeSlotEquilibrium};
use composite_charging::dynamics::coalition_gradient;
use composite_charging::sweep::{default_grid, uniform_grid, SweepPoint};
use composite_charging::verify::{check_cost_ordering, check_wardrop, vi_gap, Check};
use composite_charging::{
    run_sweep, run_sweep_with_jobs, solve_dynamics, CostFamily, DynamicsOptions, GameSpec,
    Profile, SolverStatus, StepSize, SweepBase, SweepResult, SweepSolver, ThreeSlotInstance,
};

mod common;
use common::{
    family, oracle_coalition_cost, random_game, random_instance, three_slot_coalition_cost,
    three_slot_strategy_costs,
};

type Outcome = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        let ok: bool = $cond;
        if !ok {
            return Err(format!($($msg)+));
        }
    };
}

const FAMILY_NAMES: [&str; 3] = ["linear", "quadratic", "exponential"];

fn inst(l1: f64, m: f64, cost: CostFamily) -> ThreeSlotInstance {
    ThreeSlotInstance::new(l1, 1.0, 1.0, m, cost).unwrap()
}

fn within(elapsed: Duration, limit: f64) -> Outcome {
    if elapsed.as_secs_f64() < limit {
        Ok(String::new())
    } else {
        Err(format!("took {:.2} s, limit {limit} s", elapsed.as_secs_f64()))
    }
}

fn analytic_sweep(instance: &ThreeSlotInstance, grid: &[f64]) -> SweepResult {
    run_sweep(&SweepBase::ThreeSlot(instance.clone()), grid, &SweepSolver::Analytic).unwrap()
}

fn points(result: &SweepResult) -> Result<Vec<&SweepPoint>, String> {
    ensure!(result.failures() == 0, "{} grid points failed", result.failures());
    Ok(result.points().collect())
}

fn audits_pass(result: &SweepResult, names: &[&str]) -> Result<(), String> {
    for name in names {
        let audit = result.audit(name).ok_or_else(|| format!("audit {name} missing"))?;
        ensure!(audit.verdict.passed, "{name} failed: {:?}", audit.verdict.worst);
    }
    Ok(())
}

fn closed_form_sweep(l1: f64, expected: impl Fn(f64) -> f64, at_one: f64) -> Outcome {
    let start = Instant::now();
    let instance = inst(l1, 1.0, CostFamily::identity());
    let result = analytic_sweep(&instance, &default_grid());
    let mut worst = 0.0f64;
    for p in points(&result)? {
        let err = (p.coalition_peak() - expected(p.m)).abs();
        worst = worst.max(err);
        ensure!(err <= 1e-9, "x1({}) = {}, expected {}", p.m, p.coalition_peak(), expected(p.m));
    }
    let last = solve_ce(&instance).unwrap().coalition_peak;
    ensure!((last - at_one).abs() <= 1e-9, "x1(1) = {last}, expected {at_one}");
    within(start.elapsed(), 1.0)?;
    Ok(format!("max |x1 error| {worst:.1e}, x1(1) = {last:.12}"))
}

fn c1_linear_wide_gap() -> Outcome {
    let theta = inst(2.3, 1.0, CostFamily::identity()).threshold().unwrap();
    ensure!((theta - 0.3).abs() <= 1e-15, "threshold {theta}, expected 0.3");
    let detail = closed_form_sweep(2.3, |m| ((m - 0.3) / 4.0).max(0.0), 0.175)?;
    Ok(format!("threshold {theta:.15}, {detail}"))
}

fn c2_linear_narrow_gap() -> Outcome {
    closed_form_sweep(1.5, |m| if m < 0.5 { m / 2.0 } else { (m + 0.5) / 4.0 }, 0.375)
}

fn c3_quadratic_cost_ratios() -> Outcome {
    let start = Instant::now();
    let instance = inst(1.5, 1.0, CostFamily::quadratic());
    let result = analytic_sweep(&instance, &default_grid());
    let last = *points(&result)?.last().unwrap();
    let normalized = result.normalized(last).unwrap();
    ensure!(
        (normalized.coalition - 0.97).abs() <= 0.01,
        "normalized coalition cost {}",
        normalized.coalition
    );
    ensure!(
        (normalized.social - normalized.coalition).abs() <= 1e-12,
        "grand coalition pays {} but social cost is {}",
        normalized.coalition,
        normalized.social
    );
    ensure!(
        (normalized.individuals - 0.88).abs() <= 0.01,
        "normalized individual cost {}",
        normalized.individuals
    );

    // brute-force minimisation of the grand coalition's cost on a 1e-4 grid
    let (mut best_x, mut best_cost) = (0.0, f64::INFINITY);
    for i in 0..=10_000 {
        let x = i as f64 * 1e-4;
        let c = three_slot_coalition_cost(&instance, 0.0, x);
        if c < best_cost {
            best_x = x;
            best_cost = c;
        }
    }
    ensure!((best_x - 0.359375).abs() <= 1e-3, "grid minimiser {best_x}");
    ensure!(
        (last.coalition_peak() - 0.359375).abs() <= 1e-3,
        "closed form {}",
        last.coalition_peak()
    );
    within(start.elapsed(), 10.0)?;
    Ok(format!(
        "coalition {:.4}, individuals {:.4}, deviation benefit {:.1}%, grid minimiser {best_x:.4}",
        normalized.coalition,
        normalized.individuals,
        100.0 * (normalized.coalition - normalized.individuals) / normalized.coalition
    ))
}

fn c4_analytic_dynamics_agreement() -> Outcome {
    let start = Instant::now();
    let opts = DynamicsOptions::default();
    let mut worst = 0.0f64;
    let mut unconverged = Vec::new();
    for (f, name) in FAMILY_NAMES.iter().enumerate() {
        for l1 in [2.3, 1.5] {
            for m in [0.2, 0.5, 1.0] {
                let instance = inst(l1, m, family(f));
                let ce = solve_ce(&instance).unwrap();
                let report = solve_dynamics(&instance.to_game_spec().unwrap(), &opts).unwrap();
                let x1 = report.profile.flows()[1].values()[0];
                let err = (x1 - ce.coalition_peak).abs();
                worst = worst.max(err);
                ensure!(
                    err <= 1e-3,
                    "{name} L1={l1} M={m}: dynamics x1 {x1}, closed form {}",
                    ce.coalition_peak
                );
                if report.status != SolverStatus::Converged {
                    unconverged.push(format!("{name} L1={l1} M={m} gap {:.1e}", report.vi_gap));
                }
            }
        }
    }
    within(start.elapsed(), 60.0)?;
    let note = if unconverged.is_empty() {
        "all runs reached the gap tolerance".to_string()
    } else {
        format!("hit the iteration cap: {}", unconverged.join("; "))
    };
    Ok(format!("max |x1 error| {worst:.1e}, {note}"))
}

fn c5_cost_ordering() -> Outcome {
    let mut count = 0;
    for seed in 0..50u64 {
        let instance = random_instance(1000 + seed, seed as usize);
        let report = analytic_report(&instance).unwrap();
        let c = &report.costs;
        match check_cost_ordering(&report).unwrap() {
            Check::Pass => {}
            Check::Fail(v) => return Err(format!("seed {seed}: {v:?}")),
        }
        ensure!(
            c.individuals_extended <= c.social + 1e-9 && c.social <= c.coalitions[0].unwrap() + 1e-9,
            "seed {seed}: {c:?}"
        );
        count += 1;
    }
    Ok(format!("{count} certified equilibria ordered"))
}

const MONOTONE_AUDITS: [&str; 5] = [
    "x1_nondecreasing",
    "x0_nonincreasing",
    "cost_individuals_nonincreasing",
    "cost_coalition_nonincreasing",
    "cost_social_nonincreasing",
];

fn c6_monotonicity() -> Outcome {
    let grid = default_grid();
    let mut sweeps = 0;
    for (f, name) in FAMILY_NAMES.iter().enumerate() {
        for i in 0..10u64 {
            let instance = random_instance(2000 + 10 * f as u64 + i, f);
            let result = analytic_sweep(&instance, &grid);
            points(&result)?;
            ensure!(
                result.points().all(|p| p.reduced.is_some()),
                "{name} #{i}: reduced costs missing"
            );
            audits_pass(&result, &MONOTONE_AUDITS)
                .map_err(|e| format!("{name} #{i} loads {:?}: {e}", instance.loads()))?;
            sweeps += 1;
        }
    }
    Ok(format!("{sweeps} sweeps of {} points", grid.len()))
}

fn c7_concavity() -> Outcome {
    let mut branches = Vec::new();
    for (f, name) in FAMILY_NAMES.iter().enumerate() {
        let result = analytic_sweep(&inst(1.5, 1.0, family(f)), &default_grid());
        points(&result)?;
        audits_pass(&result, &["x1_concave_per_branch"]).map_err(|e| format!("{name}: {e}"))?;
        let mut regimes: Vec<&str> = result.points().map(|p| p.regime.unwrap().tag()).collect();
        regimes.dedup();
        branches.push(format!("{name} {}", regimes.len()));
    }
    Ok(format!("branches per family: {}", branches.join(", ")))
}

fn c8_affine_invariance() -> Outcome {
    let mut worst = 0.0f64;
    for (f, name) in FAMILY_NAMES.iter().enumerate() {
        for i in 0..20u64 {
            let instance = random_instance(3000 + 20 * f as u64 + i, f);
            let shifted = instance
                .with_cost(instance.cost().affine_transform(2.0, 3.0).unwrap())
                .unwrap();
            let a = solve_ce(&instance).unwrap();
            let b = solve_ce(&shifted).unwrap();
            let err = (a.coalition_peak - b.coalition_peak)
                .abs()
                .max((a.individuals_peak - b.individuals_peak).abs());
            worst = worst.max(err);
            ensure!(err <= 1e-9, "{} #{i}: {a:?} vs {b:?}", name);
        }
    }
    Ok(format!("60 instances, max difference {worst:.1e}"))
}

fn c9_gradient() -> Outcome {
    let h = 1e-6;
    let mut worst = 0.0f64;
    let mut profiles = 0;
    for t in [3usize, 7] {
        let mut seed = 4000 * t as u64;
        let mut done = 0;
        while done < 20 {
            seed += 1;
            let (spec, flows) = random_game(seed, Some(t));
            if spec.num_coalitions() == 0 {
                continue;
            }
            let profile = Profile::from_values(&spec, flows.clone()).unwrap();
            for k in 1..spec.num_players() {
                let m = spec.weights()[k];
                let grad = coalition_gradient(&spec, &profile, k).unwrap();
                for s in 0..spec.num_strategies() {
                    let mut up = flows.clone();
                    up[k][s] += h;
                    let mut down = flows.clone();
                    down[k][s] -= h;
                    let fd = (oracle_coalition_cost(&spec, &up, k, m)
                        - oracle_coalition_cost(&spec, &down, k, m))
                        / (2.0 * h);
                    let rel = (grad[s] - fd).abs() / fd.abs().max(1.0);
                    worst = worst.max(rel);
                    ensure!(rel <= 1e-6, "T={t} seed {seed} k={k} s={s}: {} vs {fd}", grad[s]);
                }
            }
            done += 1;
        }
        profiles += done;
    }
    Ok(format!("{profiles} profiles, max relative error {worst:.1e}"))
}

/// Scans a 200×200 grid of alternative `(x0, x1)` splits. The coalition may
/// not lower its cost by moving to any grid `x1`; the individuals' cost
/// vector may not make any grid `x0` cheaper than the equilibrium split.
fn deviation_check(instance: &ThreeSlotInstance, ce: &ThreeSlotEquilibrium, tol: f64) -> Result<(), String> {
    const N: usize = 200;
    let m = instance.coalition_size();
    let (x0, x1) = (ce.individuals_peak, ce.coalition_peak);
    let own = three_slot_coalition_cost(instance, x0, x1);
    let u = three_slot_strategy_costs(instance, x0, x1);
    let paid = x0 * u[0] + (1.0 - m - x0) * u[1];
    for i in 0..N {
        let y0 = (1.0 - m) * i as f64 / (N - 1) as f64;
        let alternative = y0 * u[0] + (1.0 - m - y0) * u[1];
        ensure!(alternative >= paid - tol, "individuals improve by moving to x0 = {y0}");
        for j in 0..N {
            let y1 = m * j as f64 / (N - 1) as f64;
            let cost = three_slot_coalition_cost(instance, x0, y1);
            ensure!(cost >= own - tol, "coalition improves by moving to x1 = {y1}: {cost} < {own}");
        }
    }
    Ok(())
}

fn c10_certification() -> Outcome {
    let mut analytic = 0;
    let mut worst_analytic = 0.0f64;
    let mut checked_grid = 0;
    let mut instances: Vec<ThreeSlotInstance> = (0..50u64)
        .map(|seed| random_instance(5000 + seed, seed as usize))
        .collect();
    for f in 0..3 {
        for l1 in [2.3, 1.5] {
            for m in [0.2, 0.5, 1.0] {
                instances.push(inst(l1, m, family(f)));
            }
        }
    }
    for instance in &instances {
        let report = analytic_report(instance).unwrap();
        ensure!(report.vi_gap <= 1e-8, "analytic gap {} at {:?}", report.vi_gap, instance.loads());
        worst_analytic = worst_analytic.max(report.vi_gap);
        analytic += 1;
        let ce = solve_ce(instance).unwrap();
        deviation_check(instance, &ce, 1e-9)?;
        checked_grid += 1;
    }
    for (f, name) in FAMILY_NAMES.iter().enumerate() {
        let sweep = analytic_sweep(&inst(1.5, 1.0, family(f)), &default_grid());
        for p in points(&sweep)? {
            ensure!(p.vi_gap <= 1e-8, "{name} M={}: analytic gap {}", p.m, p.vi_gap);
            worst_analytic = worst_analytic.max(p.vi_gap);
            analytic += 1;
        }
    }

    let mut dynamic = 0;
    let mut worst_dynamic = 0.0f64;
    for f in 0..3 {
        for l1 in [2.3, 1.5] {
            for m in [0.2, 0.5, 1.0] {
                let spec = inst(l1, m, family(f)).to_game_spec().unwrap();
                let report = solve_dynamics(&spec, &DynamicsOptions::default()).unwrap();
                if report.status == SolverStatus::Converged {
                    ensure!(report.vi_gap <= 1e-5, "dynamics gap {}", report.vi_gap);
                    ensure!(
                        (vi_gap(&spec, &report.profile).unwrap() - report.vi_gap).abs() <= 1e-15,
                        "reported gap differs from recomputed gap"
                    );
                    worst_dynamic = worst_dynamic.max(report.vi_gap);
                    dynamic += 1;
                }
            }
        }
    }
    Ok(format!(
        "{analytic} analytic (max gap {worst_analytic:.1e}), {dynamic} converged dynamic runs \
         (max gap {worst_dynamic:.1e}), {checked_grid} grid deviation checks"
    ))
}

fn night_spec() -> GameSpec {
    GameSpec::new(
        7,
        3,
        0.2,
        vec![0.9, 1.0, 0.95, 0.7, 0.5, 0.45, 0.6],
        CostFamily::identity(),
        vec![0.5, 0.5],
    )
    .unwrap()
}

fn c11_night_scenario() -> Outcome {
    let spec = night_spec();
    let opts = DynamicsOptions {
        max_iter: 1_000_000,
        gap_tol: 1e-12,
        step_size: StepSize::Constant { eta: 5.0 },
        trace_every: None,
    };
    let grid = uniform_grid(0.04, 1.0, 25);
    let jobs = std::thread::available_parallelism().map_or(1, |n| n.get());
    let result = run_sweep_with_jobs(
        &SweepBase::General(spec.clone()),
        &grid,
        &SweepSolver::Dynamics(opts),
        jobs,
    )
    .unwrap();
    for p in points(&result)? {
        ensure!(p.status == SolverStatus::Converged, "M={} not converged (gap {:.1e})", p.m, p.vi_gap);
        let game = spec.with_weights(vec![1.0 - p.m, p.m]).unwrap();
        let profile =
            Profile::from_values(&game, vec![p.individuals_flow.clone(), p.coalition_flow.clone()])
                .unwrap();
        if p.m < 1.0 {
            match check_wardrop(&game, &profile, 1e-6).unwrap() {
                Check::Pass => {}
                Check::Fail(v) => return Err(format!("M={}: individuals off the valley: {v:?}", p.m)),
            }
        }
    }
    audits_pass(
        &result,
        &[
            "x1_nondecreasing",
            "x0_nonincreasing",
            "coalition_weights_nondecreasing",
            "individuals_weights_nonincreasing",
            "cost_individuals_nonincreasing",
            "cost_coalition_nonincreasing",
            "cost_social_nonincreasing",
        ],
    )?;
    Ok(format!("{} grid points certified, all audits pass", grid.len()))
}

type Criterion = (&'static str, fn() -> Outcome);

fn main() {
    let criteria: [Criterion; 11] = [
        ("linear wide-gap sweep matches closed form", c1_linear_wide_gap),
        ("linear narrow-gap sweep matches closed form", c2_linear_narrow_gap),
        ("quadratic normalized cost ratios", c3_quadratic_cost_ratios),
        ("learning dynamics agree with closed form", c4_analytic_dynamics_agreement),
        ("cost ordering at certified equilibria", c5_cost_ordering),
        ("monotone weights and costs over the coalition size", c6_monotonicity),
        ("per-branch concavity of the coalition weight", c7_concavity),
        ("invariance under affine cost transforms", c8_affine_invariance),
        ("coalition gradient matches finite differences", c9_gradient),
        ("equilibrium certification by VI gap and grid deviations", c10_certification),
        ("night-valley scenario", c11_night_scenario),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(run))
            .unwrap_or_else(|e| {
                let msg = e
                    .downcast_ref::<String>()
                    .cloned()
                    .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                    .unwrap_or_default();
                Err(format!("panicked: {msg}"))
            });
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS [{:02}] {name} ({secs:.2} s): {detail}", i + 1),
            Err(why) => {
                failed += 1;
                println!("FAIL [{:02}] {name} ({secs:.2} s): {why}", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
