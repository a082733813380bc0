use std::path::{Path, PathBuf};

use composite_charging::analytic3::solve_game_spec;
use composite_charging::model::coalition_average_cost;
use composite_charging::sweep::{SweepResult, Verdict};
use composite_charging::verify::{build_report, check_cost_ordering_with_tol, Check};
use composite_charging::{
    run_sweep_with_jobs, solve_dynamics, EquilibriumReport, GameSpec, Profile, SolverStatus,
    SweepBase, SweepSolver, ThreeSlotInstance,
};
use serde::{Deserialize, Serialize};

use crate::config::{Method, Normalization, Scenario, ScenarioConfig};
use crate::error::{CliError, Result};
use crate::io::{fmt_num, status_tag, write_json, write_loads_csv, write_sweep_csv, write_trace_csv};

/// Gap an analytic solution must meet to be accepted by `verify`.
pub const ANALYTIC_GAP_TOL: f64 = 1e-8;

#[derive(Debug, Clone)]
pub struct RunOptions {
    pub out: PathBuf,
    pub jobs: usize,
}

/// What a command did: whether its result is a certified equilibrium (or
/// all of them are, for a sweep) and a short human-readable summary.
#[derive(Debug, Clone)]
pub struct Outcome {
    pub certified: bool,
    pub summary: Vec<String>,
    pub files: Vec<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metadata {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub normalization: Normalization,
}

impl Metadata {
    fn new(command: &str, normalization: &Normalization) -> Self {
        Metadata {
            tool: "ccharge".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: command.into(),
            normalization: normalization.clone(),
        }
    }
}

/// Contents of `report.json`: enough to re-check the equilibrium without the
/// original config or load file.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SavedRun {
    pub metadata: Metadata,
    pub scenario: ScenarioConfig,
    pub report: EquilibriumReport,
}

#[derive(Debug, Clone, Serialize)]
struct SavedSweep<'a> {
    metadata: Metadata,
    scenario: &'a ScenarioConfig,
    grid: &'a [f64],
    normalizer: Option<f64>,
    failures: usize,
    audits: &'a [composite_charging::sweep::Audit],
}

fn prepare_out(out: &Path) -> Result<()> {
    std::fs::create_dir_all(out).map_err(|e| CliError::io(out, e))
}

fn solve_scenario(scenario: &Scenario) -> Result<EquilibriumReport> {
    let solver = &scenario.config.solver;
    Ok(match solver.method {
        Method::Analytic => solve_game_spec(&scenario.spec)?,
        Method::Dynamics => {
            let mut opts = solver.dynamics_options();
            opts.trace_every = None;
            solve_dynamics(&scenario.spec, &opts)?
        }
    })
}

fn fmt_vec(v: &[f64]) -> String {
    let parts: Vec<String> = v.iter().map(|x| fmt_num(*x)).collect();
    format!("[{}]", parts.join(", "))
}

fn report_summary(report: &EquilibriumReport) -> Vec<String> {
    let mut lines = vec![
        format!(
            "status {} after {} iterations, VI gap {}",
            status_tag(report.status),
            report.iterations,
            fmt_num(report.vi_gap)
        ),
    ];
    for (i, flow) in report.profile.flows().iter().enumerate() {
        let who = if i == 0 { "individuals".to_string() } else { format!("coalition {i}") };
        lines.push(format!("{who} flow {}", fmt_vec(flow.values())));
    }
    let c = &report.costs;
    lines.push(format!(
        "costs: individuals {}, coalitions {}, social {}",
        fmt_num(c.individuals_extended),
        fmt_vec(&c.coalitions.iter().map(|x| x.unwrap_or(f64::NAN)).collect::<Vec<_>>()),
        fmt_num(c.social)
    ));
    lines
}

pub fn solve(scenario: &Scenario, opts: &RunOptions) -> Result<Outcome> {
    let report = solve_scenario(scenario)?;
    prepare_out(&opts.out)?;
    let report_path = opts.out.join("report.json");
    let loads_path = opts.out.join("loads.csv");
    write_loads_csv(&loads_path, &scenario.spec, &report)?;
    let saved = SavedRun {
        metadata: Metadata::new("solve", &scenario.normalization),
        scenario: scenario.config.clone(),
        report,
    };
    write_json(&report_path, &saved)?;
    Ok(Outcome {
        certified: saved.report.status.is_certified(),
        summary: report_summary(&saved.report),
        files: vec![report_path, loads_path],
    })
}

pub fn dynamics_trace(scenario: &Scenario, opts: &RunOptions) -> Result<Outcome> {
    let every = scenario.config.solver.trace_every.unwrap_or(1).max(1);
    let mut dynamics = scenario.config.solver.dynamics_options();
    dynamics.trace_every = Some(every);
    let mut report = solve_dynamics(&scenario.spec, &dynamics)?;
    let rows = report.trace.take().unwrap_or_default();
    prepare_out(&opts.out)?;
    let trace_path = opts.out.join("trace.csv");
    let report_path = opts.out.join("report.json");
    write_trace_csv(&trace_path, &scenario.spec, &rows)?;
    let saved = SavedRun {
        metadata: Metadata::new("dynamics-trace", &scenario.normalization),
        scenario: scenario.config.clone(),
        report,
    };
    write_json(&report_path, &saved)?;
    let mut summary = report_summary(&saved.report);
    summary.push(format!("{} trace rows, every {every} iterations", rows.len()));
    Ok(Outcome {
        certified: saved.report.status.is_certified(),
        summary,
        files: vec![trace_path, report_path],
    })
}

/// Three-slot games with the peak side first are swept through the closed
/// form's instance type, which tags each point with its regime.
fn sweep_base(spec: &GameSpec) -> Result<SweepBase> {
    if spec.num_coalitions() != 1 {
        return Err(CliError::Config(format!(
            "a sweep needs weights [M0, M1] for individuals and one coalition, got {} entries",
            spec.num_players()
        )));
    }
    let l = spec.base_load();
    if spec.horizon() == 3 && spec.duration() == 2 && spec.power() == 1.0 && l[0] >= l[2] {
        let inst = ThreeSlotInstance::new(l[0], l[1], l[2], 1.0, spec.cost().clone())?;
        return Ok(SweepBase::ThreeSlot(inst));
    }
    Ok(SweepBase::General(spec.clone()))
}

fn verdict_line(name: &str, v: &Verdict, informational: bool) -> String {
    let tag = match (v.passed, informational) {
        (true, _) => "pass",
        (false, true) => "fail (informational)",
        (false, false) => "FAIL",
    };
    match &v.worst {
        Some(w) => format!(
            "audit {name}: {tag}, {} violations, worst {} at index {}",
            v.violations,
            fmt_num(w.amount),
            w.index
        ),
        None => format!("audit {name}: {tag}"),
    }
}

pub fn sweep(scenario: &Scenario, opts: &RunOptions) -> Result<Outcome> {
    let base = sweep_base(&scenario.spec)?;
    let solver = match scenario.config.solver.method {
        Method::Analytic => SweepSolver::Analytic,
        Method::Dynamics => {
            let mut o = scenario.config.solver.dynamics_options();
            o.trace_every = None;
            SweepSolver::Dynamics(o)
        }
    };
    let grid = scenario.config.grid();
    let result = run_sweep_with_jobs(&base, &grid, &solver, opts.jobs.max(1))?;
    prepare_out(&opts.out)?;
    let csv_path = opts.out.join("sweep.csv");
    let json_path = opts.out.join("sweep.json");
    write_sweep_csv(&csv_path, &result)?;
    write_json(
        &json_path,
        &SavedSweep {
            metadata: Metadata::new("sweep", &scenario.normalization),
            scenario: &scenario.config,
            grid: &result.grid,
            normalizer: result.normalizer,
            failures: result.failures(),
            audits: &result.audits,
        },
    )?;
    Ok(Outcome {
        certified: sweep_certified(&result),
        summary: sweep_summary(&result),
        files: vec![csv_path, json_path],
    })
}

fn sweep_certified(result: &SweepResult) -> bool {
    result
        .records
        .iter()
        .all(|r| matches!(&r.outcome, Ok(p) if p.status.is_certified()))
}

fn sweep_summary(result: &SweepResult) -> Vec<String> {
    let uncertified = result
        .points()
        .filter(|p| !p.status.is_certified())
        .count();
    let mut lines = vec![format!(
        "{} grid points, {} failed, {} not certified",
        result.grid.len(),
        result.failures(),
        uncertified
    )];
    for r in &result.records {
        if let Err(e) = &r.outcome {
            lines.push(format!("M = {}: {e}", fmt_num(r.m)));
        }
    }
    lines.extend(
        result
            .audits
            .iter()
            .map(|a| verdict_line(&a.name, &a.verdict, a.informational)),
    );
    lines
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-9 * a.abs().max(b.abs()).max(1.0)
}

/// Re-evaluates a saved report from its embedded scenario and checks that the
/// stored numbers reproduce and certify an equilibrium.
pub fn verify(report_path: &Path) -> Result<Outcome> {
    let text = std::fs::read_to_string(report_path).map_err(|e| CliError::io(report_path, e))?;
    let saved: SavedRun = serde_json::from_str(&text)?;
    let base_dir = report_path.parent().unwrap_or(Path::new("."));
    let scenario = saved.scenario.resolve(base_dir, false)?;
    let spec = &scenario.spec;
    let values = saved
        .report
        .profile
        .flows()
        .iter()
        .map(|f| f.values().to_vec())
        .collect();
    let profile = Profile::from_values(spec, values)?;
    let fresh = build_report(spec, profile, saved.report.status, saved.report.iterations, None)?;

    let mut failures = Vec::new();
    let mut lines = Vec::new();
    let status = saved.report.status;
    let gap_tol = match status {
        SolverStatus::Analytic => Some(ANALYTIC_GAP_TOL),
        SolverStatus::Converged => Some(scenario.config.solver.gap_tol * (1.0 + 1e-9) + 1e-15),
        SolverStatus::MaxIterReached => None,
    };
    lines.push(format!(
        "recomputed VI gap {} (saved {})",
        fmt_num(fresh.vi_gap),
        fmt_num(saved.report.vi_gap)
    ));
    match gap_tol {
        None => failures.push("the run stopped at the iteration cap, nothing to certify".to_string()),
        Some(tol) if fresh.vi_gap.is_nan() || fresh.vi_gap > tol => failures.push(format!(
            "VI gap {} exceeds the tolerance {}",
            fmt_num(fresh.vi_gap),
            fmt_num(tol)
        )),
        Some(_) => {}
    }

    let (a, b) = (&saved.report.costs, &fresh.costs);
    let mut pairs = vec![
        ("social cost", a.social, b.social),
        ("individuals' cost", a.individuals_extended, b.individuals_extended),
    ];
    for (k, (x, y)) in a.coalitions.iter().zip(&b.coalitions).enumerate() {
        if let (Some(x), Some(y)) = (x, y) {
            pairs.push(("coalition cost", *x, *y));
            let direct = coalition_average_cost(spec, &fresh.profile, k + 1)?;
            if !close(direct, *y) {
                failures.push(format!("coalition {} cost forms disagree", k + 1));
            }
        }
    }
    for (name, saved_value, fresh_value) in pairs {
        if !close(saved_value, fresh_value) {
            failures.push(format!(
                "{name} does not reproduce: saved {}, recomputed {}",
                fmt_num(saved_value),
                fmt_num(fresh_value)
            ));
        }
    }

    if status.is_certified() {
        let m0 = spec.weights()[0];
        let slack = if status == SolverStatus::Analytic || m0 <= 0.0 {
            0.0
        } else {
            fresh.vi_gap * (1.0 / m0).max(1.0)
        };
        match check_cost_ordering_with_tol(&fresh, 1e-9 + slack)? {
            Check::Pass => lines.push("cost ordering individuals <= social <= coalitions holds".into()),
            Check::Fail(v) => failures.push(format!("cost ordering violated: {v:?}")),
        }
    }

    let certified = failures.is_empty();
    lines.extend(failures.into_iter().map(|f| format!("FAIL: {f}")));
    lines.push(if certified { "verified".into() } else { "not verified".into() });
    Ok(Outcome {
        certified,
        summary: lines,
        files: Vec::new(),
    })
}
