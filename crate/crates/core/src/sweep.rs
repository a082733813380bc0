//! Coalition-size sweeps and the audits run over them.
//!
//! Every grid point splits the EV fleet into a coalition of size `M` and
//! individuals of weight `1 − M`, solves for the equilibrium and records the
//! weights and costs. Audits then check the comparative statics: coalition
//! weights rise with `M`, individuals' weights fall, every cost falls, and the
//! coalition's peak weight is concave on each regime branch.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analytic3::{ce_costs, regime_of, solve_ce, to_profile, solve_game_spec, Regime, ThreeSlotInstance};
use crate::dynamics::{solve_dynamics, DynamicsOptions};
use crate::error::{Error, Result};
use crate::model::GameSpec;
use crate::verify::{build_report, EquilibriumReport, SolverStatus};

/// Tolerance of the monotonicity and concavity audits.
pub const AUDIT_TOL: f64 = 1e-9;

#[derive(Debug, Clone)]
pub enum SweepBase {
    /// Three-slot instance; its own coalition size is ignored.
    ThreeSlot(ThreeSlotInstance),
    /// Any game; its weights are replaced by `(1 − M, M)`.
    General(GameSpec),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SweepSolver {
    Analytic,
    Dynamics(DynamicsOptions),
}

/// `n` uniformly spaced points from `start` to `stop` inclusive.
pub fn uniform_grid(start: f64, stop: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![start],
        _ => (0..n)
            .map(|i| {
                if i == n - 1 {
                    stop
                } else {
                    start + (stop - start) * i as f64 / (n - 1) as f64
                }
            })
            .collect(),
    }
}

/// 101 uniform points on `[0.01, 1]`.
pub fn default_grid() -> Vec<f64> {
    uniform_grid(0.01, 1.0, 101)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostTriple {
    /// Continuous extension at `M = 1`.
    pub individuals: f64,
    pub coalition: f64,
    pub social: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub m: f64,
    pub coalition_flow: Vec<f64>,
    pub individuals_flow: Vec<f64>,
    pub costs: CostTriple,
    /// Costs without the common middle-slot term (three-slot games only).
    pub reduced: Option<CostTriple>,
    pub regime: Option<Regime>,
    pub status: SolverStatus,
    pub vi_gap: f64,
    pub iterations: usize,
}

impl SweepPoint {
    /// Coalition weight on the first start slot.
    pub fn coalition_peak(&self) -> f64 {
        self.coalition_flow[0]
    }

    /// Individuals' weight on the first start slot.
    pub fn individuals_peak(&self) -> f64 {
        self.individuals_flow[0]
    }

    /// Reduced costs when available, full costs otherwise.
    pub fn headline_costs(&self) -> CostTriple {
        self.reduced.unwrap_or(self.costs)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRecord {
    pub m: f64,
    pub outcome: std::result::Result<SweepPoint, String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    NonDecreasing,
    NonIncreasing,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    /// Index of the first value in the offending pair or triple.
    pub index: usize,
    /// How far the values overshoot the allowed direction.
    pub amount: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub passed: bool,
    pub violations: usize,
    pub first: Option<Violation>,
    pub worst: Option<Violation>,
}

impl Verdict {
    fn from_excesses(excess: impl Iterator<Item = (usize, f64)>, tol: f64) -> Self {
        let mut violations = 0;
        let mut first: Option<Violation> = None;
        let mut worst: Option<Violation> = None;
        for (index, amount) in excess {
            if amount > tol {
                violations += 1;
                let v = Violation { index, amount };
                if first.is_none() {
                    first = Some(v.clone());
                }
                if worst.as_ref().is_none_or(|w| amount > w.amount) {
                    worst = Some(v);
                }
            }
        }
        Verdict {
            passed: violations == 0,
            violations,
            first,
            worst,
        }
    }

    fn merge(verdicts: impl IntoIterator<Item = Verdict>) -> Self {
        let mut out = Verdict {
            passed: true,
            violations: 0,
            first: None,
            worst: None,
        };
        for v in verdicts {
            out.passed &= v.passed;
            out.violations += v.violations;
            if out.first.is_none() {
                out.first = v.first;
            }
            if let Some(w) = v.worst {
                if out.worst.as_ref().is_none_or(|o| w.amount > o.amount) {
                    out.worst = Some(w);
                }
            }
        }
        out
    }
}

pub fn audit_monotone(values: &[f64], direction: Direction, tol: f64) -> Verdict {
    let sign = match direction {
        Direction::NonDecreasing => 1.0,
        Direction::NonIncreasing => -1.0,
    };
    Verdict::from_excesses(
        values
            .windows(2)
            .enumerate()
            .map(|(i, w)| (i, -sign * (w[1] - w[0]))),
        tol,
    )
}

/// Concavity on a uniform grid: every second difference must be at most `tol`.
pub fn audit_concave(values: &[f64], tol: f64) -> Verdict {
    Verdict::from_excesses(
        values
            .windows(3)
            .enumerate()
            .map(|(i, w)| (i, w[0] - 2.0 * w[1] + w[2])),
        tol,
    )
}

/// Concavity checked separately on each maximal run of equal branch labels.
pub fn audit_concave_by_branch<B: PartialEq>(values: &[f64], branches: &[B], tol: f64) -> Verdict {
    let mut verdicts = Vec::new();
    let mut start = 0;
    while start < values.len() {
        let mut end = start + 1;
        while end < values.len() && branches[end] == branches[start] {
            end += 1;
        }
        let mut v = audit_concave(&values[start..end], tol);
        for w in v.first.iter_mut().chain(v.worst.iter_mut()) {
            w.index += start;
        }
        verdicts.push(v);
        start = end;
    }
    Verdict::merge(verdicts)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Audit {
    pub name: String,
    pub verdict: Verdict,
    /// Recorded for reference; not expected to pass in general.
    pub informational: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub grid: Vec<f64>,
    pub records: Vec<SweepRecord>,
    /// Social cost (reduced when available) at the smallest grid point.
    pub normalizer: Option<f64>,
    pub audits: Vec<Audit>,
}

impl SweepResult {
    pub fn points(&self) -> impl Iterator<Item = &SweepPoint> {
        self.records.iter().filter_map(|r| r.outcome.as_ref().ok())
    }

    pub fn failures(&self) -> usize {
        self.records.iter().filter(|r| r.outcome.is_err()).count()
    }

    pub fn audit(&self, name: &str) -> Option<&Audit> {
        self.audits.iter().find(|a| a.name == name)
    }

    /// True when every point is certified and every non-informational audit
    /// passed.
    pub fn all_passed(&self) -> bool {
        self.records
            .iter()
            .all(|r| matches!(&r.outcome, Ok(p) if p.status.is_certified()))
            && self
                .audits
                .iter()
                .all(|a| a.informational || a.verdict.passed)
    }

    pub fn normalized(&self, point: &SweepPoint) -> Option<CostTriple> {
        let n = self.normalizer?;
        let c = point.headline_costs();
        Some(CostTriple {
            individuals: c.individuals / n,
            coalition: c.coalition / n,
            social: c.social / n,
        })
    }
}

fn check_grid(grid: &[f64]) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::invalid("grid", "must not be empty"));
    }
    if let Some(m) = grid.iter().find(|m| !(**m > 0.0 && **m <= 1.0)) {
        return Err(Error::invalid("grid", format!("coalition sizes must lie in (0, 1], got {m}")));
    }
    if grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::invalid("grid", "must be strictly increasing"));
    }
    Ok(())
}

fn triple(report: &EquilibriumReport) -> CostTriple {
    CostTriple {
        individuals: report.costs.individuals_extended,
        coalition: report.costs.coalitions[0].unwrap_or(f64::NAN),
        social: report.costs.social,
    }
}

fn point_from_report(m: f64, report: EquilibriumReport, regime: Option<Regime>) -> SweepPoint {
    let costs = triple(&report);
    let reduced = report.costs.reduced.as_ref().map(|r| CostTriple {
        individuals: r.individuals.unwrap_or(f64::NAN),
        coalition: r.coalitions[0].unwrap_or(f64::NAN),
        social: r.social,
    });
    let flows = report.profile.flows();
    SweepPoint {
        m,
        individuals_flow: flows[0].values().to_vec(),
        coalition_flow: flows[1].values().to_vec(),
        costs,
        reduced,
        regime,
        status: report.status,
        vi_gap: report.vi_gap,
        iterations: report.iterations,
    }
}

fn solve_point(base: &SweepBase, m: f64, solver: &SweepSolver) -> Result<SweepPoint> {
    match base {
        SweepBase::ThreeSlot(inst) => {
            let inst = inst.with_coalition_size(m)?;
            let regime = regime_of(&inst)?;
            match solver {
                SweepSolver::Analytic => {
                    let ce = solve_ce(&inst)?;
                    let spec = inst.to_game_spec()?;
                    let report = build_report(
                        &spec,
                        to_profile(&inst, &ce)?,
                        SolverStatus::Analytic,
                        0,
                        None,
                    )?;
                    let mut point = point_from_report(m, report, Some(ce.regime));
                    let r = ce_costs(&inst, &ce)?;
                    point.reduced = Some(CostTriple {
                        individuals: r.individuals,
                        coalition: r.coalition,
                        social: r.social,
                    });
                    Ok(point)
                }
                SweepSolver::Dynamics(opts) => {
                    let report = solve_dynamics(&inst.to_game_spec()?, opts)?;
                    Ok(point_from_report(m, report, Some(regime)))
                }
            }
        }
        SweepBase::General(spec) => {
            if spec.num_coalitions() > 1 {
                return Err(Error::Unsupported(format!(
                    "sweeps split the fleet into individuals and one coalition, spec has {} coalitions",
                    spec.num_coalitions()
                )));
            }
            let spec = spec.with_weights(vec![1.0 - m, m])?;
            let report = match solver {
                SweepSolver::Analytic => solve_game_spec(&spec)?,
                SweepSolver::Dynamics(opts) => solve_dynamics(&spec, opts)?,
            };
            Ok(point_from_report(m, report, None))
        }
    }
}

pub fn run_sweep(base: &SweepBase, grid: &[f64], solver: &SweepSolver) -> Result<SweepResult> {
    run_sweep_with_jobs(base, grid, solver, 1)
}

/// Solves grid points on `jobs` worker threads. Records stay in grid order and
/// are identical for any `jobs`.
pub fn run_sweep_with_jobs(
    base: &SweepBase,
    grid: &[f64],
    solver: &SweepSolver,
    jobs: usize,
) -> Result<SweepResult> {
    check_grid(grid)?;
    let solve = |&m: &f64| SweepRecord {
        m,
        outcome: solve_point(base, m, solver).map_err(|e| e.to_string()),
    };
    let records: Vec<SweepRecord> = if jobs > 1 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build()
            .map_err(|e| Error::invalid("jobs", e.to_string()))?;
        pool.install(|| grid.par_iter().map(solve).collect())
    } else {
        grid.iter().map(solve).collect()
    };

    let points: Vec<&SweepPoint> = records.iter().filter_map(|r| r.outcome.as_ref().ok()).collect();
    let normalizer = points.first().map(|p| p.headline_costs().social);
    let audits = run_audits(&points);
    Ok(SweepResult {
        grid: grid.to_vec(),
        records,
        normalizer,
        audits,
    })
}

fn ordering_excess(p: &SweepPoint) -> f64 {
    let c = p.costs;
    (c.individuals - c.social).max(c.social - c.coalition)
}

/// Ordering slack allowed at an approximate equilibrium: individuals can
/// overpay by at most their gap term over their weight.
fn ordering_slack(p: &SweepPoint) -> f64 {
    match p.status {
        SolverStatus::Analytic => 0.0,
        _ => {
            let m0 = 1.0 - p.m;
            if m0 > 0.0 {
                p.vi_gap * (1.0 / m0).max(1.0)
            } else {
                p.vi_gap
            }
        }
    }
}

fn run_audits(points: &[&SweepPoint]) -> Vec<Audit> {
    let series = |f: &dyn Fn(&SweepPoint) -> f64| points.iter().map(|p| f(p)).collect::<Vec<f64>>();
    let x1 = series(&|p| p.coalition_peak());
    let x0 = series(&|p| p.individuals_peak());
    let individuals = series(&|p| p.headline_costs().individuals);
    let coalition = series(&|p| p.headline_costs().coalition);
    let social = series(&|p| p.headline_costs().social);
    let strategies = points.first().map_or(0, |p| p.coalition_flow.len());
    let mut audits = vec![
        Audit {
            name: "x1_nondecreasing".into(),
            verdict: audit_monotone(&x1, Direction::NonDecreasing, AUDIT_TOL),
            informational: false,
        },
        Audit {
            name: "x0_nonincreasing".into(),
            verdict: audit_monotone(&x0, Direction::NonIncreasing, AUDIT_TOL),
            informational: false,
        },
        Audit {
            name: "coalition_weights_nondecreasing".into(),
            verdict: Verdict::merge((0..strategies).map(|s| {
                audit_monotone(&series(&|p| p.coalition_flow[s]), Direction::NonDecreasing, AUDIT_TOL)
            })),
            informational: false,
        },
        Audit {
            name: "individuals_weights_nonincreasing".into(),
            verdict: Verdict::merge((0..strategies).map(|s| {
                audit_monotone(
                    &series(&|p| p.individuals_flow[s]),
                    Direction::NonIncreasing,
                    AUDIT_TOL,
                )
            })),
            informational: false,
        },
        Audit {
            name: "cost_individuals_nonincreasing".into(),
            verdict: audit_monotone(&individuals, Direction::NonIncreasing, AUDIT_TOL),
            informational: false,
        },
        Audit {
            name: "cost_coalition_nonincreasing".into(),
            verdict: audit_monotone(&coalition, Direction::NonIncreasing, AUDIT_TOL),
            informational: false,
        },
        Audit {
            name: "cost_social_nonincreasing".into(),
            verdict: audit_monotone(&social, Direction::NonIncreasing, AUDIT_TOL),
            informational: false,
        },
        Audit {
            name: "cost_ordering".into(),
            verdict: Verdict::from_excesses(
                points
                    .iter()
                    .enumerate()
                    .map(|(i, p)| (i, ordering_excess(p) - ordering_slack(p))),
                AUDIT_TOL,
            ),
            informational: false,
        },
    ];
    if points.iter().all(|p| p.regime.is_some()) {
        let branches: Vec<Option<Regime>> = points.iter().map(|p| p.regime).collect();
        audits.push(Audit {
            name: "x1_concave_per_branch".into(),
            verdict: audit_concave_by_branch(&x1, &branches, AUDIT_TOL),
            informational: false,
        });
    }
    audits.push(Audit {
        name: "x1_concave_global".into(),
        verdict: audit_concave(&x1, AUDIT_TOL),
        informational: true,
    });
    audits
}
