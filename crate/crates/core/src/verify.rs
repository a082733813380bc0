//! Equilibrium certificates.
//!
//! A profile is a composite equilibrium when the individuals only use
//! cheapest start slots and every coalition's flow minimizes its average cost.
//! Both conditions are captured by the variational-inequality gap
//! `Σ_i ⟨U^i, x^i⟩ − M_i min_s U^i_s`, which is zero exactly at equilibria.

use serde::{Deserialize, Serialize};

use crate::dynamics::learning_signals;
use crate::error::{Error, Result};
use crate::model::{
    common_middle_cost, evaluate, GameSpec, LoadDecomposition, PlayerCosts, Profile,
};

/// Fraction of a player's mass below which a start slot counts as unused.
pub const DEFAULT_SUPPORT_TOL: f64 = 1e-6;

/// Tolerance of the cost-ordering check.
pub const ORDERING_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverStatus {
    Converged,
    MaxIterReached,
    Analytic,
}

impl SolverStatus {
    pub fn is_certified(self) -> bool {
        matches!(self, SolverStatus::Converged | SolverStatus::Analytic)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub iteration: usize,
    pub gap: f64,
    pub flows: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostSummary {
    /// Individuals' average cost; `None` when they have no weight.
    pub individuals: Option<f64>,
    /// Individuals' cost, extended to zero weight by the cheapest strategy
    /// cost (what a single deviating EV would pay).
    pub individuals_extended: f64,
    pub coalitions: Vec<Option<f64>>,
    pub social: f64,
    /// Costs minus the common middle-slot term, for three-slot games.
    pub reduced: Option<PlayerCosts>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquilibriumReport {
    pub profile: Profile,
    pub loads: LoadDecomposition,
    pub strategy_costs: Vec<f64>,
    pub costs: CostSummary,
    pub vi_gap: f64,
    /// Largest excess of a used strategy's cost over the cheapest one.
    pub wardrop_residual: f64,
    pub status: SolverStatus,
    pub iterations: usize,
    /// False when some player leaves a start slot (nearly) unused; such
    /// limit points deserve a manual look.
    pub interior: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trace: Option<Vec<TraceRow>>,
}

pub(crate) fn gap_terms(profile: &Profile, signals: &[Vec<f64>]) -> Vec<f64> {
    profile
        .flows()
        .iter()
        .zip(signals)
        .map(|(flow, u)| {
            if flow.mass() <= 0.0 {
                return 0.0;
            }
            let inner: f64 = flow.values().iter().zip(u).map(|(x, g)| x * g).sum();
            let least = u.iter().cloned().fold(f64::INFINITY, f64::min);
            (inner - flow.mass() * least).max(0.0)
        })
        .collect()
}

/// Per-player VI gap terms, individuals first.
pub fn player_gaps(spec: &GameSpec, profile: &Profile) -> Result<Vec<f64>> {
    let eval = evaluate(spec, profile)?;
    let signals = learning_signals(spec, profile, &eval)?;
    Ok(gap_terms(profile, &signals))
}

pub fn vi_gap(spec: &GameSpec, profile: &Profile) -> Result<f64> {
    Ok(player_gaps(spec, profile)?.iter().sum())
}

/// Outcome of an equilibrium check, carrying a witness on failure.
#[derive(Debug, Clone, PartialEq)]
pub enum Check<W> {
    Pass,
    Fail(W),
}

impl<W> Check<W> {
    pub fn is_pass(&self) -> bool {
        matches!(self, Check::Pass)
    }

    pub fn witness(&self) -> Option<&W> {
        match self {
            Check::Pass => None,
            Check::Fail(w) => Some(w),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WardropViolation {
    pub strategy: usize,
    pub cost: f64,
    pub min_cost: f64,
}

pub fn check_wardrop(spec: &GameSpec, profile: &Profile, eps: f64) -> Result<Check<WardropViolation>> {
    check_wardrop_with_support(spec, profile, eps, DEFAULT_SUPPORT_TOL)
}

/// Every start slot carrying more than `support_tol * M⁰` of the individuals
/// must cost at most `min_s u_s + eps`.
pub fn check_wardrop_with_support(
    spec: &GameSpec,
    profile: &Profile,
    eps: f64,
    support_tol: f64,
) -> Result<Check<WardropViolation>> {
    let eval = evaluate(spec, profile)?;
    let least = eval.min_strategy_cost();
    let individuals = profile.individuals();
    let threshold = support_tol * individuals.mass();
    let worst = individuals
        .values()
        .iter()
        .zip(&eval.strategy_costs)
        .enumerate()
        .filter(|(_, (x, u))| **x > threshold && **u > least + eps)
        .max_by(|a, b| a.1 .1.total_cmp(b.1 .1));
    Ok(match worst {
        None => Check::Pass,
        Some((strategy, (_, &cost))) => Check::Fail(WardropViolation {
            strategy,
            cost,
            min_cost: least,
        }),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoalitionViolation {
    pub coalition: usize,
    pub gap: f64,
}

/// Passes iff coalition `k`'s own VI gap `⟨U^k, x^k⟩ − M^k min_s U^k_s` is at
/// most `eps`.
pub fn check_coalition_optimality(
    spec: &GameSpec,
    profile: &Profile,
    k: usize,
    eps: f64,
) -> Result<Check<CoalitionViolation>> {
    if k == 0 || k > spec.num_coalitions() {
        return Err(Error::IndexOutOfRange {
            index: k,
            len: spec.num_players(),
        });
    }
    let gap = player_gaps(spec, profile)?[k];
    Ok(if gap <= eps {
        Check::Pass
    } else {
        Check::Fail(CoalitionViolation { coalition: k, gap })
    })
}

#[derive(Debug, Clone, PartialEq)]
pub enum OrderingViolation {
    /// Individuals pay more than the social average.
    IndividualsAboveSocial { individuals: f64, social: f64 },
    /// A coalition pays less than the social average.
    CoalitionBelowSocial { coalition: usize, cost: f64, social: f64 },
}

pub fn check_cost_ordering(report: &EquilibriumReport) -> Result<Check<OrderingViolation>> {
    check_cost_ordering_with_tol(report, ORDERING_TOL)
}

/// `Π⁰ <= Π <= Π^k` for every coalition, only meaningful at certified
/// equilibria.
pub fn check_cost_ordering_with_tol(
    report: &EquilibriumReport,
    tol: f64,
) -> Result<Check<OrderingViolation>> {
    if !report.status.is_certified() {
        return Err(Error::Unsupported(format!(
            "cost ordering is only checked at certified equilibria (status {:?})",
            report.status
        )));
    }
    let c = &report.costs;
    if c.individuals_extended > c.social + tol {
        return Ok(Check::Fail(OrderingViolation::IndividualsAboveSocial {
            individuals: c.individuals_extended,
            social: c.social,
        }));
    }
    for (i, cost) in c.coalitions.iter().enumerate() {
        if let Some(cost) = *cost {
            if c.social > cost + tol {
                return Ok(Check::Fail(OrderingViolation::CoalitionBelowSocial {
                    coalition: i + 1,
                    cost,
                    social: c.social,
                }));
            }
        }
    }
    Ok(Check::Pass)
}

/// Evaluates every diagnostic of a candidate equilibrium.
pub fn build_report(
    spec: &GameSpec,
    profile: Profile,
    status: SolverStatus,
    iterations: usize,
    trace: Option<Vec<TraceRow>>,
) -> Result<EquilibriumReport> {
    let eval = evaluate(spec, &profile)?;
    let signals = learning_signals(spec, &profile, &eval)?;
    let vi_gap = gap_terms(&profile, &signals).iter().sum();
    let least = eval.min_strategy_cost();
    let individuals = profile.individuals();
    let threshold = DEFAULT_SUPPORT_TOL * individuals.mass();
    let wardrop_residual = individuals
        .values()
        .iter()
        .zip(&eval.strategy_costs)
        .filter(|(x, _)| **x > threshold)
        .map(|(_, u)| u - least)
        .fold(0.0, f64::max);
    let interior = profile.flows().iter().all(|f| {
        f.mass() <= 0.0 || f.values().iter().all(|x| *x > DEFAULT_SUPPORT_TOL * f.mass())
    });

    let costs = PlayerCosts::from_evaluation(&eval, &profile)?;
    let individuals_extended = costs.individuals.unwrap_or(least);
    let reduced = if spec.horizon() == 3 && spec.duration() == 2 {
        let middle = common_middle_cost(spec)?;
        Some(PlayerCosts {
            individuals: Some(individuals_extended - middle),
            coalitions: costs.coalitions.iter().map(|c| c.map(|c| c - middle)).collect(),
            social: costs.social - middle,
        })
    } else {
        None
    };

    Ok(EquilibriumReport {
        loads: eval.loads.clone(),
        strategy_costs: eval.strategy_costs.clone(),
        costs: CostSummary {
            individuals: costs.individuals,
            individuals_extended,
            coalitions: costs.coalitions,
            social: costs.social,
            reduced,
        },
        profile,
        vi_gap,
        wardrop_residual,
        status,
        iterations,
        interior,
        trace,
    })
}
