//! Exponential learning for general composite games.
//!
//! Each player keeps a cumulative cost per start slot and plays the scaled
//! softmax of its negation. Individuals accumulate the strategy costs `u_s`;
//! coalitions accumulate the gradient of their average cost.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{evaluate, Evaluation, Flow, GameSpec, Profile};
use crate::verify::{build_report, gap_terms, EquilibriumReport, SolverStatus, TraceRow};

/// Learning-rate schedule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "schedule", rename_all = "snake_case")]
pub enum StepSize {
    Constant { eta: f64 },
    /// `eta_n = scale / (1 + sqrt(n))` for the `n`-th update.
    InverseSqrt { scale: f64 },
}

impl Default for StepSize {
    fn default() -> Self {
        StepSize::InverseSqrt { scale: 1.0 }
    }
}

impl StepSize {
    pub fn at(&self, n: usize) -> f64 {
        match *self {
            StepSize::Constant { eta } => eta,
            StepSize::InverseSqrt { scale } => scale / (1.0 + (n as f64).sqrt()),
        }
    }

    fn validate(&self) -> Result<()> {
        let v = match *self {
            StepSize::Constant { eta } => eta,
            StepSize::InverseSqrt { scale } => scale,
        };
        if !(v.is_finite() && v > 0.0) {
            return Err(Error::invalid("step_size", format!("must be > 0, got {v}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DynamicsOptions {
    pub max_iter: usize,
    pub gap_tol: f64,
    pub step_size: StepSize,
    /// Record a trace row every this many iterations.
    pub trace_every: Option<usize>,
}

impl Default for DynamicsOptions {
    fn default() -> Self {
        DynamicsOptions {
            max_iter: 100_000,
            gap_tol: 1e-6,
            step_size: StepSize::default(),
            trace_every: None,
        }
    }
}

/// Cumulative costs and the profile they induce.
#[derive(Debug, Clone)]
pub struct LearnerState {
    /// Cumulative costs per player and start slot, rebased so each row's
    /// minimum is zero (the induced flows are invariant under the shift).
    pub cum_costs: Vec<Vec<f64>>,
    pub profile: Profile,
    pub iteration: usize,
    pub step_size: StepSize,
}

impl LearnerState {
    /// Zero cumulative costs, hence uniform flows.
    pub fn uniform(spec: &GameSpec, step_size: StepSize) -> Self {
        LearnerState {
            cum_costs: vec![vec![0.0; spec.num_strategies()]; spec.num_players()],
            profile: Profile::uniform(spec),
            iteration: 0,
            step_size,
        }
    }

    pub fn from_cum_costs(
        spec: &GameSpec,
        cum_costs: Vec<Vec<f64>>,
        step_size: StepSize,
    ) -> Result<Self> {
        if cum_costs.len() != spec.num_players() {
            return Err(Error::DimensionMismatch {
                what: "cumulative cost rows",
                expected: spec.num_players(),
                got: cum_costs.len(),
            });
        }
        let flows = cum_costs
            .iter()
            .zip(spec.weights())
            .map(|(row, &m)| {
                if row.len() != spec.num_strategies() {
                    return Err(Error::DimensionMismatch {
                        what: "cumulative cost row",
                        expected: spec.num_strategies(),
                        got: row.len(),
                    });
                }
                scaled_softmin(row, m)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(LearnerState {
            profile: Profile::new(spec, flows)?,
            cum_costs,
            iteration: 0,
            step_size,
        })
    }
}

/// `mass * exp(-v_s) / Σ exp(-v_r)`, evaluated after shifting the exponents so
/// the largest is zero.
pub fn scaled_softmin(costs: &[f64], mass: f64) -> Result<Flow> {
    if let Some(bad) = costs.iter().find(|c| !c.is_finite()) {
        return Err(Error::NonFinite(format!("cumulative cost {bad}")));
    }
    let least = costs.iter().cloned().fold(f64::INFINITY, f64::min);
    let weights: Vec<f64> = costs.iter().map(|c| (least - c).exp()).collect();
    let total: f64 = weights.iter().sum();
    Flow::new(weights.into_iter().map(|w| mass * w / total).collect(), mass)
}

/// Gradient of coalition `k`'s average cost with respect to its own flow:
/// `(1/M) [u_s + P Σ_{t in window(s)} y_t f'(L_t + P z_t)]`.
pub fn coalition_gradient(spec: &GameSpec, profile: &Profile, k: usize) -> Result<Vec<f64>> {
    if k == 0 || k > spec.num_coalitions() {
        return Err(Error::IndexOutOfRange {
            index: k,
            len: spec.num_players(),
        });
    }
    let eval = evaluate(spec, profile)?;
    let marginal = marginal_prices(spec, &eval)?;
    gradient_from(spec, profile, &eval, &marginal, k)
}

pub(crate) fn marginal_prices(spec: &GameSpec, eval: &Evaluation) -> Result<Vec<f64>> {
    eval.slot_load
        .iter()
        .map(|&v| spec.cost().deriv(v))
        .collect()
}

pub(crate) fn gradient_from(
    spec: &GameSpec,
    profile: &Profile,
    eval: &Evaluation,
    marginal: &[f64],
    k: usize,
) -> Result<Vec<f64>> {
    let mass = profile.flow(k)?.mass();
    if mass <= 0.0 {
        return Err(Error::UndefinedAverage { player: k });
    }
    let y = &eval.loads.per_player[k];
    let p = spec.power();
    Ok((0..spec.num_strategies())
        .map(|s| {
            let congestion: f64 = spec.window(s).map(|t| y[t] * marginal[t]).sum();
            (eval.strategy_costs[s] + p * congestion) / mass
        })
        .collect())
}

/// The cost signal each player learns from: `u` for the individuals, the
/// own-flow gradient for coalitions. Zero-mass players get `u`; their flows
/// are identically zero so the signal is never used.
pub(crate) fn learning_signals(
    spec: &GameSpec,
    profile: &Profile,
    eval: &Evaluation,
) -> Result<Vec<Vec<f64>>> {
    let marginal = if spec.num_coalitions() > 0 {
        Some(marginal_prices(spec, eval)?)
    } else {
        None
    };
    (0..spec.num_players())
        .map(|i| {
            let mass = profile.flows()[i].mass();
            if i == 0 || mass <= 0.0 {
                Ok(eval.strategy_costs.clone())
            } else {
                gradient_from(spec, profile, eval, marginal.as_deref().unwrap(), i)
            }
        })
        .collect()
}

fn apply_update(
    spec: &GameSpec,
    state: &LearnerState,
    signals: &[Vec<f64>],
) -> Result<LearnerState> {
    let n = state.iteration + 1;
    let eta = state.step_size.at(n);
    let mut cum_costs = state.cum_costs.clone();
    for (row, signal) in cum_costs.iter_mut().zip(signals) {
        for (v, g) in row.iter_mut().zip(signal) {
            if !g.is_finite() {
                return Err(Error::NonFinite(format!("learning signal {g} at iteration {n}")));
            }
            *v += eta * g;
        }
        let least = row.iter().cloned().fold(f64::INFINITY, f64::min);
        row.iter_mut().for_each(|v| *v -= least);
    }
    let flows = cum_costs
        .iter()
        .zip(spec.weights())
        .map(|(row, &m)| scaled_softmin(row, m))
        .collect::<Result<Vec<_>>>()?;
    Ok(LearnerState {
        profile: Profile::new(spec, flows)?,
        cum_costs,
        iteration: n,
        step_size: state.step_size,
    })
}

/// One round of exponential learning from `state`.
pub fn learning_step(spec: &GameSpec, state: &LearnerState) -> Result<LearnerState> {
    let eval = evaluate(spec, &state.profile)?;
    let signals = learning_signals(spec, &state.profile, &eval)?;
    apply_update(spec, state, &signals)
}

/// Runs exponential learning from uniform flows until the VI gap drops to
/// `gap_tol` or `max_iter` updates have been made.
pub fn solve_dynamics(spec: &GameSpec, opts: &DynamicsOptions) -> Result<EquilibriumReport> {
    opts.step_size.validate()?;
    if !(opts.gap_tol.is_finite() && opts.gap_tol >= 0.0) {
        return Err(Error::invalid("gap_tol", format!("must be >= 0, got {}", opts.gap_tol)));
    }
    let mut state = LearnerState::uniform(spec, opts.step_size);
    let mut trace = opts.trace_every.map(|_| Vec::new());
    loop {
        let eval = evaluate(spec, &state.profile)?;
        let signals = learning_signals(spec, &state.profile, &eval)?;
        let gap: f64 = gap_terms(&state.profile, &signals).iter().sum();
        if !gap.is_finite() {
            return Err(Error::NonFinite(format!("VI gap at iteration {}", state.iteration)));
        }
        let converged = gap <= opts.gap_tol;
        let done = converged || state.iteration >= opts.max_iter;
        if let (Some(rows), Some(every)) = (trace.as_mut(), opts.trace_every) {
            if state.iteration.is_multiple_of(every.max(1)) || done {
                rows.push(TraceRow {
                    iteration: state.iteration,
                    gap,
                    flows: state
                        .profile
                        .flows()
                        .iter()
                        .map(|f| f.values().to_vec())
                        .collect(),
                });
            }
        }
        if done {
            let status = if converged {
                SolverStatus::Converged
            } else {
                SolverStatus::MaxIterReached
            };
            return build_report(spec, state.profile, status, state.iteration, trace);
        }
        state = apply_update(spec, &state, &signals)?;
    }
}
