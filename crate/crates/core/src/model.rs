//! Game instances, charging flows and the cost evaluations built on them.
//!
//! Indices are zero-based throughout: start slot `s` charges during slots
//! `s..s + C`, and player `0` is the population of individuals while players
//! `1..=K` are the coalitions.

use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::costfn::CostFamily;
use crate::error::{Error, Result};

/// Additive tolerance for simplex membership of flows and for the weight sum.
pub const SIMPLEX_TOL: f64 = 1e-9;

/// A composite charging game.
#[derive(Debug, Clone)]
pub struct GameSpec {
    horizon: usize,
    duration: usize,
    power: f64,
    base_load: Vec<f64>,
    cost: CostFamily,
    weights: Vec<f64>,
}

impl GameSpec {
    /// Builds and validates a game.
    ///
    /// `weights[0]` is the individuals' total weight, `weights[k]` the size of
    /// coalition `k`. Weights within [`SIMPLEX_TOL`] of summing to one are
    /// rescaled. If the cost family has no domain bound yet it receives
    /// `10 * (max L + P)`.
    pub fn new(
        horizon: usize,
        duration: usize,
        power: f64,
        base_load: Vec<f64>,
        cost: CostFamily,
        weights: Vec<f64>,
    ) -> Result<Self> {
        if horizon == 0 {
            return Err(Error::invalid("horizon", "must be at least 1"));
        }
        if duration == 0 || duration > horizon {
            return Err(Error::invalid(
                "duration",
                format!("must satisfy 1 <= C <= T = {horizon}, got {duration}"),
            ));
        }
        if !(power.is_finite() && power >= 0.0) {
            return Err(Error::invalid("power", format!("must be >= 0, got {power}")));
        }
        if base_load.len() != horizon {
            return Err(Error::DimensionMismatch {
                what: "non-EV load",
                expected: horizon,
                got: base_load.len(),
            });
        }
        if let Some(bad) = base_load.iter().find(|l| !(l.is_finite() && **l >= 0.0)) {
            return Err(Error::invalid(
                "base_load",
                format!("entries must be finite and >= 0, got {bad}"),
            ));
        }
        let weights = normalize_weights(weights)?;

        let peak = base_load.iter().cloned().fold(0.0, f64::max) + power;
        let default_bound = if peak > 0.0 { 10.0 * peak } else { 1.0 };
        let cost = cost.with_default_domain_bound(default_bound)?;
        let bound = cost.domain_bound().unwrap_or(f64::INFINITY);
        if peak > bound {
            return Err(Error::invalid(
                "domain_bound",
                format!("max(L) + P = {peak} exceeds the cost domain bound {bound}"),
            ));
        }

        Ok(GameSpec {
            horizon,
            duration,
            power,
            base_load,
            cost,
            weights,
        })
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn duration(&self) -> usize {
        self.duration
    }

    pub fn power(&self) -> f64 {
        self.power
    }

    pub fn base_load(&self) -> &[f64] {
        &self.base_load
    }

    pub fn cost(&self) -> &CostFamily {
        &self.cost
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Number of feasible start slots, `T - C + 1`.
    pub fn num_strategies(&self) -> usize {
        self.horizon - self.duration + 1
    }

    /// Number of coalitions `K`.
    pub fn num_coalitions(&self) -> usize {
        self.weights.len() - 1
    }

    pub fn num_players(&self) -> usize {
        self.weights.len()
    }

    /// Slots occupied by an EV starting at `start`.
    pub fn window(&self, start: usize) -> Range<usize> {
        start..start + self.duration
    }

    pub fn with_weights(&self, weights: Vec<f64>) -> Result<Self> {
        GameSpec::new(
            self.horizon,
            self.duration,
            self.power,
            self.base_load.clone(),
            self.cost.clone(),
            weights,
        )
    }

    pub fn with_cost(&self, cost: CostFamily) -> Result<Self> {
        GameSpec::new(
            self.horizon,
            self.duration,
            self.power,
            self.base_load.clone(),
            cost,
            self.weights.clone(),
        )
    }

    fn check_strategy(&self, start: usize) -> Result<()> {
        if start >= self.num_strategies() {
            return Err(Error::IndexOutOfRange {
                index: start,
                len: self.num_strategies(),
            });
        }
        Ok(())
    }
}

fn normalize_weights(weights: Vec<f64>) -> Result<Vec<f64>> {
    if weights.is_empty() {
        return Err(Error::invalid("weights", "at least the individuals' weight is required"));
    }
    if let Some(bad) = weights.iter().find(|w| !(w.is_finite() && **w >= 0.0)) {
        return Err(Error::invalid(
            "weights",
            format!("entries must be finite and >= 0, got {bad}"),
        ));
    }
    let total: f64 = weights.iter().sum();
    if (total - 1.0).abs() > SIMPLEX_TOL {
        return Err(Error::invalid(
            "weights",
            format!("must sum to 1, got {total}"),
        ));
    }
    Ok(weights.into_iter().map(|w| w / total).collect())
}

/// A player's charging flow: the weight starting to charge at each start slot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Flow {
    values: Vec<f64>,
    mass: f64,
}

impl Flow {
    /// Validates membership of the simplex scaled to `mass`.
    ///
    /// Entries down to `-SIMPLEX_TOL` are clamped to zero and a sum within
    /// `SIMPLEX_TOL` of `mass` is rescaled exactly onto it.
    pub fn new(values: Vec<f64>, mass: f64) -> Result<Self> {
        if !(mass.is_finite() && mass >= 0.0) {
            return Err(Error::invalid("mass", format!("must be >= 0, got {mass}")));
        }
        if values.is_empty() {
            return Err(Error::NotOnSimplex("empty flow".into()));
        }
        let mut values = values;
        for v in values.iter_mut() {
            if !v.is_finite() || *v < -SIMPLEX_TOL {
                return Err(Error::NotOnSimplex(format!("entry {v} is negative or non-finite")));
            }
            if *v < 0.0 {
                *v = 0.0;
            }
        }
        let total: f64 = values.iter().sum();
        if (total - mass).abs() > SIMPLEX_TOL {
            return Err(Error::NotOnSimplex(format!(
                "entries sum to {total}, expected {mass}"
            )));
        }
        if total > 0.0 {
            let factor = mass / total;
            values.iter_mut().for_each(|v| *v *= factor);
        } else {
            values.iter_mut().for_each(|v| *v = 0.0);
        }
        Ok(Flow { values, mass })
    }

    pub fn uniform(len: usize, mass: f64) -> Result<Self> {
        if len == 0 {
            return Err(Error::NotOnSimplex("empty flow".into()));
        }
        Flow::new(vec![mass / len as f64; len], mass)
    }

    /// All mass on a single start slot.
    pub fn vertex(len: usize, index: usize, mass: f64) -> Result<Self> {
        if index >= len {
            return Err(Error::IndexOutOfRange { index, len });
        }
        let mut values = vec![0.0; len];
        values[index] = mass;
        Flow::new(values, mass)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn mass(&self) -> f64 {
        self.mass
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// One flow per player, individuals first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Profile {
    flows: Vec<Flow>,
}

impl Profile {
    pub fn new(spec: &GameSpec, flows: Vec<Flow>) -> Result<Self> {
        let profile = Profile { flows };
        profile.check_against(spec)?;
        Ok(profile)
    }

    /// Builds flows from raw vectors, taking masses from the spec's weights.
    pub fn from_values(spec: &GameSpec, values: Vec<Vec<f64>>) -> Result<Self> {
        if values.len() != spec.num_players() {
            return Err(Error::DimensionMismatch {
                what: "players in profile",
                expected: spec.num_players(),
                got: values.len(),
            });
        }
        let flows = values
            .into_iter()
            .zip(spec.weights())
            .map(|(v, &m)| Flow::new(v, m))
            .collect::<Result<Vec<_>>>()?;
        Profile::new(spec, flows)
    }

    pub fn uniform(spec: &GameSpec) -> Self {
        let flows = spec
            .weights()
            .iter()
            .map(|&m| Flow::uniform(spec.num_strategies(), m).expect("uniform flow is valid"))
            .collect();
        Profile { flows }
    }

    pub fn flows(&self) -> &[Flow] {
        &self.flows
    }

    pub fn flow(&self, player: usize) -> Result<&Flow> {
        self.flows.get(player).ok_or(Error::IndexOutOfRange {
            index: player,
            len: self.flows.len(),
        })
    }

    pub fn individuals(&self) -> &Flow {
        &self.flows[0]
    }

    pub fn into_flows(self) -> Vec<Flow> {
        self.flows
    }

    pub(crate) fn check_against(&self, spec: &GameSpec) -> Result<()> {
        if self.flows.len() != spec.num_players() {
            return Err(Error::DimensionMismatch {
                what: "players in profile",
                expected: spec.num_players(),
                got: self.flows.len(),
            });
        }
        for (i, (flow, &w)) in self.flows.iter().zip(spec.weights()).enumerate() {
            if flow.len() != spec.num_strategies() {
                return Err(Error::DimensionMismatch {
                    what: "flow length",
                    expected: spec.num_strategies(),
                    got: flow.len(),
                });
            }
            if (flow.mass() - w).abs() > SIMPLEX_TOL {
                return Err(Error::NotOnSimplex(format!(
                    "player {i} has mass {} but weight {w}",
                    flow.mass()
                )));
            }
        }
        Ok(())
    }
}

/// Per-player charging loads and their per-slot sum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoadDecomposition {
    pub per_player: Vec<Vec<f64>>,
    pub aggregate: Vec<f64>,
}

/// Charging load `y_t`: the weight of a flow actively charging at each slot.
pub fn charging_load(spec: &GameSpec, flow: &Flow) -> Result<Vec<f64>> {
    if flow.len() != spec.num_strategies() {
        return Err(Error::DimensionMismatch {
            what: "flow length",
            expected: spec.num_strategies(),
            got: flow.len(),
        });
    }
    let c = spec.duration();
    let last_start = spec.num_strategies() - 1;
    let y = (0..spec.horizon())
        .map(|t| {
            let first = (t + 1).saturating_sub(c);
            let last = t.min(last_start);
            if first > last {
                0.0
            } else {
                flow.values()[first..=last].iter().sum()
            }
        })
        .collect();
    Ok(y)
}

pub fn decompose_loads(spec: &GameSpec, profile: &Profile) -> Result<LoadDecomposition> {
    profile.check_against(spec)?;
    let per_player = profile
        .flows()
        .iter()
        .map(|f| charging_load(spec, f))
        .collect::<Result<Vec<_>>>()?;
    let mut aggregate = vec![0.0; spec.horizon()];
    for row in &per_player {
        for (z, y) in aggregate.iter_mut().zip(row) {
            *z += y;
        }
    }
    Ok(LoadDecomposition {
        per_player,
        aggregate,
    })
}

/// Quantities shared by all cost evaluations of one profile.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub loads: LoadDecomposition,
    /// Total slot load `L_t + P z_t`.
    pub slot_load: Vec<f64>,
    /// Per-unit slot cost `f(L_t + P z_t)`.
    pub price: Vec<f64>,
    /// Cost `u_s` of each start slot.
    pub strategy_costs: Vec<f64>,
}

pub fn evaluate(spec: &GameSpec, profile: &Profile) -> Result<Evaluation> {
    let loads = decompose_loads(spec, profile)?;
    let slot_load: Vec<f64> = spec
        .base_load()
        .iter()
        .zip(&loads.aggregate)
        .map(|(l, z)| l + spec.power() * z)
        .collect();
    let price = slot_load
        .iter()
        .map(|&v| spec.cost().eval(v))
        .collect::<Result<Vec<_>>>()?;
    let strategy_costs = (0..spec.num_strategies())
        .map(|s| price[spec.window(s)].iter().sum())
        .collect();
    Ok(Evaluation {
        loads,
        slot_load,
        price,
        strategy_costs,
    })
}

impl Evaluation {
    /// Flow-form average cost `(1/M) Σ_s x_s u_s` of a player.
    pub fn average_cost(&self, profile: &Profile, player: usize) -> Result<f64> {
        let flow = profile.flow(player)?;
        if flow.mass() <= 0.0 {
            return Err(Error::UndefinedAverage { player });
        }
        let total: f64 = flow
            .values()
            .iter()
            .zip(&self.strategy_costs)
            .map(|(x, u)| x * u)
            .sum();
        Ok(total / flow.mass())
    }

    /// Load-form average cost `(1/M) Σ_t y_t f(L_t + P z_t)` of a player.
    pub fn average_cost_from_loads(&self, profile: &Profile, player: usize) -> Result<f64> {
        let flow = profile.flow(player)?;
        if flow.mass() <= 0.0 {
            return Err(Error::UndefinedAverage { player });
        }
        let total: f64 = self.loads.per_player[player]
            .iter()
            .zip(&self.price)
            .map(|(y, p)| y * p)
            .sum();
        Ok(total / flow.mass())
    }

    pub fn social_cost(&self) -> f64 {
        self.loads
            .aggregate
            .iter()
            .zip(&self.price)
            .map(|(z, p)| z * p)
            .sum()
    }

    pub fn min_strategy_cost(&self) -> f64 {
        self.strategy_costs
            .iter()
            .cloned()
            .fold(f64::INFINITY, f64::min)
    }
}

/// Cost `u_s` of starting to charge at slot `start`.
pub fn strategy_cost(spec: &GameSpec, profile: &Profile, start: usize) -> Result<f64> {
    spec.check_strategy(start)?;
    Ok(evaluate(spec, profile)?.strategy_costs[start])
}

pub fn strategy_costs(spec: &GameSpec, profile: &Profile) -> Result<Vec<f64>> {
    Ok(evaluate(spec, profile)?.strategy_costs)
}

/// Average cost to coalition `k` (`1 <= k <= K`).
pub fn coalition_average_cost(spec: &GameSpec, profile: &Profile, k: usize) -> Result<f64> {
    if k == 0 || k > spec.num_coalitions() {
        return Err(Error::IndexOutOfRange {
            index: k,
            len: spec.num_players(),
        });
    }
    let eval = evaluate(spec, profile)?;
    let cost = eval.average_cost(profile, k)?;
    debug_assert!({
        let from_loads = eval.average_cost_from_loads(profile, k)?;
        (cost - from_loads).abs() <= 1e-9 * cost.abs().max(1.0)
    });
    Ok(cost)
}

/// Load-form average cost to coalition `k`.
pub fn coalition_average_cost_from_loads(
    spec: &GameSpec,
    profile: &Profile,
    k: usize,
) -> Result<f64> {
    if k == 0 || k > spec.num_coalitions() {
        return Err(Error::IndexOutOfRange {
            index: k,
            len: spec.num_players(),
        });
    }
    evaluate(spec, profile)?.average_cost_from_loads(profile, k)
}

pub fn individuals_average_cost(spec: &GameSpec, profile: &Profile) -> Result<f64> {
    evaluate(spec, profile)?.average_cost(profile, 0)
}

pub fn social_cost(spec: &GameSpec, profile: &Profile) -> Result<f64> {
    Ok(evaluate(spec, profile)?.social_cost())
}

/// Costs of every entity at one profile. Averages of zero-mass players are
/// `None`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlayerCosts {
    pub individuals: Option<f64>,
    pub coalitions: Vec<Option<f64>>,
    pub social: f64,
}

impl PlayerCosts {
    pub fn at(spec: &GameSpec, profile: &Profile) -> Result<Self> {
        let eval = evaluate(spec, profile)?;
        Self::from_evaluation(&eval, profile)
    }

    pub fn from_evaluation(eval: &Evaluation, profile: &Profile) -> Result<Self> {
        let average = |i: usize| match eval.average_cost(profile, i) {
            Ok(c) => Ok(Some(c)),
            Err(Error::UndefinedAverage { .. }) => Ok(None),
            Err(e) => Err(e),
        };
        Ok(PlayerCosts {
            individuals: average(0)?,
            coalitions: (1..profile.flows().len())
                .map(average)
                .collect::<Result<_>>()?,
            social: eval.social_cost(),
        })
    }

    fn shifted(&self, delta: f64) -> Self {
        PlayerCosts {
            individuals: self.individuals.map(|c| c - delta),
            coalitions: self.coalitions.iter().map(|c| c.map(|c| c - delta)).collect(),
            social: self.social - delta,
        }
    }
}

/// The middle-slot term common to every EV of a three-slot, two-slot-duration
/// game, `f(L_2 + P)`.
pub fn common_middle_cost(spec: &GameSpec) -> Result<f64> {
    if spec.horizon() != 3 || spec.duration() != 2 {
        return Err(Error::Unsupported(format!(
            "reduced costs need T = 3 and C = 2, got T = {} and C = {}",
            spec.horizon(),
            spec.duration()
        )));
    }
    // every EV charges in the middle slot, so z_2 = 1
    spec.cost().eval(spec.base_load()[1] + spec.power())
}

/// Subtracts the common middle-slot term from every entity's cost.
pub fn reduced_costs(spec: &GameSpec, costs: &PlayerCosts) -> Result<PlayerCosts> {
    Ok(costs.shifted(common_middle_cost(spec)?))
}
