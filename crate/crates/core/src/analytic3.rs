//! Closed-form composite equilibrium of the three-slot game.
//!
//! Three slots, two-slot charging, total EV power 1, one coalition of size
//! `M` and individuals of weight `1 - M`. Alternative 1 charges in slots 1–2
//! (the peak side, `L1 >= L3`), alternative 2 in slots 2–3. An equilibrium is
//! described by the coalition's weight `x1` and the individuals' weight `x0`
//! on alternative 1.
//!
//! Which configuration arises depends on whether the peak gap `L1 - L3`
//! reaches one (the whole EV fleet cannot level it) and on the coalition size
//! relative to a regime threshold. Interior coalition splits solve
//!
//! ```text
//! g(x1) = f(L1 + x1) + x1 f'(L1 + x1) − f(1 + L3 − x1) − (M − x1) f'(1 + L3 − x1) = 0
//! ```
//!
//! which is strictly increasing in `x1`, so bisection on the regime's bracket
//! always converges.

use serde::{Deserialize, Serialize};

use crate::costfn::CostFamily;
use crate::error::{Error, Result};
use crate::model::{GameSpec, Profile};
use crate::roots::bisect;
use crate::verify::{build_report, EquilibriumReport, SolverStatus};

/// Absolute tolerance on `x1` for the interior root.
pub const ROOT_TOL: f64 = 1e-12;

#[derive(Debug, Clone)]
pub struct ThreeSlotInstance {
    l1: f64,
    l2: f64,
    l3: f64,
    m: f64,
    cost: CostFamily,
}

impl ThreeSlotInstance {
    /// `l1` is the peak-side load and must be at least `l3`; `m` is the
    /// coalition size in `(0, 1]`.
    pub fn new(l1: f64, l2: f64, l3: f64, m: f64, cost: CostFamily) -> Result<Self> {
        for (name, v) in [("l1", l1), ("l2", l2), ("l3", l3)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::invalid(name, format!("must be finite and >= 0, got {v}")));
            }
        }
        if l1 < l3 {
            return Err(Error::invalid(
                "l1",
                format!("peak-side load must be >= off-peak load ({l1} < {l3})"),
            ));
        }
        if !(m > 0.0 && m <= 1.0) {
            return Err(Error::invalid("m", format!("coalition size must lie in (0, 1], got {m}")));
        }
        let peak = l1.max(l2) + 1.0;
        let cost = cost.with_default_domain_bound(10.0 * peak)?;
        if let Some(bound) = cost.domain_bound() {
            if peak > bound {
                return Err(Error::invalid(
                    "domain_bound",
                    format!("max(L) + 1 = {peak} exceeds the cost domain bound {bound}"),
                ));
            }
        }
        Ok(ThreeSlotInstance { l1, l2, l3, m, cost })
    }

    pub fn loads(&self) -> [f64; 3] {
        [self.l1, self.l2, self.l3]
    }

    pub fn coalition_size(&self) -> f64 {
        self.m
    }

    pub fn cost(&self) -> &CostFamily {
        &self.cost
    }

    pub fn with_coalition_size(&self, m: f64) -> Result<Self> {
        ThreeSlotInstance::new(self.l1, self.l2, self.l3, m, self.cost.clone())
    }

    pub fn with_cost(&self, cost: CostFamily) -> Result<Self> {
        ThreeSlotInstance::new(self.l1, self.l2, self.l3, self.m, cost)
    }

    /// True when `L1 >= L3 + 1`: even with every EV off-peak the peak side
    /// stays at least as loaded. The tie belongs here.
    pub fn is_wide_gap(&self) -> bool {
        self.l1 >= self.l3 + 1.0
    }

    /// Coalition size up to which nobody uses alternative 1 in the wide-gap
    /// case: `(f(L1) − f(1 + L3)) / f'(1 + L3)`.
    pub fn threshold(&self) -> Result<f64> {
        let f = &self.cost;
        Ok((f.eval(self.l1)? - f.eval(1.0 + self.l3)?) / f.deriv(1.0 + self.l3)?)
    }

    /// Coalition size `1 + L3 − L1` beyond which individuals leave
    /// alternative 1 in the narrow-gap case.
    pub fn critical_size(&self) -> f64 {
        1.0 + self.l3 - self.l1
    }

    /// The coalition's marginal-cost imbalance between the two alternatives
    /// when the individuals are all on alternative 2.
    pub fn marginal_imbalance(&self, x1: f64) -> Result<f64> {
        let f = &self.cost;
        let peak = self.l1 + x1;
        let off = 1.0 + self.l3 - x1;
        Ok(f.eval(peak)? + x1 * f.deriv(peak)? - f.eval(off)? - (self.m - x1) * f.deriv(off)?)
    }

    /// The two-player game this instance stands for, with weights `(1 − M, M)`.
    pub fn to_game_spec(&self) -> Result<GameSpec> {
        GameSpec::new(
            3,
            2,
            1.0,
            vec![self.l1, self.l2, self.l3],
            self.cost.clone(),
            vec![1.0 - self.m, self.m],
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    /// Nobody charges on the peak side.
    AllOffPeak,
    /// Wide gap: only the coalition puts weight on the peak side.
    CoalitionSplitsWideGap,
    /// Narrow gap: both players split and the alternatives cost the same.
    BothSplit,
    /// Narrow gap, large coalition: the coalition alone covers the peak side.
    CoalitionSplitsNarrowGap,
}

impl Regime {
    pub fn tag(self) -> &'static str {
        match self {
            Regime::AllOffPeak => "all_off_peak",
            Regime::CoalitionSplitsWideGap => "coalition_splits_wide_gap",
            Regime::BothSplit => "both_split",
            Regime::CoalitionSplitsNarrowGap => "coalition_splits_narrow_gap",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThreeSlotEquilibrium {
    /// Coalition weight on alternative 1, in `[0, M]`.
    pub coalition_peak: f64,
    /// Individuals' weight on alternative 1, in `[0, 1 − M]`.
    pub individuals_peak: f64,
    pub regime: Regime,
}

/// Regime an instance falls into, decided from its coalition size alone.
pub fn regime_of(inst: &ThreeSlotInstance) -> Result<Regime> {
    Ok(if inst.is_wide_gap() {
        if inst.m <= inst.threshold()? {
            Regime::AllOffPeak
        } else {
            Regime::CoalitionSplitsWideGap
        }
    } else if inst.m < inst.critical_size() {
        Regime::BothSplit
    } else {
        Regime::CoalitionSplitsNarrowGap
    })
}

pub fn solve_ce(inst: &ThreeSlotInstance) -> Result<ThreeSlotEquilibrium> {
    if !inst.cost.has_derivative() {
        return Err(Error::MissingDerivative(inst.cost.label()));
    }
    let m = inst.m;
    let g = |x1: f64| inst.marginal_imbalance(x1);
    if inst.is_wide_gap() {
        if m <= inst.threshold()? {
            return Ok(ThreeSlotEquilibrium {
                coalition_peak: 0.0,
                individuals_peak: 0.0,
                regime: Regime::AllOffPeak,
            });
        }
        let x1 = bisect(g, 0.0, m, ROOT_TOL)?;
        Ok(ThreeSlotEquilibrium {
            coalition_peak: x1,
            individuals_peak: 0.0,
            regime: Regime::CoalitionSplitsWideGap,
        })
    } else {
        let critical = inst.critical_size();
        if m < critical {
            return Ok(ThreeSlotEquilibrium {
                coalition_peak: m / 2.0,
                individuals_peak: (critical - m) / 2.0,
                regime: Regime::BothSplit,
            });
        }
        let x1 = bisect(g, critical / 2.0, m / 2.0, ROOT_TOL)?;
        Ok(ThreeSlotEquilibrium {
            coalition_peak: x1,
            individuals_peak: 0.0,
            regime: Regime::CoalitionSplitsNarrowGap,
        })
    }
}

/// The `M → 0⁺` limit: a pure Wardrop split of the individuals.
pub fn wardrop_limit(inst: &ThreeSlotInstance) -> ThreeSlotEquilibrium {
    if inst.is_wide_gap() {
        ThreeSlotEquilibrium {
            coalition_peak: 0.0,
            individuals_peak: 0.0,
            regime: Regime::AllOffPeak,
        }
    } else {
        ThreeSlotEquilibrium {
            coalition_peak: 0.0,
            individuals_peak: inst.critical_size() / 2.0,
            regime: Regime::BothSplit,
        }
    }
}

/// Equilibrium costs with the common middle-slot term removed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReducedCosts {
    pub social: f64,
    /// At `M = 1` this is the continuous extension: the cost a single
    /// deviating EV would pay.
    pub individuals: f64,
    pub coalition: f64,
}

pub fn ce_costs(inst: &ThreeSlotInstance, ce: &ThreeSlotEquilibrium) -> Result<ReducedCosts> {
    const TOL: f64 = 1e-9;
    let f = &inst.cost;
    let (x1, x0, m) = (ce.coalition_peak, ce.individuals_peak, inst.m);
    let mismatch = |reason: String| Error::RegimeMismatch {
        regime: ce.regime.tag(),
        reason,
    };
    match ce.regime {
        Regime::AllOffPeak => {
            if x1.abs() > TOL || x0.abs() > TOL {
                return Err(mismatch(format!("expected x1 = x0 = 0, got ({x1}, {x0})")));
            }
            let c = f.eval(1.0 + inst.l3)?;
            Ok(ReducedCosts {
                social: c,
                individuals: c,
                coalition: c,
            })
        }
        Regime::BothSplit => {
            if inst.is_wide_gap() {
                return Err(mismatch("regime requires L1 < L3 + 1".into()));
            }
            if (x0 + x1 - inst.critical_size() / 2.0).abs() > TOL {
                return Err(mismatch(format!(
                    "expected x0 + x1 = {}, got {}",
                    inst.critical_size() / 2.0,
                    x0 + x1
                )));
            }
            let c = f.eval((1.0 + inst.l1 + inst.l3) / 2.0)?;
            Ok(ReducedCosts {
                social: c,
                individuals: c,
                coalition: c,
            })
        }
        Regime::CoalitionSplitsWideGap | Regime::CoalitionSplitsNarrowGap => {
            if x0.abs() > TOL {
                return Err(mismatch(format!("expected x0 = 0, got {x0}")));
            }
            if !(-TOL..=m + TOL).contains(&x1) {
                return Err(mismatch(format!("x1 = {x1} outside [0, {m}]")));
            }
            let peak = f.eval(inst.l1 + x1)?;
            let off = f.eval(1.0 + inst.l3 - x1)?;
            Ok(ReducedCosts {
                social: x1 * peak + (1.0 - x1) * off,
                individuals: off,
                coalition: (x1 * peak + (m - x1) * off) / m,
            })
        }
    }
}

/// Full profile of the two-player game at a three-slot equilibrium.
pub fn to_profile(inst: &ThreeSlotInstance, ce: &ThreeSlotEquilibrium) -> Result<Profile> {
    let spec = inst.to_game_spec()?;
    let m = inst.m;
    Profile::from_values(
        &spec,
        vec![
            vec![ce.individuals_peak, (1.0 - m - ce.individuals_peak).max(0.0)],
            vec![ce.coalition_peak, (m - ce.coalition_peak).max(0.0)],
        ],
    )
}

pub fn analytic_report(inst: &ThreeSlotInstance) -> Result<EquilibriumReport> {
    let ce = solve_ce(inst)?;
    let spec = inst.to_game_spec()?;
    build_report(&spec, to_profile(inst, &ce)?, SolverStatus::Analytic, 0, None)
}

/// Solves a general game spec analytically when it has the three-slot shape
/// (T = 3, C = 2, P = 1, one coalition of positive size). A spec with
/// `L1 < L3` is mirrored before solving and mapped back.
pub fn solve_game_spec(spec: &GameSpec) -> Result<EquilibriumReport> {
    if spec.horizon() != 3 || spec.duration() != 2 {
        return Err(Error::Unsupported(format!(
            "closed form needs T = 3 and C = 2, got T = {} and C = {}",
            spec.horizon(),
            spec.duration()
        )));
    }
    if spec.power() != 1.0 {
        return Err(Error::Unsupported(format!(
            "closed form needs P = 1, got {}",
            spec.power()
        )));
    }
    if spec.num_coalitions() != 1 {
        return Err(Error::Unsupported(format!(
            "closed form needs exactly one coalition, got {}",
            spec.num_coalitions()
        )));
    }
    let l = spec.base_load();
    let m = spec.weights()[1];
    let mirrored = l[0] < l[2];
    let (peak, off) = if mirrored { (l[2], l[0]) } else { (l[0], l[2]) };
    let inst = ThreeSlotInstance::new(peak, l[1], off, m, spec.cost().clone())?;
    let ce = solve_ce(&inst)?;
    let (x1, x0) = if mirrored {
        (m - ce.coalition_peak, (1.0 - m) - ce.individuals_peak)
    } else {
        (ce.coalition_peak, ce.individuals_peak)
    };
    let profile = Profile::from_values(
        spec,
        vec![
            vec![x0.max(0.0), (1.0 - m - x0).max(0.0)],
            vec![x1.max(0.0), (m - x1).max(0.0)],
        ],
    )?;
    build_report(spec, profile, SolverStatus::Analytic, 0, None)
}
