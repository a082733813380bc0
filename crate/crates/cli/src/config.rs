//! Scenario configuration: one JSON document describing the game, its base
//! load, the solver and an optional coalition-size grid.

use std::path::{Path, PathBuf};

use composite_charging::dynamics::StepSize;
use composite_charging::sweep::{default_grid, uniform_grid};
use composite_charging::{CostFamily, DynamicsOptions, GameSpec};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};
use crate::io::{load_profile_csv, normalize_to_unit_max};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub game: GameConfig,
    pub load_profile: LoadProfile,
    /// Rescale the base load so its maximum is 1.
    #[serde(default)]
    pub normalize: bool,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<GridConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GameConfig {
    pub horizon: usize,
    pub duration: usize,
    #[serde(default = "one")]
    pub power: f64,
    pub cost: CostConfig,
    /// Upper end `W` of the cost domain; defaults to `10 (max L + P)`.
    #[serde(default)]
    pub domain_bound: Option<f64>,
    /// `[M⁰, M¹, …, M^K]`, individuals first.
    pub weights: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum CostConfig {
    Linear {
        #[serde(default = "one")]
        slope: f64,
        #[serde(default)]
        intercept: f64,
    },
    Quadratic,
    Exponential {
        #[serde(default = "one")]
        beta: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LoadProfile {
    Values(Vec<f64>),
    /// CSV with header `t,load`; relative paths resolve against the config
    /// file's directory.
    Path(PathBuf),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Analytic,
    Dynamics,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverConfig {
    #[serde(default = "default_method")]
    pub method: Method,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
    #[serde(default = "default_gap_tol")]
    pub gap_tol: f64,
    #[serde(default)]
    pub step_size: StepSize,
    #[serde(default)]
    pub trace_every: Option<usize>,
}

impl Default for SolverConfig {
    fn default() -> Self {
        let d = DynamicsOptions::default();
        SolverConfig {
            method: default_method(),
            max_iter: d.max_iter,
            gap_tol: d.gap_tol,
            step_size: d.step_size,
            trace_every: d.trace_every,
        }
    }
}

impl SolverConfig {
    pub fn dynamics_options(&self) -> DynamicsOptions {
        DynamicsOptions {
            max_iter: self.max_iter,
            gap_tol: self.gap_tol,
            step_size: self.step_size,
            trace_every: self.trace_every,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum GridConfig {
    Uniform { start: f64, stop: f64, points: usize },
    Values(Vec<f64>),
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig::Uniform {
            start: 0.01,
            stop: 1.0,
            points: 101,
        }
    }
}

impl GridConfig {
    pub fn values(&self) -> Vec<f64> {
        match self {
            GridConfig::Uniform { start, stop, points } => uniform_grid(*start, *stop, *points),
            GridConfig::Values(v) => v.clone(),
        }
    }
}

fn one() -> f64 {
    1.0
}

fn default_method() -> Method {
    Method::Dynamics
}

fn default_max_iter() -> usize {
    DynamicsOptions::default().max_iter
}

fn default_gap_tol() -> f64 {
    DynamicsOptions::default().gap_tol
}

impl CostConfig {
    pub fn family(&self) -> Result<CostFamily> {
        Ok(match *self {
            CostConfig::Linear { slope, intercept } => CostFamily::linear(slope, intercept)?,
            CostConfig::Quadratic => CostFamily::quadratic(),
            CostConfig::Exponential { beta } => CostFamily::exponential(beta)?,
        })
    }
}

/// How the base load was rescaled, recorded in every output's metadata.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub applied: bool,
    pub convention: String,
    /// The load values were divided by this.
    pub divisor: f64,
}

impl Normalization {
    fn none() -> Self {
        Normalization {
            applied: false,
            convention: "none: loads used as given".into(),
            divisor: 1.0,
        }
    }
}

/// A config whose load profile has been read, normalized and validated.
#[derive(Debug, Clone)]
pub struct Scenario {
    /// The config with the load profile inlined and normalization already
    /// applied, so it reproduces `spec` on its own.
    pub config: ScenarioConfig,
    pub spec: GameSpec,
    pub normalization: Normalization,
}

impl ScenarioConfig {
    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    /// A ready-to-edit template: the night-valley scenario with every default
    /// spelled out.
    pub fn template() -> Self {
        ScenarioConfig {
            game: GameConfig {
                horizon: 7,
                duration: 3,
                power: 0.2,
                cost: CostConfig::Linear {
                    slope: 1.0,
                    intercept: 0.0,
                },
                domain_bound: None,
                weights: vec![0.5, 0.5],
            },
            load_profile: LoadProfile::Values(vec![0.9, 1.0, 0.95, 0.7, 0.5, 0.45, 0.6]),
            normalize: false,
            solver: SolverConfig::default(),
            sweep: None,
        }
        .with_explicit_defaults()
    }

    pub fn with_explicit_defaults(mut self) -> Self {
        if self.sweep.is_none() {
            self.sweep = Some(GridConfig::default());
        }
        self
    }

    pub fn grid(&self) -> Vec<f64> {
        self.sweep.as_ref().map_or_else(default_grid, GridConfig::values)
    }

    /// Reads the load profile (relative paths against `base_dir`), applies
    /// normalization when either the config or `force_normalize` asks for it,
    /// and builds the game.
    pub fn resolve(&self, base_dir: &Path, force_normalize: bool) -> Result<Scenario> {
        let raw = match &self.load_profile {
            LoadProfile::Values(v) => v.clone(),
            LoadProfile::Path(p) => {
                let path = if p.is_absolute() { p.clone() } else { base_dir.join(p) };
                load_profile_csv(&path)?
            }
        };
        if raw.len() != self.game.horizon {
            return Err(CliError::Config(format!(
                "load profile has {} entries but the horizon is {}",
                raw.len(),
                self.game.horizon
            )));
        }
        let (loads, normalization) = if self.normalize || force_normalize {
            let (loads, divisor) = normalize_to_unit_max(&raw)?;
            (
                loads,
                Normalization {
                    applied: true,
                    convention: "divided by the maximum load, so max L = 1".into(),
                    divisor,
                },
            )
        } else {
            (raw, Normalization::none())
        };
        let mut cost = self.game.cost.family()?;
        if let Some(bound) = self.game.domain_bound {
            cost = cost.with_domain_bound(bound)?;
        }
        let spec = GameSpec::new(
            self.game.horizon,
            self.game.duration,
            self.game.power,
            loads.clone(),
            cost,
            self.game.weights.clone(),
        )?;
        let mut config = self.clone();
        config.load_profile = LoadProfile::Values(loads);
        config.normalize = false;
        Ok(Scenario {
            config,
            spec,
            normalization,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_fills_defaults() {
        let cfg: ScenarioConfig = serde_json::from_str(
            r#"{"game": {"horizon": 3, "duration": 2, "cost": {"family": "quadratic"}, "weights": [0, 1]},
                "load_profile": {"values": [1.5, 1, 1]}}"#,
        )
        .unwrap();
        assert_eq!(cfg.game.power, 1.0);
        assert_eq!(cfg.solver, SolverConfig::default());
        assert_eq!(cfg.solver.max_iter, 100_000);
        assert_eq!(cfg.solver.gap_tol, 1e-6);
        assert_eq!(cfg.grid().len(), 101);
        let scenario = cfg.resolve(Path::new("."), false).unwrap();
        assert_eq!(scenario.spec.base_load(), &[1.5, 1.0, 1.0]);
        assert!(!scenario.normalization.applied);
    }

    #[test]
    fn template_round_trips() {
        let t = ScenarioConfig::template();
        let text = serde_json::to_string_pretty(&t).unwrap();
        let back: ScenarioConfig = serde_json::from_str(&text).unwrap();
        assert_eq!(t, back);
        assert!(text.contains("\"max_iter\": 100000"));
        assert!(text.contains("\"schedule\": \"inverse_sqrt\""));
    }

    #[test]
    fn unknown_fields_are_rejected() {
        let err = serde_json::from_str::<ScenarioConfig>(
            r#"{"game": {"horizon": 3, "duration": 2, "cost": {"family": "quadratic"}, "weights": [1], "colour": 1},
                "load_profile": {"values": [1, 1, 1]}}"#,
        );
        assert!(err.is_err());
    }

    #[test]
    fn invalid_game_names_the_violation() {
        let mut cfg = ScenarioConfig::template();
        cfg.game.duration = 9;
        let err = cfg.resolve(Path::new("."), false).unwrap_err().to_string();
        assert!(err.contains("duration"), "{err}");

        let mut cfg = ScenarioConfig::template();
        cfg.load_profile = LoadProfile::Values(vec![1.0; 3]);
        assert!(cfg.resolve(Path::new("."), false).is_err());
    }

    #[test]
    fn normalization_is_recorded() {
        let mut cfg = ScenarioConfig::template();
        cfg.game.horizon = 2;
        cfg.game.duration = 1;
        cfg.load_profile = LoadProfile::Values(vec![2.0, 4.0]);
        let s = cfg.resolve(Path::new("."), true).unwrap();
        assert_eq!(s.spec.base_load(), &[0.5, 1.0]);
        assert!(s.normalization.applied);
        assert_eq!(s.normalization.divisor, 4.0);
        assert_eq!(s.config.load_profile, LoadProfile::Values(vec![0.5, 1.0]));
        assert!(!s.config.normalize);
    }
}
