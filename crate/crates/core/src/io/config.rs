//! Experiment configuration (TOML).

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::controllers::ControllerKind;
use crate::dynamics::DroneParams;
use crate::error::{Error, Result};
use crate::objectives::{CostWeights, PotentialParams};
use crate::path::{SinusoidPath, SineTerm};
use crate::race::{ComparisonThresholds, ProgressMeasure, RaceConfig};
use crate::solver::SolverSettings;

/// The configuration shipped with the crate.
pub const SHIPPED_CONFIG: &str = include_str!("../../config/paper.cfg");

/// Path-following weights shared by both drones, plus each drone's input
/// penalty.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeightsConfig {
    pub position: [f64; 3],
    pub body_rate: [f64; 3],
    pub progress: f64,
    pub rear_input: f64,
    pub front_input: f64,
}

impl Default for WeightsConfig {
    fn default() -> Self {
        Self {
            position: [1.0; 3],
            body_rate: [0.1; 3],
            progress: 0.5,
            rear_input: 20.0,
            front_input: 40.0,
        }
    }
}

impl WeightsConfig {
    fn weights(&self, input: f64, params: &DroneParams) -> CostWeights {
        CostWeights {
            position: self.position,
            body_rate: self.body_rate,
            progress: self.progress,
            input,
            hover_thrust: params.hover_thrust(),
        }
    }

    pub fn rear(&self, params: &DroneParams) -> CostWeights {
        self.weights(self.rear_input, params)
    }

    pub fn front(&self, params: &DroneParams) -> CostWeights {
        self.weights(self.front_input, params)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RaceSettings {
    pub duration: f64,
    pub control_cycle: f64,
    pub rear_theta0: f64,
    pub front_theta0: f64,
    pub opponent_speed: f64,
    #[serde(default)]
    pub overtake_measure: ProgressMeasure,
}

impl Default for RaceSettings {
    fn default() -> Self {
        Self {
            duration: 20.0,
            control_cycle: 1e-3,
            rear_theta0: 0.0,
            front_theta0: 1.0,
            opponent_speed: 1.0,
            overtake_measure: ProgressMeasure::Theta,
        }
    }
}

/// Either the built-in race course or explicit sinusoid coefficients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum PathConfig {
    RaceCourse { theta_min: f64, theta_max: f64 },
    Sinusoid(SinusoidPath),
}

impl Default for PathConfig {
    fn default() -> Self {
        PathConfig::RaceCourse {
            theta_min: -2.0,
            theta_max: 60.0,
        }
    }
}

impl PathConfig {
    pub fn build(&self) -> SinusoidPath {
        match self {
            PathConfig::RaceCourse { theta_min, theta_max } => SinusoidPath::race_course(*theta_min, *theta_max),
            PathConfig::Sinusoid(p) => p.clone(),
        }
    }
}

/// Single-drone projection demo: the drone follows the path at constant
/// parameter speed with a sinusoidal lateral excursion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DemoSettings {
    pub duration: f64,
    pub step: f64,
    pub sample_every: usize,
    pub theta0: f64,
    pub speed: f64,
    pub excursion: [SineTerm; 3],
}

impl Default for DemoSettings {
    fn default() -> Self {
        let term = |amplitude, frequency, phase| SineTerm {
            amplitude,
            frequency,
            phase,
        };
        Self {
            duration: 10.0,
            step: 1e-3,
            sample_every: 10,
            theta0: 0.0,
            speed: 1.0,
            excursion: [term(0.1, 1.3, 0.0), term(0.08, 0.7, 1.0), term(0.1, 2.1, 0.5)],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub drone: DroneParams,
    pub weights: WeightsConfig,
    pub potential: PotentialParams,
    pub race: RaceSettings,
    pub path: PathConfig,
    pub solver: SolverSettings,
    pub comparison: ComparisonThresholds,
    pub demo: DemoSettings,
}

impl ExperimentConfig {
    /// The shipped configuration.
    pub fn shipped() -> Self {
        Self::from_toml_str(SHIPPED_CONFIG).expect("shipped configuration parses")
    }

    pub fn from_toml_str(s: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(s).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("configuration serializes")
    }

    pub fn validate(&self) -> Result<()> {
        self.race_config(ControllerKind::Nmpc, ControllerKind::Nmpc, false)
            .validate()
            .map_err(|e| Error::Config(e.to_string()))?;
        let d = &self.demo;
        if !(d.duration > 0.0 && d.step > 0.0 && d.sample_every > 0) {
            return Err(Error::Config("demo duration, step and sample_every must be positive".into()));
        }
        let c = &self.comparison;
        for f in [c.overtaking, c.obstructing, c.chains] {
            if !(0.0..=1.0).contains(&f) {
                return Err(Error::Config("comparison thresholds must lie in [0, 1]".into()));
            }
        }
        Ok(())
    }

    pub fn race_config(&self, front: ControllerKind, rear: ControllerKind, record_timing: bool) -> RaceConfig {
        RaceConfig {
            front,
            rear,
            front_theta0: self.race.front_theta0,
            rear_theta0: self.race.rear_theta0,
            front_weights: self.weights.front(&self.drone),
            rear_weights: self.weights.rear(&self.drone),
            potential: self.potential,
            params: self.drone,
            path: self.path.build(),
            duration: self.race.duration,
            control_cycle: self.race.control_cycle,
            opponent_speed: self.race.opponent_speed,
            solver: self.solver,
            record_timing,
        }
    }
}
