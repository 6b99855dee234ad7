//! Run configuration: a TOML file with one section per module.
//!
//! ```toml
//! [scenario]                     # optional; needed by `scenario`
//! name = "scenarioA"
//! cycle_mode = "fixed_cycles"    # or "given_optimal_cycles"
//! s0 = [[10.0, 1.0], [9.0, 10.0]]
//!
//! [sim]
//! mode = "discrete"              # or "fluid"
//! mean_interarrival = [2.0, 6.0] # seconds; inf disables a road
//! departure_rate = 1.0
//! theta = [10.0, 30.0, 10.0, 30.0]   # [min1, max1, min2, max2]
//! thresholds = [1.0, 4.0]
//! weights = [1.0, 1.0]
//! switches = 5000                # or: horizon = 3600.0
//! seed = 0
//! rate_window = 100.0
//! initial_green = 1
//! initial_queue = [0.0, 0.0]
//! headway = "deterministic"      # or "exponential"
//! # fluid only: rate_schedule = { road1 = [[0.0, 0.5]], road2 = [[0.0, 0.2]] }
//!
//! [optimizer]
//! rho0 = 2.0
//! decay = "harmonic"             # or "constant"
//! kappa = 50.0
//! s_min = 0.1
//! max_iterations = 500
//! tolerance = 0.05
//! window = 20
//! replications = 1
//!
//! [surface]
//! s1 = [1.0, 15.0, 1.0]          # start, stop, step
//! s2 = [1.0, 15.0, 1.0]
//! replications = 10
//!
//! [output]
//! dir = "out"
//! ```
//!
//! Every section but `[sim]` may be omitted. `[reference]` holds published
//! values for reports (see [`Reference`]).

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::ConfigError;
use crate::experiments::{Axis, CycleMode, GridSpec, Reference, ScenarioSpec};
use crate::model::{CycleConfig, Road, ThresholdVector};
use crate::optimizer::{Decay, StepRule};
use crate::sim::{Headway, Mode, RateSchedule, SimConfig, StopRule};

const BUILTIN: [(&str, &str); 4] = [
    ("scenarioA", include_str!("../scenarios/scenarioA.toml")),
    ("scenarioB", include_str!("../scenarios/scenarioB.toml")),
    ("table2_row1", include_str!("../scenarios/table2_row1.toml")),
    ("table2_row2", include_str!("../scenarios/table2_row2.toml")),
];

pub fn builtin_names() -> impl Iterator<Item = &'static str> {
    BUILTIN.iter().map(|b| b.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSection {
    pub name: String,
    pub cycle_mode: CycleMode,
    pub s0: Vec<[f64; 2]>,
}

fn default_one() -> f64 {
    1.0
}
fn default_weights() -> [f64; 2] {
    [1.0, 1.0]
}
fn default_window() -> f64 {
    100.0
}
fn default_green() -> u8 {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimSection {
    #[serde(default = "default_mode")]
    pub mode: Mode,
    pub mean_interarrival: [f64; 2],
    #[serde(default = "default_one")]
    pub departure_rate: f64,
    pub theta: [f64; 4],
    pub thresholds: [f64; 2],
    #[serde(default = "default_weights")]
    pub weights: [f64; 2],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub switches: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub horizon: Option<f64>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_window")]
    pub rate_window: f64,
    #[serde(default = "default_green")]
    pub initial_green: u8,
    #[serde(default)]
    pub initial_queue: [f64; 2],
    #[serde(default)]
    pub headway: Headway,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rate_schedule: Option<RateSchedule>,
}

fn default_mode() -> Mode {
    Mode::Discrete
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DecayName {
    Constant,
    Harmonic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OptimizerSection {
    pub rho0: f64,
    pub decay: DecayName,
    pub kappa: f64,
    pub s_min: f64,
    pub max_iterations: usize,
    pub tolerance: f64,
    pub window: usize,
    pub replications: usize,
}

impl Default for OptimizerSection {
    fn default() -> Self {
        let r = StepRule::default();
        OptimizerSection {
            rho0: r.rho0,
            decay: DecayName::Harmonic,
            kappa: 50.0,
            s_min: r.s_min,
            max_iterations: r.max_iterations,
            tolerance: r.tolerance,
            window: r.window,
            replications: r.replications,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SurfaceSection {
    pub s1: [f64; 3],
    pub s2: [f64; 3],
    pub replications: usize,
}

impl Default for SurfaceSection {
    fn default() -> Self {
        SurfaceSection { s1: [1.0, 15.0, 1.0], s2: [1.0, 15.0, 1.0], replications: 10 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    pub dir: String,
}

impl Default for OutputSection {
    fn default() -> Self {
        OutputSection { dir: "out".into() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scenario: Option<ScenarioSection>,
    pub sim: SimSection,
    #[serde(default)]
    pub optimizer: OptimizerSection,
    #[serde(default)]
    pub surface: SurfaceSection,
    #[serde(default)]
    pub output: OutputSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference: Option<Reference>,
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// A built-in scenario name or a path to a TOML file.
    pub fn load(name_or_path: &str) -> Result<Self, ConfigError> {
        let path = Path::new(name_or_path);
        if path.exists() {
            let text = std::fs::read_to_string(path)
                .map_err(|source| ConfigError::Io { path: name_or_path.to_string(), source })?;
            return Self::parse(&text);
        }
        let key = name_or_path.strip_suffix(".toml").unwrap_or(name_or_path);
        match BUILTIN.iter().find(|b| b.0 == key) {
            Some((_, text)) => Self::parse(text),
            None => Err(ConfigError::UnknownScenario(name_or_path.to_string())),
        }
    }

    /// Hex SHA-256 of the canonical re-emitted config. The output directory
    /// does not take part.
    pub fn hash(&self) -> String {
        let mut canonical = self.clone();
        canonical.output = OutputSection::default();
        let digest = Sha256::digest(canonical.to_toml().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Header comment lines for output files.
    pub fn header(&self, seed: u64) -> Vec<String> {
        vec![format!("config_hash={}", self.hash()), format!("seed={seed}")]
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let invalid = |e: &dyn std::fmt::Display| ConfigError::Invalid(e.to_string());
        if self.sim.switches.is_some() == self.sim.horizon.is_some() {
            return Err(ConfigError::Invalid("[sim] needs exactly one of `switches` or `horizon`".into()));
        }
        if Road::from_number(self.sim.initial_green).is_none() {
            return Err(ConfigError::Invalid(format!("initial_green must be 1 or 2, got {}", self.sim.initial_green)));
        }
        self.sim_config().map_err(|e| invalid(&e))?.validate().map_err(|e| invalid(&e))?;
        self.step_rule().validate().map_err(|e| invalid(&e))?;
        if self.surface.replications == 0 {
            return Err(ConfigError::Invalid("surface replications must be at least 1".into()));
        }
        let grid = self.grid();
        let (a1, a2) = (grid.s1.values(), grid.s2.values());
        if a1.is_empty() || a2.is_empty() {
            return Err(ConfigError::Invalid("surface grid is empty".into()));
        }
        let s_min = self.optimizer.s_min;
        if a1.iter().chain(&a2).any(|&v| v < s_min) {
            return Err(ConfigError::Invalid(format!("surface grid points must be at least s_min = {s_min}")));
        }
        if let Some(spec) = self.scenario_spec().transpose()? {
            spec.validate().map_err(|e| invalid(&e))?;
        }
        Ok(())
    }

    pub fn sim_config(&self) -> Result<SimConfig, ConfigError> {
        let s = &self.sim;
        let invalid = |e: &dyn std::fmt::Display| ConfigError::Invalid(e.to_string());
        let stop = match (s.switches, s.horizon) {
            (Some(n), None) => StopRule::Switches(n),
            (None, Some(t)) => StopRule::Horizon(t),
            _ => return Err(ConfigError::Invalid("[sim] needs exactly one of `switches` or `horizon`".into())),
        };
        Ok(SimConfig {
            mean_interarrival: s.mean_interarrival,
            departure_rate: s.departure_rate,
            thresholds: ThresholdVector::new(s.thresholds[0], s.thresholds[1]).map_err(|e| invalid(&e))?,
            cycles: CycleConfig::from_flat(s.theta).map_err(|e| invalid(&e))?,
            weights: s.weights,
            stop,
            seed: s.seed,
            mode: s.mode,
            rate_schedule: s.rate_schedule.clone(),
            initial_green: Road::from_number(s.initial_green)
                .ok_or_else(|| ConfigError::Invalid(format!("initial_green must be 1 or 2, got {}", s.initial_green)))?,
            initial_queue: s.initial_queue,
            rate_window: s.rate_window,
            headway: s.headway,
        })
    }

    pub fn step_rule(&self) -> StepRule {
        let o = &self.optimizer;
        StepRule {
            rho0: o.rho0,
            decay: match o.decay {
                DecayName::Constant => Decay::Constant,
                DecayName::Harmonic => Decay::Harmonic { kappa: o.kappa },
            },
            s_min: o.s_min,
            max_iterations: o.max_iterations,
            tolerance: o.tolerance,
            window: o.window,
            replications: o.replications,
        }
    }

    pub fn grid(&self) -> GridSpec {
        let axis = |a: [f64; 3]| Axis { start: a[0], stop: a[1], step: a[2] };
        GridSpec { s1: axis(self.surface.s1), s2: axis(self.surface.s2) }
    }

    pub fn scenario_spec(&self) -> Option<Result<ScenarioSpec, ConfigError>> {
        let sc = self.scenario.as_ref()?;
        Some((|| {
            let s0 = sc
                .s0
                .iter()
                .map(|s| ThresholdVector::new(s[0], s[1]))
                .collect::<Result<Vec<_>, _>>()
                .map_err(|e| ConfigError::Invalid(e.to_string()))?;
            Ok(ScenarioSpec {
                name: sc.name.clone(),
                mean_interarrival: self.sim.mean_interarrival,
                cycles: CycleConfig::from_flat(self.sim.theta).map_err(|e| ConfigError::Invalid(e.to_string()))?,
                cycle_mode: sc.cycle_mode,
                s0,
                reference: self.reference.clone(),
            })
        })())
    }
}
