//! Experiment configuration files.
//!
//! A config is a TOML document. Every key is optional:
//!
//! ```toml
//! output_dir = "rbl-out"
//! repetitions = 3          # or: seeds = [0, 7, 9]
//!
//! [world]                  # engine settings
//! dt = 0.033
//! scheduling = "async"
//!
//! [world.mpc]
//! horizon = 40
//!
//! [[scenario]]
//! kind = "circle"
//! n = 25
//! k_p = 6.0
//! beta_d = [0.2, 0.75]     # a fixed value or a [lo, hi] range
//!
//! [scenario.rule_overrides]
//! d1 = 0.1
//! ```
//!
//! Unknown keys are rejected. Without any `[[scenario]]` a single default
//! scenario (crossing circle, five robots) runs.

use std::path::PathBuf;

use rbl_core::engine::WorldConfig;
use rbl_core::scenarios::{ScenarioError, ScenarioSpec};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{0}")]
    Parse(String),
    #[error("{field}: {message}")]
    Invalid { field: String, message: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub output_dir: PathBuf,
    /// Runs per scenario with seeds `0..repetitions`; defaults to 1.
    pub repetitions: Option<usize>,
    /// Explicit run seeds, instead of `repetitions`.
    pub seeds: Option<Vec<u64>>,
    pub world: WorldConfig,
    #[serde(rename = "scenario")]
    pub scenarios: Vec<ScenarioSpec>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            output_dir: PathBuf::from("rbl-out"),
            repetitions: None,
            seeds: None,
            world: WorldConfig::default(),
            scenarios: Vec::new(),
        }
    }
}

/// One planned run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunPlan {
    pub scenario: usize,
    pub label: String,
    pub seed: u64,
    pub spec: ScenarioSpec,
    pub world: WorldConfig,
}

impl ExperimentConfig {
    pub fn scenario_specs(&self) -> Vec<ScenarioSpec> {
        if self.scenarios.is_empty() {
            vec![ScenarioSpec::default()]
        } else {
            self.scenarios.clone()
        }
    }

    pub fn run_seeds(&self) -> Result<Vec<u64>, ConfigError> {
        match (&self.seeds, self.repetitions) {
            (Some(_), Some(_)) => Err(ConfigError::Invalid {
                field: "seeds".into(),
                message: "set either `seeds` or `repetitions`, not both".into(),
            }),
            (Some(s), None) => Ok(s.clone()),
            (None, r) => Ok((0..r.unwrap_or(1) as u64).collect()),
        }
    }

    /// Every (scenario, seed) pair. The run seed replaces both the scenario
    /// seed and the world seed.
    pub fn plans(&self) -> Result<Vec<RunPlan>, ConfigError> {
        let seeds = self.run_seeds()?;
        let mut plans = Vec::new();
        for (i, spec) in self.scenario_specs().into_iter().enumerate() {
            for &seed in &seeds {
                plans.push(RunPlan {
                    scenario: i,
                    label: scenario_label(i, &spec),
                    seed,
                    spec: ScenarioSpec { seed, ..spec.clone() },
                    world: WorldConfig { seed, ..self.world.clone() },
                });
            }
        }
        Ok(plans)
    }

    /// Builds every planned world once, which checks the gain bound and the
    /// start and goal separation.
    pub fn validate(&self) -> Result<Vec<RunPlan>, ConfigError> {
        for (i, spec) in self.scenario_specs().iter().enumerate() {
            spec.validate().map_err(|e| invalid(format!("scenario[{i}]"), e))?;
        }
        let plans = self.plans()?;
        for p in &plans {
            p.spec
                .build(&p.world)
                .map_err(|e| invalid(format!("scenario[{}] (seed {})", p.scenario, p.seed), e))?;
        }
        Ok(plans)
    }
}

fn invalid(field: String, e: ScenarioError) -> ConfigError {
    ConfigError::Invalid {
        field,
        message: e.to_string(),
    }
}

pub fn scenario_label(index: usize, spec: &ScenarioSpec) -> String {
    let kind = serde_json::to_value(spec.kind)
        .ok()
        .and_then(|v| v.as_str().map(str::to_owned))
        .unwrap_or_default();
    format!("s{index}_{kind}_n{}", spec.n)
}

pub fn parse_config(text: &str) -> Result<ExperimentConfig, ConfigError> {
    toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))
}
