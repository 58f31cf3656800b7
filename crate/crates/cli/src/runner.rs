//! Executes planned runs and writes their artifacts.
//!
//! Layout under the output directory:
//!
//! ```text
//! summary.json                 RunReport
//! <label>/seed_<seed>.csv      trajectory log
//! <label>/seed_<seed>.svg      trajectory plot
//! ```

use std::io;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use rbl_core::engine::{RunOutcome, WorldConfig, CLEARANCE_TOLERANCE};
use rbl_core::rules::RuleMode;
use rbl_core::scenarios::{compute_metrics, ScenarioKind, ScenarioSpec};
use thiserror::Error;

use crate::config::{scenario_label, ExperimentConfig, RunPlan};
use crate::output::write_run_artifacts;
use crate::report::{RunRecord, RunReport};

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] crate::config::ConfigError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("worker pool: {0}")]
    Pool(String),
}

/// Runs one plan; artifacts go to `out/<label>/` when `out` is given.
pub fn execute(plan: &RunPlan, out: Option<&Path>) -> Result<RunRecord, RunError> {
    let started = Instant::now();
    let mut record = RunRecord {
        scenario: plan.scenario,
        label: plan.label.clone(),
        seed: plan.seed,
        n: plan.spec.n,
        outcome: None,
        metrics: None,
        mpc_failures: 0,
        rollout_violations: 0,
        safety_violation: false,
        error: None,
        wall_seconds: 0.0,
    };
    let placements = match plan.spec.placements() {
        Ok(p) => p,
        Err(e) => {
            record.error = Some(e.to_string());
            return Ok(record);
        }
    };
    let mut world = match plan.spec.build(&plan.world) {
        Ok(w) => w,
        Err(e) => {
            record.error = Some(e.to_string());
            return Ok(record);
        }
    };
    let result = world.run(plan.spec.max_time, None);
    let metrics = compute_metrics(&result.log, &world, plan.spec.mission_area(&placements));
    record.safety_violation = result.outcome == RunOutcome::SafetyViolation || metrics.min_clearance < -CLEARANCE_TOLERANCE;
    if let RunOutcome::Fault(msg) = &result.outcome {
        record.error = Some(msg.clone());
    }
    record.outcome = Some(result.outcome);
    record.mpc_failures = result.mpc_failures;
    record.rollout_violations = result.rollout_violations;
    record.metrics = Some(metrics);
    if let Some(dir) = out {
        let dir = dir.join(&plan.label);
        let goals: Vec<_> = world.robots.iter().map(|r| r.goal).collect();
        let deltas: Vec<_> = world.robots.iter().map(|r| r.delta).collect();
        write_run_artifacts(&dir, &format!("seed_{}", plan.seed), &result.log, &goals, &deltas)
            .map_err(|source| RunError::Io { path: dir, source })?;
    }
    record.wall_seconds = started.elapsed().as_secs_f64();
    Ok(record)
}

/// Runs every plan on a pool of `workers` threads (0 picks the number of
/// cores) and writes `summary.json` when `out` is given.
pub fn run_plans(plans: &[RunPlan], workers: usize, out: Option<&Path>) -> Result<RunReport, RunError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| RunError::Pool(e.to_string()))?;
    let records = pool.install(|| plans.par_iter().map(|p| execute(p, out)).collect::<Result<Vec<_>, _>>())?;
    let report = RunReport::new(records);
    if let Some(dir) = out {
        write_summary(dir, &report)?;
    }
    Ok(report)
}

pub fn run_experiment(config: &ExperimentConfig, workers: usize) -> Result<RunReport, RunError> {
    let plans = config.validate()?;
    run_plans(&plans, workers, Some(&config.output_dir))
}

pub fn write_summary(dir: &Path, report: &RunReport) -> Result<(), RunError> {
    let io_err = |source| RunError::Io {
        path: dir.to_path_buf(),
        source,
    };
    std::fs::create_dir_all(dir).map_err(io_err)?;
    let text = serde_json::to_string_pretty(report).map_err(|e| io_err(io::Error::other(e)))?;
    std::fs::write(dir.join("summary.json"), text + "\n").map_err(io_err)
}

/// Every `summary.json` under `dir`, in path order.
pub fn find_summaries(dir: &Path) -> io::Result<Vec<PathBuf>> {
    let mut found = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in std::fs::read_dir(&d)? {
            let path = entry?.path();
            if path.is_dir() {
                stack.push(path);
            } else if path.file_name().is_some_and(|f| f == "summary.json") {
                found.push(path);
            }
        }
    }
    found.sort();
    Ok(found)
}

pub fn load_summary(path: &Path) -> Result<RunReport, RunError> {
    let io_err = |source| RunError::Io {
        path: path.to_path_buf(),
        source,
    };
    let text = std::fs::read_to_string(path).map_err(io_err)?;
    serde_json::from_str(&text).map_err(|e| io_err(io::Error::new(io::ErrorKind::InvalidData, e)))
}

/// The three deadlock fixtures with rules active, plus fixture c with the
/// rules frozen as a negative control.
pub fn fixture_plans(world: &WorldConfig, max_time: f64) -> Vec<RunPlan> {
    let cases = [
        (ScenarioKind::FixtureA, RuleMode::Active),
        (ScenarioKind::FixtureB, RuleMode::Active),
        (ScenarioKind::FixtureC, RuleMode::Active),
        (ScenarioKind::FixtureC, RuleMode::Frozen),
    ];
    cases
        .iter()
        .enumerate()
        .map(|(i, &(kind, rules))| {
            let mut spec = ScenarioSpec {
                kind,
                rules,
                max_time,
                ..ScenarioSpec::default()
            };
            spec.n = spec.placements().map_or(0, |p| p.len());
            let mut label = scenario_label(i, &spec);
            if rules == RuleMode::Frozen {
                label.push_str("_frozen");
            }
            RunPlan {
                scenario: i,
                label,
                seed: world.seed,
                spec,
                world: world.clone(),
            }
        })
        .collect()
}
