//! Run records, per-scenario aggregates and the printed table.

use std::fmt::Write as _;

use rbl_core::engine::RunOutcome;
use rbl_core::scenarios::Metrics;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub scenario: usize,
    pub label: String,
    pub seed: u64,
    pub n: usize,
    /// `None` when the world could not be built.
    pub outcome: Option<RunOutcome>,
    pub metrics: Option<Metrics>,
    pub mpc_failures: usize,
    pub rollout_violations: usize,
    pub safety_violation: bool,
    pub error: Option<String>,
    pub wall_seconds: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub mean: f64,
    /// Sample standard deviation; zero for a single value.
    pub std: f64,
}

impl Stat {
    pub fn of(values: &[f64]) -> Option<Stat> {
        if values.is_empty() {
            return None;
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let std = if values.len() > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        Some(Stat { mean, std })
    }
}

impl std::fmt::Display for Stat {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let p = f.precision().unwrap_or(2);
        if self.std > 0.0 {
            write!(f, "{:.*} ± {:.*}", p, self.mean, p, self.std)
        } else {
            write!(f, "{:.*}", p, self.mean)
        }
    }
}

/// Statistics over the runs of one scenario that produced metrics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioAggregate {
    pub scenario: usize,
    pub label: String,
    pub n: usize,
    pub runs: usize,
    pub successes: usize,
    pub eta: Option<Stat>,
    pub max_time: Option<Stat>,
    pub max_time_ball: Option<Stat>,
    pub mean_speed: Option<Stat>,
    pub rsr: Option<Stat>,
    pub min_clearance: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub n_runs: usize,
    pub runs: Vec<RunRecord>,
    pub aggregates: Vec<ScenarioAggregate>,
}

impl RunReport {
    pub fn new(mut runs: Vec<RunRecord>) -> Self {
        runs.sort_by_key(|r| (r.scenario, r.seed));
        let mut aggregates = Vec::new();
        let mut start = 0;
        while start < runs.len() {
            let end = start + runs[start..].iter().take_while(|r| r.scenario == runs[start].scenario).count();
            aggregates.push(aggregate(&runs[start..end]));
            start = end;
        }
        Self {
            n_runs: runs.len(),
            runs,
            aggregates,
        }
    }

    pub fn any_safety_violation(&self) -> bool {
        self.runs.iter().any(|r| r.safety_violation)
    }

    pub fn table(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "{:<24} {:>4} {:>7} {:>16} {:>16} {:>14} {:>12} {:>7}",
            "scenario", "N", "eta", "max time (s)", "ball time (s)", "speed (m/s)", "rsr", "ok/runs"
        );
        let show = |v: Option<Stat>, p: usize| v.map_or("-".to_string(), |v| format!("{v:.p$}"));
        for a in &self.aggregates {
            let _ = writeln!(
                s,
                "{:<24} {:>4} {:>7} {:>16} {:>16} {:>14} {:>12} {:>7}",
                a.label,
                a.n,
                show(a.eta, 4),
                show(a.max_time, 2),
                show(a.max_time_ball, 2),
                show(a.mean_speed, 2),
                show(a.rsr, 2),
                format!("{}/{}", a.successes, a.runs)
            );
        }
        for r in &self.runs {
            if let Some(e) = &r.error {
                let _ = writeln!(s, "{} seed {}: {e}", r.label, r.seed);
            } else if r.safety_violation {
                let _ = writeln!(s, "{} seed {}: SAFETY VIOLATION", r.label, r.seed);
            }
        }
        s
    }
}

fn aggregate(runs: &[RunRecord]) -> ScenarioAggregate {
    let ok: Vec<&Metrics> = runs.iter().filter_map(|r| r.metrics.as_ref()).collect();
    let stat = |f: fn(&Metrics) -> f64| Stat::of(&ok.iter().map(|m| f(m)).collect::<Vec<_>>());
    ScenarioAggregate {
        scenario: runs[0].scenario,
        label: runs[0].label.clone(),
        n: runs[0].n,
        runs: runs.len(),
        successes: runs
            .iter()
            .filter(|r| r.outcome == Some(RunOutcome::Success))
            .count(),
        eta: stat(|m| m.eta),
        max_time: stat(|m| m.max_time),
        max_time_ball: stat(|m| m.max_time_ball),
        mean_speed: stat(|m| m.mean_speed),
        rsr: stat(|m| m.rsr),
        min_clearance: ok.iter().map(|m| m.min_clearance).reduce(f64::min),
    }
}
