//! Experiment runner for the rule-based Lloyd planner.

pub mod config;
pub mod output;
pub mod report;
pub mod runner;
