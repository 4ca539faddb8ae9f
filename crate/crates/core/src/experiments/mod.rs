//! Config-driven Monte Carlo experiments behind the CLI.
//!
//! Every command is a pure function of its [`ScenarioConfig`]: realization
//! `i` is rebuilt from `realization_seed(seed, i)`, realizations run in
//! parallel and are collected in index order, and numbers are written with a
//! fixed format, so re-running a command reproduces its files byte for byte.

mod commands;
mod config;
mod summary;

pub use commands::{
    active_links, cmd_async, cmd_cdf, cmd_throughput, cmd_toy4, cmd_verify, relays_for_others,
    restart_seed, toy4_outcome, verify_instance, AsyncOutcome, CdfOutcome, Link, ThroughputOutcome,
    Toy4Outcome, VerifyOutcome, VerifyRecord, RELAY_THRESHOLD,
};
pub use config::{BudgetDb, Instance, ScenarioConfig, StepSettings, TopologySource};
pub use summary::{empirical_cdf, Aggregates, CdfPoint, ExperimentSummary, RealizationRecord};
