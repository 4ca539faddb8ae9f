//! Distributed power auction for cooperative amplify-and-forward relay
//! networks, with a centralized oracle for checking its fixed points.
//!
//! - [`channel`]: topologies and seeded channel-gain realizations.
//! - [`rate`]: AF rates, gradients, surplus and the weighted sum-rate.
//! - [`auction`]: the multi-auctioneer multi-bidder price iteration.
//! - [`oracle`]: projected-gradient and grid solvers plus KKT checks.
//! - [`experiments`]: config-driven Monte Carlo sweeps behind the CLI.

pub mod auction;
pub mod channel;
pub mod error;
pub mod experiments;
pub mod export;
pub mod matrix;
pub mod oracle;
pub mod rate;
pub mod seed;

pub use auction::{
    run_auction, Auction, AuctionState, BidRule, RunRecord, Schedule, ScheduleKind, StepConfig,
};
pub use channel::{ChannelRealization, PropagationParams, Topology};
pub use error::{Error, Result};
pub use matrix::{PowerMatrix, SquareMatrix};
pub use oracle::{solve_p1, OracleOptions, OracleSolution};
pub use rate::Budgets;
