//! Per-realization records and the aggregates derived from them.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RealizationRecord {
    pub index: u64,
    pub users: usize,
    pub converged: bool,
    pub iterations: usize,
    pub auction_objective: f64,
    pub oracle_objective: Option<f64>,
    /// Weighted sum-rate of direct transmission at full power.
    pub baseline_objective: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CdfPoint {
    pub iterations: usize,
    /// Fraction of all realizations converged within `iterations`.
    pub fraction: f64,
}

/// Means are over converged realizations only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregates {
    pub realizations: usize,
    pub converged: usize,
    pub unconverged_fraction: f64,
    pub mean_auction_objective: Option<f64>,
    pub mean_baseline_objective: Option<f64>,
    pub mean_oracle_objective: Option<f64>,
    /// `mean_auction / mean_baseline - 1`.
    pub relative_gain: Option<f64>,
    /// `mean_auction - mean_baseline`.
    pub absolute_gain: Option<f64>,
    pub iteration_cdf: Vec<CdfPoint>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSummary {
    pub records: Vec<RealizationRecord>,
    pub aggregates: Aggregates,
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

/// Empirical CDF of `samples` normalized by `total`: one point per distinct
/// value, at the fraction of samples at or below it.
pub fn empirical_cdf(samples: &[usize], total: usize) -> Vec<CdfPoint> {
    let mut sorted = samples.to_vec();
    sorted.sort_unstable();
    let mut points: Vec<CdfPoint> = Vec::new();
    for (rank, &x) in sorted.iter().enumerate() {
        let fraction = (rank + 1) as f64 / total as f64;
        match points.last_mut() {
            Some(last) if last.iterations == x => last.fraction = fraction,
            _ => points.push(CdfPoint { iterations: x, fraction }),
        }
    }
    points
}

impl Aggregates {
    pub fn from_records(records: &[RealizationRecord]) -> Self {
        let done: Vec<&RealizationRecord> = records.iter().filter(|r| r.converged).collect();
        let mean_auction = mean(done.iter().map(|r| r.auction_objective));
        let mean_baseline = mean(done.iter().map(|r| r.baseline_objective));
        let mean_oracle = if done.iter().all(|r| r.oracle_objective.is_some()) {
            mean(done.iter().filter_map(|r| r.oracle_objective))
        } else {
            None
        };
        let iterations: Vec<usize> = done.iter().map(|r| r.iterations).collect();
        Self {
            realizations: records.len(),
            converged: done.len(),
            unconverged_fraction: (records.len() - done.len()) as f64 / records.len().max(1) as f64,
            relative_gain: mean_auction.zip(mean_baseline).map(|(a, b)| a / b - 1.0),
            absolute_gain: mean_auction.zip(mean_baseline).map(|(a, b)| a - b),
            mean_auction_objective: mean_auction,
            mean_baseline_objective: mean_baseline,
            mean_oracle_objective: mean_oracle,
            iteration_cdf: empirical_cdf(&iterations, records.len()),
        }
    }
}

impl ExperimentSummary {
    pub fn new(records: Vec<RealizationRecord>) -> Self {
        let aggregates = Aggregates::from_records(&records);
        Self { records, aggregates }
    }

    /// Whether the stored aggregates equal a fresh recomputation.
    pub fn is_consistent(&self) -> bool {
        Aggregates::from_records(&self.records) == self.aggregates
    }
}
