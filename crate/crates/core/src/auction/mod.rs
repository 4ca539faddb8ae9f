//! Multi-auctioneer multi-bidder power auction.
//!
//! Every user is both an auctioneer, selling its own power at price
//! `lambda_j`, and a bidder, buying power from every auctioneer including
//! itself. One iteration runs three steps in order:
//!
//! 1. **Bids.** Each bidder posts `b_{j,i} = p_{j,i} w_i R'_i` to every
//!    auctioneer whose marginal value exceeds its price, and zero elsewhere.
//! 2. **Allocation.** Each auctioneer splits its power in proportion to the
//!    bids: `p_{j,i} = b_{j,i} / lambda_j`.
//! 3. **Prices.** `lambda_j <- max(floor, lambda_j + eps_j (sum_i p_{j,i} - pbar_j))`.
//!
//! [`BidRule`] selects the point at which bidders evaluate the bid rule. The
//! default, [`BidRule::SurplusMaximizing`], has each bidder first solve its
//! surplus-maximization problem at the posted prices and bid from that
//! demand; the price step is then a projected dual ascent on the weighted
//! sum-rate problem and converges to its optimum for small steps.
//! [`BidRule::CurrentAllocation`] evaluates the rule at the current
//! allocation. Zero allocations are absorbing under that rule (a zero
//! allocation produces a zero bid), so it is kept for inspection only.

mod demand;

use std::io::Write;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::channel::ChannelRealization;
use crate::error::{invalid, Error, Result};
use crate::export::fmt_sig12;
use crate::matrix::{PowerMatrix, SquareMatrix};
use crate::rate::{column_gradient, marginal_values, payoff, weighted_sum_rate, Budgets};
use crate::seed::rng_from_seed;

pub use demand::{best_response, DemandOptions};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepConfig {
    pub epsilon: Vec<f64>,
    pub price_floor: f64,
    pub lambda_init_range: (f64, f64),
    pub max_iterations: usize,
    /// Price-stability threshold `delta`.
    pub convergence_tol: f64,
    /// Consecutive stable iterations required, `W`.
    pub convergence_window: usize,
}

impl StepConfig {
    /// Defaults for `k` users.
    pub fn new(k: usize) -> Self {
        Self {
            epsilon: vec![1e-3; k],
            price_floor: 1e-9,
            lambda_init_range: (0.5, 1.5),
            max_iterations: 1_000_000,
            convergence_tol: 1e-6,
            convergence_window: 10,
        }
    }

    pub fn with_epsilon(mut self, eps: f64) -> Self {
        self.epsilon.iter_mut().for_each(|e| *e = eps);
        self
    }

    pub fn validate(&self, k: usize) -> Result<()> {
        if self.epsilon.len() != k {
            return Err(Error::DimensionMismatch {
                expected: k,
                found: self.epsilon.len(),
            });
        }
        if self.epsilon.iter().any(|&e| !(e > 0.0 && e.is_finite())) {
            return Err(invalid("epsilon", "step sizes must be positive"));
        }
        if !(self.price_floor > 0.0) {
            return Err(invalid("price_floor", "must be positive"));
        }
        let (lo, hi) = self.lambda_init_range;
        if !(lo > 0.0 && hi >= lo && hi.is_finite()) {
            return Err(invalid("lambda_init_range", "must be a positive interval"));
        }
        if !(self.convergence_tol > 0.0) {
            return Err(invalid("convergence_tol", "must be positive"));
        }
        if self.convergence_window == 0 {
            return Err(invalid("convergence_window", "must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ScheduleKind {
    Synchronous,
    Asynchronous,
}

/// Node `u` acts (both as bidder and auctioneer) only on iterations `t`
/// with `t % update_period[u] == 0`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Schedule {
    update_period: Vec<u32>,
}

impl Schedule {
    pub fn synchronous(k: usize) -> Self {
        Self {
            update_period: vec![1; k],
        }
    }

    pub fn new(update_period: Vec<u32>) -> Result<Self> {
        if update_period.contains(&0) {
            return Err(invalid("update_period", "periods must be at least 1"));
        }
        Ok(Self { update_period })
    }

    /// Everyone updates every iteration except `node`.
    pub fn with_slow_node(k: usize, node: usize, period: u32) -> Result<Self> {
        if node >= k {
            return Err(invalid("node", format!("index {node} out of range for {k} users")));
        }
        let mut periods = vec![1; k];
        periods[node] = period;
        Self::new(periods)
    }

    pub fn kind(&self) -> ScheduleKind {
        if self.update_period.iter().all(|&p| p == 1) {
            ScheduleKind::Synchronous
        } else {
            ScheduleKind::Asynchronous
        }
    }

    pub fn update_period(&self) -> &[u32] {
        &self.update_period
    }

    #[inline]
    pub fn updates_at(&self, node: usize, t: usize) -> bool {
        t.is_multiple_of(self.update_period[node] as usize)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BidRule {
    /// Bid from the bidder's surplus-maximizing demand at the posted prices.
    #[default]
    SurplusMaximizing,
    /// Bid from the current allocation ([`bid_update`]).
    CurrentAllocation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuctionState {
    pub p: PowerMatrix,
    /// Entry `(j, i)` is bidder `i`'s bid to auctioneer `j`.
    pub b: SquareMatrix,
    pub lambda: Vec<f64>,
    pub t: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub t: usize,
    pub lambda: Vec<f64>,
    pub payoff: Vec<f64>,
    /// `sum_i p_{j,i} - pbar_j` per auctioneer.
    pub residual: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    /// One row per iteration (empty when tracing is disabled).
    pub trace: Vec<TraceRow>,
    pub final_state: AuctionState,
    /// Prices moved by less than `delta` for `W` consecutive iterations and
    /// every row sum ends within `[pbar - 10 delta, pbar + delta]`, or below
    /// `pbar + delta` for rows priced at the floor.
    pub converged: bool,
    pub iterations_used: usize,
    /// Per node, the last iteration at which its price moved by at least
    /// the convergence tolerance (0 if it never did).
    pub node_convergence: Vec<usize>,
}

impl RunRecord {
    pub fn objective(&self, ch: &ChannelRealization, budgets: &Budgets) -> f64 {
        weighted_sum_rate(&self.final_state.p, ch, budgets)
    }

    /// CSV with columns `t, lambda_1..K, payoff_1..K, residual_1..K`, all
    /// values with 12 significant digits.
    pub fn write_trace_csv<W: Write>(&self, out: W) -> Result<()> {
        let k = self.final_state.lambda.len();
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["t".to_string()];
        for name in ["lambda", "payoff", "residual"] {
            header.extend((1..=k).map(|i| format!("{name}_{i}")));
        }
        w.write_record(&header)?;
        for row in &self.trace {
            let mut rec = vec![row.t.to_string()];
            rec.extend(
                row.lambda
                    .iter()
                    .chain(&row.payoff)
                    .chain(&row.residual)
                    .map(|&x| fmt_sig12(x)),
            );
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

fn check_dims(ch: &ChannelRealization, budgets: &Budgets, cfg: &StepConfig) -> Result<usize> {
    let k = ch.num_users();
    if budgets.num_users() != k {
        return Err(Error::DimensionMismatch {
            expected: k,
            found: budgets.num_users(),
        });
    }
    cfg.validate(k)?;
    Ok(k)
}

/// Direct-transmission allocation, random bids and random prices.
///
/// Draw order: bids row-major, each `U[0,1) * pbar_j / K`; then prices in
/// node order, uniform on `lambda_init_range`.
pub fn init_state(budgets: &Budgets, cfg: &StepConfig, seed: u64) -> AuctionState {
    let k = budgets.num_users();
    let mut rng = rng_from_seed(seed);
    let p_bar = budgets.p_bar();
    let b = SquareMatrix::from_fn(k, |j, _| rng.random::<f64>() * p_bar[j] / k as f64);
    let (lo, hi) = cfg.lambda_init_range;
    let lambda = (0..k).map(|_| lo + (hi - lo) * rng.random::<f64>()).collect();
    AuctionState {
        p: PowerMatrix::direct(p_bar),
        b,
        lambda,
        t: 0,
    }
}

/// Bid rule at the current allocation: bidder `i` bids
/// `p_{j,i} w_i dR_i/dp_{j,i}` to auctioneer `j` when that marginal value
/// strictly exceeds `lambda_j`, and nothing otherwise.
pub fn bid_update(state: &AuctionState, ch: &ChannelRealization, budgets: &Budgets) -> SquareMatrix {
    let m = marginal_values(&state.p, ch, budgets);
    SquareMatrix::from_fn(m.dim(), |j, i| {
        if m[(j, i)] > state.lambda[j] {
            state.p[(j, i)] * m[(j, i)]
        } else {
            0.0
        }
    })
}

/// Bids of surplus-maximizing bidders at the current prices: each bidder
/// solves for its demand column and bids `demand_j * w_i dR_i/dp_{j,i}`
/// (evaluated at the demand) to every auctioneer it buys from.
pub fn surplus_maximizing_bids(
    state: &AuctionState,
    ch: &ChannelRealization,
    budgets: &Budgets,
) -> SquareMatrix {
    let k = state.lambda.len();
    let everyone = vec![true; k];
    demand_bids(state, ch, budgets, &everyone, &DemandOptions::default())
}

fn demand_bids(
    state: &AuctionState,
    ch: &ChannelRealization,
    budgets: &Budgets,
    active: &[bool],
    opts: &DemandOptions,
) -> SquareMatrix {
    let k = state.lambda.len();
    let mut b = state.b.clone();
    let pinned: Vec<bool> = active.iter().map(|a| !a).collect();
    for i in (0..k).filter(|&i| active[i]) {
        let w = budgets.weights()[i];
        let demand = best_response(i, &state.lambda, ch, w, &state.p.column(i), &pinned, opts);
        let marginal = column_gradient(i, &demand, ch);
        for j in (0..k).filter(|&j| active[j]) {
            b[(j, i)] = if demand[j] > 0.0 {
                demand[j] * w * marginal[j]
            } else {
                0.0
            };
        }
    }
    b
}

/// `p_{j,i} = b_{j,i} / lambda_j`.
pub fn allocate_power(state: &AuctionState) -> PowerMatrix {
    let k = state.lambda.len();
    let m = SquareMatrix::from_fn(k, |j, i| state.b[(j, i)] / state.lambda[j]);
    PowerMatrix::new(m).expect("bids are nonnegative and prices positive")
}

/// Projected price step for every auctioneer.
pub fn price_update(state: &AuctionState, budgets: &Budgets, cfg: &StepConfig) -> Vec<f64> {
    (0..state.lambda.len())
        .map(|j| next_price(state, budgets, cfg, j))
        .collect()
}

#[inline]
fn next_price(state: &AuctionState, budgets: &Budgets, cfg: &StepConfig, j: usize) -> f64 {
    let excess = state.p.row_sum(j) - budgets.p_bar()[j];
    (state.lambda[j] + cfg.epsilon[j] * excess).max(cfg.price_floor)
}

/// `1/2 sum_j (lambda_j - lambda*_j)^2`.
pub fn lyapunov(lambda: &[f64], lambda_star: &[f64]) -> f64 {
    0.5 * lambda
        .iter()
        .zip(lambda_star)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
}

pub fn lyapunov_value(state: &AuctionState, oracle: &crate::oracle::OracleSolution) -> f64 {
    lyapunov(&state.lambda, &oracle.lambda_star)
}

/// Configured auction run.
#[derive(Debug, Clone)]
pub struct Auction<'a> {
    ch: &'a ChannelRealization,
    budgets: &'a Budgets,
    cfg: &'a StepConfig,
    schedule: Schedule,
    rule: BidRule,
    record_trace: bool,
    demand: DemandOptions,
}

impl<'a> Auction<'a> {
    pub fn new(ch: &'a ChannelRealization, budgets: &'a Budgets, cfg: &'a StepConfig) -> Self {
        Self {
            ch,
            budgets,
            cfg,
            schedule: Schedule::synchronous(ch.num_users()),
            rule: BidRule::default(),
            record_trace: true,
            demand: DemandOptions::default(),
        }
    }

    pub fn schedule(mut self, schedule: Schedule) -> Self {
        self.schedule = schedule;
        self
    }

    pub fn bid_rule(mut self, rule: BidRule) -> Self {
        self.rule = rule;
        self
    }

    pub fn record_trace(mut self, on: bool) -> Self {
        self.record_trace = on;
        self
    }

    pub fn run(&self, seed: u64) -> Result<RunRecord> {
        check_dims(self.ch, self.budgets, self.cfg)?;
        self.run_from(init_state(self.budgets, self.cfg, seed))
    }

    pub fn run_from(&self, mut state: AuctionState) -> Result<RunRecord> {
        let k = check_dims(self.ch, self.budgets, self.cfg)?;
        if self.schedule.update_period().len() != k {
            return Err(Error::DimensionMismatch {
                expected: k,
                found: self.schedule.update_period().len(),
            });
        }
        if state.lambda.len() != k || state.p.dim() != k || state.b.dim() != k {
            return Err(Error::DimensionMismatch {
                expected: k,
                found: state.lambda.len(),
            });
        }
        if state.lambda.iter().any(|&l| !(l >= self.cfg.price_floor)) {
            return Err(invalid("lambda", "initial prices must be at least the price floor"));
        }

        let cfg = self.cfg;
        let p_bar = self.budgets.p_bar();
        let delta = cfg.convergence_tol;
        let mut trace = Vec::new();
        let mut node_convergence = vec![0usize; k];
        let mut quiet = 0usize;
        let mut converged = false;
        let start_t = state.t;
        let mut active = vec![true; k];

        for _ in 0..cfg.max_iterations {
            let t = state.t + 1;
            for (u, a) in active.iter_mut().enumerate() {
                *a = self.schedule.updates_at(u, t);
            }

            state.b = match self.rule {
                BidRule::SurplusMaximizing => {
                    demand_bids(&state, self.ch, self.budgets, &active, &self.demand)
                }
                BidRule::CurrentAllocation => {
                    let fresh = bid_update(&state, self.ch, self.budgets);
                    SquareMatrix::from_fn(k, |j, i| {
                        if active[j] && active[i] {
                            fresh[(j, i)]
                        } else {
                            state.b[(j, i)]
                        }
                    })
                }
            };

            for j in (0..k).filter(|&j| active[j]) {
                let lam = state.lambda[j];
                let row = state.p.matrix_mut().row_mut(j);
                for (i, p) in row.iter_mut().enumerate() {
                    *p = state.b[(j, i)] / lam;
                }
            }

            let mut max_move: f64 = 0.0;
            for j in (0..k).filter(|&j| active[j]) {
                let next = next_price(&state, self.budgets, cfg, j);
                let moved = (next - state.lambda[j]).abs();
                if moved >= delta {
                    node_convergence[j] = t;
                }
                max_move = max_move.max(moved);
                state.lambda[j] = next;
            }
            state.t = t;

            let residual: Vec<f64> = (0..k).map(|j| state.p.row_sum(j) - p_bar[j]).collect();
            if self.record_trace {
                trace.push(TraceRow {
                    t,
                    lambda: state.lambda.clone(),
                    payoff: (0..k).map(|i| payoff(i, &state.p, self.ch, &state.lambda)).collect(),
                    residual: residual.clone(),
                });
            }

            quiet = if max_move < delta { quiet + 1 } else { 0 };
            // No row may exceed its budget by more than delta; priced rows
            // must also be within 10 delta below it.
            let slack_ok = (0..k).all(|j| {
                residual[j] <= delta
                    && (state.lambda[j] <= cfg.price_floor + delta || residual[j] > -10.0 * delta)
            });
            if quiet >= cfg.convergence_window && slack_ok {
                converged = true;
                break;
            }
        }

        Ok(RunRecord {
            trace,
            iterations_used: state.t - start_t,
            final_state: state,
            converged,
            node_convergence,
        })
    }
}

/// Runs the auction with the default bid rule, recording a full trace.
pub fn run_auction(
    ch: &ChannelRealization,
    budgets: &Budgets,
    cfg: &StepConfig,
    schedule: &Schedule,
    seed: u64,
) -> Result<RunRecord> {
    Auction::new(ch, budgets, cfg)
        .schedule(schedule.clone())
        .run(seed)
}
