//! The five experiment commands. Each runs its sweep, writes CSV/JSON into
//! `cfg.output_dir` and returns what it wrote as data.

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;

use super::config::{BudgetDb, Instance, ScenarioConfig, TopologySource};
use super::summary::{ExperimentSummary, RealizationRecord};
use crate::auction::{Auction, RunRecord, Schedule};
use crate::channel::Point;
use crate::error::{invalid, Result};
use crate::export::fmt_sig12;
use crate::matrix::PowerMatrix;
use crate::oracle::{check_bid_consistency, kkt_residual, solve_p1_with, BidConsistencyReport, OracleOptions, OracleSolution};
use crate::rate::{payoff, weighted_sum_rate};
use crate::seed::realization_seed;

/// Relay links are drawn where `p_{j,i} > RELAY_THRESHOLD * pbar_j`.
pub const RELAY_THRESHOLD: f64 = 1e-6;

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

fn write_csv(path: &Path, header: &[String], rows: &[Vec<String>]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(header)?;
    for row in rows {
        w.write_record(row)?;
    }
    w.flush()?;
    Ok(())
}

fn out_dir(cfg: &ScenarioConfig) -> Result<PathBuf> {
    fs::create_dir_all(&cfg.output_dir)?;
    Ok(cfg.output_dir.clone())
}

fn run(inst: &Instance, schedule: &Schedule, seed: u64, trace: bool) -> Result<RunRecord> {
    Auction::new(&inst.channel, &inst.budgets, &inst.step)
        .schedule(schedule.clone())
        .record_trace(trace)
        .run(seed)
}

fn baseline(inst: &Instance) -> f64 {
    weighted_sum_rate(&PowerMatrix::direct(inst.budgets.p_bar()), &inst.channel, &inst.budgets)
}

fn oracle(inst: &Instance, cfg: &ScenarioConfig) -> Result<OracleSolution> {
    solve_p1_with(
        &inst.channel,
        &inst.budgets,
        &OracleOptions {
            tol: cfg.oracle_tol,
            seed: inst.oracle_seed,
            ..OracleOptions::default()
        },
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Link {
    /// 1-based transmitting node.
    pub from: usize,
    /// 1-based user whose traffic is carried.
    pub user: usize,
}

/// Links carrying power above the drawing threshold, in row-major order.
pub fn active_links(p: &PowerMatrix, p_bar: &[f64]) -> Vec<Link> {
    p.iter_entries()
        .filter(|&(j, _, v)| v > RELAY_THRESHOLD * p_bar[j])
        .map(|(j, i, _)| Link { from: j + 1, user: i + 1 })
        .collect()
}

/// Whether node `j` (0-based) carries another user's traffic.
pub fn relays_for_others(p: &PowerMatrix, p_bar: &[f64], j: usize) -> bool {
    active_links(p, p_bar).iter().any(|l| l.from == j + 1 && l.user != j + 1)
}

#[derive(Debug, Clone, Serialize)]
pub struct Toy4Outcome {
    pub converged: bool,
    pub iterations: usize,
    pub auction_objective: f64,
    pub baseline_objective: f64,
    pub oracle_objective: f64,
    pub relative_gap: f64,
    /// KKT residual of the final auction allocation at the final prices.
    pub kkt_residual: f64,
    pub final_lambda: Vec<f64>,
    pub final_payoff: Vec<f64>,
    pub initial_power: Vec<Vec<f64>>,
    pub final_power: Vec<Vec<f64>>,
    pub bid_consistency: BidConsistencyReport,
    pub oracle: serde_json::Value,
    #[serde(skip)]
    pub record: RunRecord,
}

#[derive(Serialize)]
struct TopologyFile<'a> {
    area_side: f64,
    nodes: &'a [Point],
    destinations: &'a [Point],
    internode_gain: Vec<Vec<f64>>,
    node_to_dest_gain: Vec<Vec<f64>>,
    relay_threshold: f64,
    initial_links: Vec<Link>,
    final_links: Vec<Link>,
}

/// Runs one realization of the toy scenario (the four-user layout unless the
/// config names another topology) with its oracle comparison.
pub fn toy4_outcome(cfg: &ScenarioConfig, index: u64) -> Result<(Instance, Toy4Outcome)> {
    let inst = cfg.instance(index)?;
    let rec = run(&inst, &inst.schedule, inst.auction_seed, true)?;
    let sol = oracle(&inst, cfg)?;
    let s = &rec.final_state;
    let auction_objective = rec.objective(&inst.channel, &inst.budgets);
    let initial = PowerMatrix::direct(inst.budgets.p_bar());
    let k = inst.budgets.num_users();
    let out = Toy4Outcome {
        converged: rec.converged,
        iterations: rec.iterations_used,
        auction_objective,
        baseline_objective: baseline(&inst),
        oracle_objective: sol.objective,
        relative_gap: (sol.objective - auction_objective) / sol.objective,
        kkt_residual: kkt_residual(&s.p, &s.lambda, &inst.channel, &inst.budgets),
        final_lambda: s.lambda.clone(),
        final_payoff: (0..k).map(|i| payoff(i, &s.p, &inst.channel, &s.lambda)).collect(),
        initial_power: initial.to_rows(),
        final_power: s.p.to_rows(),
        bid_consistency: check_bid_consistency(&sol, &inst.channel, &inst.budgets),
        oracle: sol.to_json(),
        record: rec,
    };
    Ok((inst, out))
}

/// Four-user toy run: topology and link lists, power tables, price and
/// payoff trace, and the oracle comparison.
pub fn cmd_toy4(cfg: &ScenarioConfig) -> Result<Toy4Outcome> {
    let cfg = ScenarioConfig {
        topology: TopologySource::Toy,
        ..cfg.clone()
    };
    cfg.validate()?;
    let dir = out_dir(&cfg)?;
    let (inst, out) = toy4_outcome(&cfg, 0)?;
    let p_bar = inst.budgets.p_bar();

    write_json(
        &dir.join("toy4_topology.json"),
        &TopologyFile {
            area_side: inst.topology.area_side(),
            nodes: inst.topology.node_positions(),
            destinations: inst.topology.destination_positions(),
            internode_gain: inst.channel.internode_gain().to_rows(),
            node_to_dest_gain: inst.channel.node_to_dest_gain().to_rows(),
            relay_threshold: RELAY_THRESHOLD,
            initial_links: active_links(&PowerMatrix::direct(p_bar), p_bar),
            final_links: active_links(&out.record.final_state.p, p_bar),
        },
    )?;

    let k = p_bar.len();
    let mut header = vec!["stage".to_string(), "node".to_string()];
    header.extend((1..=k).map(|i| format!("user_{i}")));
    let mut rows = Vec::new();
    for (stage, table) in [("initial", &out.initial_power), ("final", &out.final_power)] {
        for (j, row) in table.iter().enumerate() {
            let mut r = vec![stage.to_string(), (j + 1).to_string()];
            r.extend(row.iter().map(|&v| fmt_sig12(v)));
            rows.push(r);
        }
    }
    write_csv(&dir.join("toy4_power.csv"), &header, &rows)?;
    out.record.write_trace_csv(fs::File::create(dir.join("toy4_trace.csv"))?)?;
    write_json(&dir.join("toy4_summary.json"), &out)?;
    Ok(out)
}

fn record_for(inst: &Instance, rec: &RunRecord, oracle_objective: Option<f64>) -> RealizationRecord {
    RealizationRecord {
        index: inst.index,
        users: inst.budgets.num_users(),
        converged: rec.converged,
        iterations: rec.iterations_used,
        auction_objective: rec.objective(&inst.channel, &inst.budgets),
        oracle_objective,
        baseline_objective: baseline(inst),
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CdfOutcome {
    pub epsilon: f64,
    pub summary: ExperimentSummary,
    /// Per node, the convergence iteration of every converged realization,
    /// sorted ascending.
    pub node_iterations: Vec<Vec<usize>>,
}

fn eps_tag(eps: f64) -> String {
    format!("{eps:e}")
}

/// Convergence-iteration CDFs per node, one file per step size.
///
/// `cdf_eps_<eps>.csv` has one row per rank `r` of converged realizations:
/// `rank, fraction = r / N, node_1..node_K` where `node_j` is the `r`-th
/// smallest convergence iteration of node `j`.
pub fn cmd_cdf(cfg: &ScenarioConfig, steps: &[f64]) -> Result<Vec<CdfOutcome>> {
    cfg.validate()?;
    if steps.is_empty() || steps.iter().any(|&e| !(e > 0.0 && e.is_finite())) {
        return Err(invalid("steps", "need at least one positive step size"));
    }
    let dir = out_dir(cfg)?;
    let k = cfg.users();
    let mut outcomes = Vec::new();
    for &eps in steps {
        let mut c = cfg.clone();
        c.step.epsilon = eps;
        let runs: Vec<(RealizationRecord, Vec<usize>)> = (0..c.realizations as u64)
            .into_par_iter()
            .map(|idx| {
                let inst = c.instance(idx)?;
                let rec = run(&inst, &inst.schedule, inst.auction_seed, false)?;
                Ok((record_for(&inst, &rec, None), rec.node_convergence))
            })
            .collect::<Result<_>>()?;
        let mut node_iterations = vec![Vec::new(); k];
        for (r, nodes) in &runs {
            if r.converged {
                for (j, &t) in nodes.iter().enumerate() {
                    node_iterations[j].push(t);
                }
            }
        }
        node_iterations.iter_mut().for_each(|v| v.sort_unstable());
        let summary = ExperimentSummary::new(runs.into_iter().map(|(r, _)| r).collect());

        let mut header = vec!["rank".to_string(), "fraction".to_string()];
        header.extend((1..=k).map(|j| format!("node_{j}")));
        let n = c.realizations as f64;
        let rows: Vec<Vec<String>> = (0..summary.aggregates.converged)
            .map(|r| {
                let mut row = vec![(r + 1).to_string(), fmt_sig12((r + 1) as f64 / n)];
                row.extend(node_iterations.iter().map(|v| v[r].to_string()));
                row
            })
            .collect();
        write_csv(&dir.join(format!("cdf_eps_{}.csv", eps_tag(eps))), &header, &rows)?;
        outcomes.push(CdfOutcome {
            epsilon: eps,
            summary,
            node_iterations,
        });
    }
    write_json(&dir.join("cdf_summary.json"), &outcomes)?;
    Ok(outcomes)
}

#[derive(Debug, Clone, Serialize)]
pub struct AsyncOutcome {
    pub period: u32,
    pub converged: bool,
    pub iterations: usize,
    pub objective: f64,
    /// Relative objective difference to the first listed period.
    pub relative_difference: f64,
    pub final_lambda: Vec<f64>,
    #[serde(skip)]
    pub record: RunRecord,
}

/// Slows node `node` (0-based) to each listed update period on realization
/// 0 and compares convergence time and final objective.
pub fn cmd_async(cfg: &ScenarioConfig, periods: &[u32], node: usize) -> Result<Vec<AsyncOutcome>> {
    cfg.validate()?;
    if periods.is_empty() {
        return Err(invalid("periods", "need at least one period"));
    }
    let dir = out_dir(cfg)?;
    let inst = cfg.instance(0)?;
    let k = inst.budgets.num_users();
    let mut outcomes: Vec<AsyncOutcome> = periods
        .par_iter()
        .map(|&period| {
            let schedule = Schedule::with_slow_node(k, node, period)?;
            let rec = run(&inst, &schedule, inst.auction_seed, true)?;
            Ok(AsyncOutcome {
                period,
                converged: rec.converged,
                iterations: rec.iterations_used,
                objective: rec.objective(&inst.channel, &inst.budgets),
                relative_difference: 0.0,
                final_lambda: rec.final_state.lambda.clone(),
                record: rec,
            })
        })
        .collect::<Result<_>>()?;
    let reference = outcomes[0].objective;
    for o in &mut outcomes {
        o.relative_difference = (o.objective - reference) / reference;
    }

    let header: Vec<String> = ["period", "converged", "iterations", "objective", "relative_difference"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    let rows: Vec<Vec<String>> = outcomes
        .iter()
        .map(|o| {
            vec![
                o.period.to_string(),
                o.converged.to_string(),
                o.iterations.to_string(),
                fmt_sig12(o.objective),
                fmt_sig12(o.relative_difference),
            ]
        })
        .collect();
    write_csv(&dir.join("async.csv"), &header, &rows)?;
    for o in &outcomes {
        o.record
            .write_trace_csv(fs::File::create(dir.join(format!("async_trace_period_{}.csv", o.period)))?)?;
    }
    write_json(&dir.join("async_summary.json"), &outcomes)?;
    Ok(outcomes)
}

#[derive(Debug, Clone, Serialize)]
pub struct ThroughputOutcome {
    pub users: usize,
    pub budget_db: f64,
    pub summary: ExperimentSummary,
    /// Smallest `auction - baseline` over converged realizations.
    pub min_margin: Option<f64>,
}

/// Auction weighted sum-rate against direct transmission over random
/// topologies, for every (user count, budget) pair. Realization `i` uses the
/// same seed across budgets, so budget comparisons are matched.
pub fn cmd_throughput(cfg: &ScenarioConfig, users: &[usize], budgets_db: &[f64]) -> Result<Vec<ThroughputOutcome>> {
    cfg.validate()?;
    if users.is_empty() || budgets_db.is_empty() {
        return Err(invalid("users", "need at least one user count and budget"));
    }
    let dir = out_dir(cfg)?;
    let mut outcomes = Vec::new();
    for &k in users {
        for &db in budgets_db {
            let mut c = cfg.with_random_users(k);
            c.budget_db = BudgetDb::Uniform(db);
            c.validate()?;
            let records: Vec<RealizationRecord> = (0..c.realizations as u64)
                .into_par_iter()
                .map(|idx| {
                    let inst = c.instance(idx)?;
                    let rec = run(&inst, &inst.schedule, inst.auction_seed, false)?;
                    Ok(record_for(&inst, &rec, None))
                })
                .collect::<Result<_>>()?;
            let min_margin = records
                .iter()
                .filter(|r| r.converged)
                .map(|r| r.auction_objective - r.baseline_objective)
                .reduce(f64::min);
            outcomes.push(ThroughputOutcome {
                users: k,
                budget_db: db,
                summary: ExperimentSummary::new(records),
                min_margin,
            });
        }
    }

    let opt = |v: Option<f64>| v.map(fmt_sig12).unwrap_or_default();
    let header: Vec<String> = [
        "users",
        "budget_db",
        "realizations",
        "converged",
        "mean_auction",
        "mean_baseline",
        "relative_gain",
        "absolute_gain",
        "min_margin",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    let rows: Vec<Vec<String>> = outcomes
        .iter()
        .map(|o| {
            let a = &o.summary.aggregates;
            vec![
                o.users.to_string(),
                fmt_sig12(o.budget_db),
                a.realizations.to_string(),
                a.converged.to_string(),
                opt(a.mean_auction_objective),
                opt(a.mean_baseline_objective),
                opt(a.relative_gain),
                opt(a.absolute_gain),
                opt(o.min_margin),
            ]
        })
        .collect();
    write_csv(&dir.join("throughput.csv"), &header, &rows)?;
    write_json(&dir.join("throughput_summary.json"), &outcomes)?;
    Ok(outcomes)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerifyRecord {
    pub users: usize,
    pub index: u64,
    pub converged: bool,
    pub iterations: usize,
    pub auction_objective: f64,
    pub oracle_objective: f64,
    pub oracle_converged: bool,
    /// `(oracle - auction) / oracle`.
    pub relative_gap: f64,
    /// KKT residual of the auction's final allocation at its final prices.
    pub kkt_residual: f64,
    /// Objective from a second, independently seeded initial state.
    pub restart_objective: f64,
    pub restart_converged: bool,
    pub init_relative_difference: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct VerifyOutcome {
    pub users: usize,
    pub summary: ExperimentSummary,
    pub records: Vec<VerifyRecord>,
    /// Over converged runs; `None` when nothing converged.
    pub max_relative_gap: Option<f64>,
    pub max_kkt_residual: Option<f64>,
    pub max_init_relative_difference: Option<f64>,
    pub unconverged_fraction: f64,
}

/// Seed for the second initial state of a verification instance.
pub fn restart_seed(inst: &Instance) -> u64 {
    realization_seed(inst.auction_seed, 1)
}

pub fn verify_instance(inst: &Instance, cfg: &ScenarioConfig) -> Result<VerifyRecord> {
    let rec = run(inst, &inst.schedule, inst.auction_seed, false)?;
    let again = run(inst, &inst.schedule, restart_seed(inst), false)?;
    let sol = oracle(inst, cfg)?;
    let s = &rec.final_state;
    let a = rec.objective(&inst.channel, &inst.budgets);
    let b = again.objective(&inst.channel, &inst.budgets);
    Ok(VerifyRecord {
        users: inst.budgets.num_users(),
        index: inst.index,
        converged: rec.converged,
        iterations: rec.iterations_used,
        auction_objective: a,
        oracle_objective: sol.objective,
        oracle_converged: sol.converged,
        relative_gap: (sol.objective - a) / sol.objective,
        kkt_residual: kkt_residual(&s.p, &s.lambda, &inst.channel, &inst.budgets),
        restart_objective: b,
        restart_converged: again.converged,
        init_relative_difference: (a - b).abs() / a.abs().max(f64::MIN_POSITIVE),
    })
}

/// Auction against oracle on random instances for each user count.
pub fn cmd_verify(cfg: &ScenarioConfig, users: &[usize]) -> Result<Vec<VerifyOutcome>> {
    cfg.validate()?;
    if users.is_empty() {
        return Err(invalid("users", "need at least one user count"));
    }
    let dir = out_dir(cfg)?;
    let mut outcomes = Vec::new();
    for &k in users {
        let c = cfg.with_random_users(k);
        c.validate()?;
        let pairs: Vec<(VerifyRecord, RealizationRecord)> = (0..c.realizations as u64)
            .into_par_iter()
            .map(|idx| {
                let inst = c.instance(idx)?;
                let v = verify_instance(&inst, &c)?;
                let r = RealizationRecord {
                    index: idx,
                    users: k,
                    converged: v.converged,
                    iterations: v.iterations,
                    auction_objective: v.auction_objective,
                    oracle_objective: Some(v.oracle_objective),
                    baseline_objective: baseline(&inst),
                };
                Ok((v, r))
            })
            .collect::<Result<_>>()?;
        let (records, realizations): (Vec<_>, Vec<_>) = pairs.into_iter().unzip();
        let converged: Vec<&VerifyRecord> = records.iter().filter(|r| r.converged).collect();
        let max_of = |f: fn(&VerifyRecord) -> f64| converged.iter().map(|r| f(r)).reduce(f64::max);
        let both: Vec<&VerifyRecord> = converged.iter().copied().filter(|r| r.restart_converged).collect();
        outcomes.push(VerifyOutcome {
            users: k,
            max_relative_gap: max_of(|r| r.relative_gap.abs()),
            max_kkt_residual: max_of(|r| r.kkt_residual),
            max_init_relative_difference: both.iter().map(|r| r.init_relative_difference).reduce(f64::max),
            unconverged_fraction: (records.len() - converged.len()) as f64 / records.len() as f64,
            summary: ExperimentSummary::new(realizations),
            records,
        });
    }

    let header: Vec<String> = [
        "users",
        "index",
        "converged",
        "iterations",
        "auction_objective",
        "oracle_objective",
        "relative_gap",
        "kkt_residual",
        "restart_objective",
        "init_relative_difference",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    let rows: Vec<Vec<String>> = outcomes
        .iter()
        .flat_map(|o| &o.records)
        .map(|r| {
            vec![
                r.users.to_string(),
                r.index.to_string(),
                r.converged.to_string(),
                r.iterations.to_string(),
                fmt_sig12(r.auction_objective),
                fmt_sig12(r.oracle_objective),
                fmt_sig12(r.relative_gap),
                fmt_sig12(r.kkt_residual),
                fmt_sig12(r.restart_objective),
                fmt_sig12(r.init_relative_difference),
            ]
        })
        .collect();
    write_csv(&dir.join("verify_records.csv"), &header, &rows)?;
    write_json(&dir.join("verify_summary.json"), &outcomes)?;
    Ok(outcomes)
}
