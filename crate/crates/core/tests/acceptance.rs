//! Acceptance gate: one PASS/FAIL line per criterion, nonzero exit on any
//! failure.

use std::f64::consts::LN_2;
use std::fs;
use std::path::Path;
use std::process::{Command, ExitCode};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use coop_auction::auction::{lyapunov, Auction, RunRecord};
use coop_auction::experiments::{cmd_async, cmd_throughput, restart_seed, Instance, ScenarioConfig};
use coop_auction::oracle::{kkt_residual, solve_p1_with, OracleOptions, OracleSolution};
use coop_auction::rate::{marginal_values, rate_approx, rate_exact, rate_gradient, weighted_sum_rate};
use coop_auction::{Budgets, ChannelRealization, PowerMatrix, SquareMatrix, StepConfig};

/// Converged runs need at most about 3.5k iterations at epsilon = 1e-4;
/// runs still going at this cap are in a persistent price cycle.
const ITERATION_CAP: usize = 20_000;

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: String) -> Verdict {
    Verdict { pass, detail }
}

fn scenario(seed: u64, out: &Path) -> ScenarioConfig {
    let mut cfg = ScenarioConfig {
        seed,
        output_dir: out.to_path_buf(),
        ..ScenarioConfig::default()
    };
    cfg.step.epsilon = 1e-4;
    cfg.step.max_iterations = ITERATION_CAP;
    cfg
}

fn run(inst: &Instance, seed: u64) -> RunRecord {
    Auction::new(&inst.channel, &inst.budgets, &inst.step)
        .record_trace(false)
        .run(seed)
        .unwrap()
}

fn oracle(inst: &Instance) -> OracleSolution {
    let opts = OracleOptions {
        seed: inst.oracle_seed,
        ..OracleOptions::default()
    };
    solve_p1_with(&inst.channel, &inst.budgets, &opts).unwrap()
}

fn baseline(inst: &Instance) -> f64 {
    weighted_sum_rate(&PowerMatrix::direct(inst.budgets.p_bar()), &inst.channel, &inst.budgets)
}

/// Random instances with 2, 3 and 4 users, `n` in total.
fn mixed_instances(seed: u64, n: usize, out: &Path) -> Vec<Instance> {
    let base = scenario(seed, out);
    (0..n)
        .map(|m| {
            let k = 2 + m % 3;
            base.with_random_users(k).instance((m / 3) as u64).unwrap()
        })
        .collect()
}

fn random_channel(rng: &mut ChaCha8Rng, k: usize) -> ChannelRealization {
    let gain = |rng: &mut ChaCha8Rng| 10f64.powf(rng.random_range(-2.0..2.0));
    let f = SquareMatrix::from_fn(k, |i, j| if i == j { 0.0 } else { gain(rng) });
    let g = SquareMatrix::from_fn(k, |_, _| gain(rng));
    ChannelRealization::new(f, g).unwrap()
}

fn rows_to_power(rows: &[Vec<f64>]) -> PowerMatrix {
    PowerMatrix::from_rows(rows.to_vec()).unwrap()
}

/// Feasible matrix: each row a random point of the capped simplex, with
/// some entries exactly zero.
fn random_feasible(rng: &mut ChaCha8Rng, p_bar: &[f64]) -> Vec<Vec<f64>> {
    p_bar
        .iter()
        .map(|&cap| {
            let raw: Vec<f64> = p_bar
                .iter()
                .map(|_| if rng.random_bool(0.2) { 0.0 } else { -rng.random::<f64>().max(1e-300).ln() })
                .collect();
            let total: f64 = raw.iter().sum();
            let fill = cap * rng.random::<f64>();
            raw.iter().map(|&r| if total > 0.0 { r / total * fill } else { 0.0 }).collect()
        })
        .collect()
}

struct SweepRun {
    converged: bool,
    objective: f64,
    row_sums: Vec<f64>,
    lambda: Vec<f64>,
    p_bar: Vec<f64>,
}

impl SweepRun {
    fn new(inst: &Instance, rec: &RunRecord) -> Self {
        let s = &rec.final_state;
        Self {
            converged: rec.converged,
            objective: rec.objective(&inst.channel, &inst.budgets),
            row_sums: (0..s.lambda.len()).map(|j| s.p.row_sum(j)).collect(),
            lambda: s.lambda.clone(),
            p_bar: inst.budgets.p_bar().to_vec(),
        }
    }
}

fn oracle_equivalence(tmp: &Path, runs: &mut Vec<SweepRun>) -> Verdict {
    let start = Instant::now();
    let instances = mixed_instances(101, 100, tmp);
    let rows: Vec<(SweepRun, f64, f64)> = instances
        .par_iter()
        .map(|inst| {
            let rec = run(inst, inst.auction_seed);
            let sol = oracle(inst);
            let s = &rec.final_state;
            let a = rec.objective(&inst.channel, &inst.budgets);
            let gap = (sol.objective - a).abs() / sol.objective;
            let kkt = kkt_residual(&s.p, &s.lambda, &inst.channel, &inst.budgets);
            (SweepRun::new(inst, &rec), gap, kkt)
        })
        .collect();
    let elapsed = start.elapsed().as_secs_f64();
    let done: Vec<&(SweepRun, f64, f64)> = rows.iter().filter(|r| r.0.converged).collect();
    let max_gap = done.iter().map(|r| r.1).fold(0.0, f64::max);
    let max_kkt = done.iter().map(|r| r.2).fold(0.0, f64::max);
    let pass = !done.is_empty() && max_gap < 1e-3 && max_kkt < 1e-4 && elapsed < 120.0;
    let detail = format!(
        "converged {}/{}, max relative gap {max_gap:.2e}, max KKT residual {max_kkt:.2e}, {elapsed:.1} s",
        done.len(),
        rows.len()
    );
    runs.extend(rows.into_iter().map(|r| r.0));
    verdict(pass, detail)
}

/// Test-side model of one user's rate: the direct part `p_ii g_ii` and the
/// relay terms of the concave bound, from a power column.
fn snr_parts(user: usize, col: &[f64], ch: &ChannelRealization) -> (f64, Vec<f64>) {
    let own = col[user];
    let terms = (0..col.len())
        .map(|j| {
            let (x, y) = (own * ch.internode(user, j), col[j] * ch.node_to_dest(j, user));
            if j == user || x + y == 0.0 {
                0.0
            } else {
                x * y / (x + y)
            }
        })
        .collect();
    (own * ch.node_to_dest(user, user), terms)
}

/// `R(b) - R(a)` for two columns. The change in the SNR is summed term by
/// term and passed through `ln_1p`, so tiny differences do not cancel
/// against the full rate.
fn rate_difference(user: usize, a: &[f64], b: &[f64], ch: &ChannelRealization) -> f64 {
    let (ca, ta) = snr_parts(user, a, ch);
    let (cb, tb) = snr_parts(user, b, ch);
    let d_a = 1.0 + ca + ta.iter().sum::<f64>();
    let change = (cb - ca) + tb.iter().zip(&ta).map(|(x, y)| x - y).sum::<f64>();
    0.5 / LN_2 * (change / d_a).ln_1p()
}

fn gradient_correctness() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let mut worst_interior: f64 = 0.0;
    let mut worst_boundary: f64 = 0.0;
    let mut worst_model: f64 = 0.0;
    let rel = |a: f64, b: f64| (a - b).abs() / b.abs().max(1e-300);
    let column = |rows: &[Vec<f64>], user: usize| -> Vec<f64> { rows.iter().map(|r| r[user]).collect() };
    let shifted = |col: &[f64], j: usize, s: f64| -> Vec<f64> {
        let mut c = col.to_vec();
        c[j] = s;
        c
    };
    let mut check_model = |user: usize, rows: &[Vec<f64>], ch: &ChannelRealization| {
        let (c, t) = snr_parts(user, &column(rows, user), ch);
        let model = 0.5 * (1.0 + c + t.iter().sum::<f64>()).log2();
        worst_model = worst_model.max(rel(model, rate_approx(user, &rows_to_power(rows), ch)));
    };

    for _ in 0..1000 {
        let k = rng.random_range(2..=5);
        let ch = random_channel(&mut rng, k);
        let user = rng.random_range(0..k);
        let rows: Vec<Vec<f64>> = (0..k).map(|_| (0..k).map(|_| rng.random_range(0.1..10.0)).collect()).collect();
        check_model(user, &rows, &ch);
        let col = column(&rows, user);
        let g = rate_gradient(user, &rows_to_power(&rows), &ch);
        for j in 0..k {
            let h = 1e-5 * col[j];
            let fd = rate_difference(user, &shifted(&col, j, col[j] - h), &shifted(&col, j, col[j] + h), &ch) / (2.0 * h);
            let analytic = if j == user { g.d_own } else { g.d_relay[j] };
            worst_interior = worst_interior.max(rel(fd, analytic));
        }
    }

    // Points with zero own power, zero relay powers or both; every zero
    // coordinate is checked with a second-order forward difference.
    for n in 0..1000 {
        let k = rng.random_range(2..=5);
        let ch = random_channel(&mut rng, k);
        let user = rng.random_range(0..k);
        let mut rows: Vec<Vec<f64>> = (0..k).map(|_| (0..k).map(|_| rng.random_range(0.1..10.0)).collect()).collect();
        if n % 3 != 1 {
            rows[user][user] = 0.0;
        }
        for j in (0..k).filter(|&j| j != user) {
            if n % 3 != 0 && rng.random_bool(0.5) {
                rows[j][user] = 0.0;
            }
        }
        check_model(user, &rows, &ch);
        let col = column(&rows, user);
        let g = rate_gradient(user, &rows_to_power(&rows), &ch);
        for j in (0..k).filter(|&j| col[j] == 0.0) {
            // Relay terms bend on the scale y/f, which can be tiny; the
            // term-wise difference has no cancellation, so h can be too.
            let h = 1e-10;
            let fd = (4.0 * rate_difference(user, &col, &shifted(&col, j, h), &ch)
                - rate_difference(user, &col, &shifted(&col, j, 2.0 * h), &ch))
                / (2.0 * h);
            let analytic = if j == user { g.d_own } else { g.d_relay[j] };
            worst_boundary = worst_boundary.max(if analytic == 0.0 { fd.abs() } else { rel(fd, analytic) });
        }
    }
    verdict(
        worst_interior < 1e-5 && worst_boundary < 1e-5 && worst_model < 1e-13,
        format!(
            "max relative error interior {worst_interior:.2e}, boundary {worst_boundary:.2e} \
             (difference model vs library rate {worst_model:.1e})"
        ),
    )
}

fn concavity_and_bound() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let mut worst_concavity: f64 = f64::NEG_INFINITY;
    let mut worst_bound: f64 = f64::NEG_INFINITY;
    let point = |rng: &mut ChaCha8Rng, k: usize| -> Vec<Vec<f64>> {
        (0..k)
            .map(|_| (0..k).map(|_| if rng.random_bool(0.15) { 0.0 } else { rng.random_range(0.0..10.0) }).collect())
            .collect()
    };
    for _ in 0..10_000 {
        let k = rng.random_range(2..=5);
        let ch = random_channel(&mut rng, k);
        let user = rng.random_range(0..k);
        let a = point(&mut rng, k);
        let b = point(&mut rng, k);
        let theta: f64 = rng.random();
        let mix: Vec<Vec<f64>> = a
            .iter()
            .zip(&b)
            .map(|(ra, rb)| ra.iter().zip(rb).map(|(x, y)| theta * x + (1.0 - theta) * y).collect())
            .collect();
        let ra = rate_approx(user, &rows_to_power(&a), &ch);
        let rb = rate_approx(user, &rows_to_power(&b), &ch);
        let rm = rate_approx(user, &rows_to_power(&mix), &ch);
        worst_concavity = worst_concavity.max(theta * ra + (1.0 - theta) * rb - rm);
    }
    for _ in 0..10_000 {
        let k = rng.random_range(2..=5);
        let ch = random_channel(&mut rng, k);
        let user = rng.random_range(0..k);
        let p = rows_to_power(&point(&mut rng, k));
        worst_bound = worst_bound.max(rate_exact(user, &p, &ch) - rate_approx(user, &p, &ch));
    }
    verdict(
        worst_concavity <= 1e-12 && worst_bound <= 0.0,
        format!("max chord excess {worst_concavity:.2e}, max exact - approx {worst_bound:.2e}"),
    )
}

fn single_user() -> Verdict {
    let ch = ChannelRealization::new(SquareMatrix::zeros(1), SquareMatrix::from_diagonal(&[1.0])).unwrap();
    let budgets = Budgets::uniform(1, 10.0).unwrap();
    let cfg = StepConfig {
        convergence_tol: 1e-9,
        ..StepConfig::new(1)
    };
    let rec = Auction::new(&ch, &budgets, &cfg).record_trace(false).run(4).unwrap();
    let p = rec.final_state.p.row_sum(0);
    let lambda = rec.final_state.lambda[0];
    let dp = (p - 10.0).abs();
    let dl = (lambda - 1.0 / (22.0 * LN_2)).abs();
    verdict(
        rec.converged && dp < 1e-6 && dl < 1e-6,
        format!("|p - 10| = {dp:.2e}, |lambda - lambda*| = {dl:.2e}, {} iterations", rec.iterations_used),
    )
}

fn feasibility_and_slackness(runs: &[SweepRun], price_floor: f64, delta: f64) -> Verdict {
    let mut over: f64 = f64::NEG_INFINITY;
    let mut slack: f64 = 0.0;
    let mut checked = 0;
    for r in runs.iter().filter(|r| r.converged) {
        checked += 1;
        for j in 0..r.p_bar.len() {
            over = over.max(r.row_sums[j] - r.p_bar[j]);
            if r.lambda[j] > price_floor + delta {
                slack = slack.max((r.row_sums[j] - r.p_bar[j]).abs());
            }
        }
    }
    verdict(
        checked > 0 && over <= 1e-6 && slack < 1e-5,
        format!("{checked} converged runs, max row sum - budget {over:.2e}, max priced-row slack {slack:.2e}"),
    )
}

fn baseline_dominance(tmp: &Path, runs: &mut Vec<SweepRun>) -> Verdict {
    let cfg = scenario(1, tmp);
    let toy: Vec<(SweepRun, f64)> = (0..100u64)
        .into_par_iter()
        .map(|idx| {
            let inst = cfg.instance(idx).unwrap();
            let rec = run(&inst, inst.auction_seed);
            (SweepRun::new(&inst, &rec), baseline(&inst))
        })
        .collect();
    let converged = toy.iter().filter(|r| r.0.converged).count();
    let min_margin = toy
        .iter()
        .filter(|r| r.0.converged)
        .map(|r| r.0.objective - r.1)
        .fold(f64::INFINITY, f64::min);
    let dominates = converged > 0 && min_margin >= 0.0;

    let users: Vec<usize> = (2..=8).collect();
    // The gain trend is a statistical claim; 200 topologies per user count
    // keep sampling noise below the spacing between neighbouring counts.
    let trend_cfg = ScenarioConfig {
        realizations: 200,
        ..cfg.clone()
    };
    let sweep = cmd_throughput(&trend_cfg, &users, &[10.0]).unwrap();
    let gains: Vec<f64> = sweep.iter().map(|o| o.summary.aggregates.relative_gain.unwrap_or(f64::NAN)).collect();
    let increasing = gains.windows(2).all(|w| w[1] > w[0]) && gains[0] > 0.0;
    runs.extend(toy.into_iter().map(|r| r.0));
    verdict(
        dominates && increasing,
        format!(
            "toy converged {}/100, min margin {min_margin:.3e}; gain by K=2..8 [{}]",
            converged,
            gains.iter().map(|g| format!("{g:.4}")).collect::<Vec<_>>().join(", ")
        ),
    )
}

fn async_robustness(tmp: &Path) -> Verdict {
    let cfg = ScenarioConfig {
        output_dir: tmp.to_path_buf(),
        ..ScenarioConfig::default()
    };
    let out = cmd_async(&cfg, &[1, 4, 20], 3).unwrap();
    let reference = out[0].objective;
    let spread = out.iter().map(|o| (o.objective - reference).abs() / reference).fold(0.0, f64::max);
    let iterations: Vec<usize> = out.iter().map(|o| o.iterations).collect();
    let converged = out.iter().all(|o| o.converged);
    verdict(
        converged && spread < 1e-4 && iterations.windows(2).all(|w| w[1] > w[0]),
        format!("iterations {iterations:?}, max relative objective difference {spread:.2e}"),
    )
}

fn initialization_independence(tmp: &Path) -> Verdict {
    let instances = mixed_instances(808, 50, tmp);
    let pairs: Vec<(bool, f64)> = instances
        .par_iter()
        .map(|inst| {
            let a = run(inst, inst.auction_seed);
            let b = run(inst, restart_seed(inst));
            let (oa, ob) = (a.objective(&inst.channel, &inst.budgets), b.objective(&inst.channel, &inst.budgets));
            (a.converged && b.converged, (oa - ob).abs() / oa.abs())
        })
        .collect();
    let compared: Vec<f64> = pairs.iter().filter(|p| p.0).map(|p| p.1).collect();
    let worst = compared.iter().copied().fold(0.0, f64::max);
    verdict(
        !compared.is_empty() && worst < 1e-4,
        format!(
            "{}/50 instances with both runs converged, max relative difference {worst:.2e}",
            compared.len()
        ),
    )
}

fn lyapunov_monotone() -> Verdict {
    let mut cfg = ScenarioConfig::default();
    cfg.step.epsilon = 1e-5;
    let inst = cfg.instance(0).unwrap();
    let sol = oracle(&inst);
    let rec = Auction::new(&inst.channel, &inst.budgets, &inst.step).run(inst.auction_seed).unwrap();
    let v: Vec<f64> = rec.trace.iter().map(|row| lyapunov(&row.lambda, &sol.lambda_star)).collect();
    let worst = v.windows(2).map(|w| w[1] - w[0]).fold(f64::NEG_INFINITY, f64::max);
    verdict(
        rec.converged && worst <= 1e-10,
        format!("{} iterations, max increase {worst:.2e}, final V {:.2e}", v.len(), v.last().unwrap_or(&f64::NAN)),
    )
}

fn monotone_gradient(tmp: &Path) -> Verdict {
    let mut instances = vec![ScenarioConfig::default().instance(0).unwrap()];
    instances.extend(mixed_instances(1010, 4, tmp));
    let mut rng = ChaCha8Rng::seed_from_u64(1010);
    let mut worst: f64 = f64::NEG_INFINITY;
    for inst in &instances {
        let sol = oracle(inst);
        let m_star = marginal_values(&sol.p_star, &inst.channel, &inst.budgets);
        for _ in 0..200 {
            let p = rows_to_power(&random_feasible(&mut rng, inst.budgets.p_bar()));
            let m = marginal_values(&p, &inst.channel, &inst.budgets);
            let inner: f64 = m
                .iter_entries()
                .map(|(j, i, v)| (v - m_star[(j, i)]) * (p.as_matrix()[(j, i)] - sol.p_star.as_matrix()[(j, i)]))
                .sum();
            worst = worst.max(inner);
        }
    }
    verdict(worst <= 1e-10, format!("1000 points on 5 instances, max inner product {worst:.3e}"))
}

fn cli_outputs(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<(String, Vec<u8>)> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let path = e.unwrap().path();
            (path.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&path).unwrap())
        })
        .collect();
    files.sort();
    files
}

fn determinism(tmp: &Path) -> Verdict {
    let bin = env!("CARGO_BIN_EXE_coop-auction");
    let commands: [&[&str]; 5] = [
        &["toy4"],
        &["cdf", "--steps", "1e-4", "--realizations", "3"],
        &["async", "--periods", "1,4"],
        &["throughput", "--users", "2,3", "--realizations", "3"],
        &["verify", "--users", "2", "--realizations", "3"],
    ];
    let mut failures = Vec::new();
    for args in commands {
        let mut outputs = Vec::new();
        for attempt in 0..2 {
            let out = tmp.join(format!("{}_{attempt}", args[0]));
            let result = Command::new(bin)
                .args(args)
                .args(["--seed", "5", "--out"])
                .arg(&out)
                .output()
                .unwrap();
            outputs.push((result.status.success(), result.stdout, cli_outputs(&out)));
        }
        let (a, b) = (&outputs[0], &outputs[1]);
        if !(a.0 && b.0 && a.1 == b.1 && a.2 == b.2 && !a.2.is_empty()) {
            failures.push(args[0]);
        }
    }
    verdict(
        failures.is_empty(),
        if failures.is_empty() {
            "toy4, cdf, async, throughput, verify outputs byte-identical across repeats".into()
        } else {
            format!("differing or failing commands: {failures:?}")
        },
    )
}

/// Criteria to run: numbers given on the command line, or all of them.
/// Criterion 5 reuses the runs of 1 and 6, which it triggers itself.
fn selected() -> Vec<u32> {
    let picked: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    if picked.is_empty() {
        (1..=11).collect()
    } else {
        picked
    }
}

fn main() -> ExitCode {
    let tmp = tempfile::tempdir().unwrap();
    let path = tmp.path();
    let step = StepConfig::new(1);
    let want = selected();
    let wants = |n: u32| want.contains(&n);
    let mut runs = Vec::new();

    let mut results: Vec<(&str, Verdict)> = Vec::new();
    let mut record = |name, v: Verdict| {
        println!("{} [{name}] {}", if v.pass { "PASS" } else { "FAIL" }, v.detail);
        results.push((name, v));
    };
    if wants(1) || wants(5) {
        record("1 oracle equivalence", oracle_equivalence(&path.join("c1"), &mut runs));
    }
    if wants(2) {
        record("2 gradient correctness", gradient_correctness());
    }
    if wants(3) {
        record("3 concavity and bound", concavity_and_bound());
    }
    if wants(4) {
        record("4 single user", single_user());
    }
    if wants(6) || wants(5) {
        record("6 baseline dominance", baseline_dominance(&path.join("c6"), &mut runs));
    }
    if wants(5) {
        record("5 feasibility and slackness", feasibility_and_slackness(&runs, step.price_floor, step.convergence_tol));
    }
    if wants(7) {
        record("7 asynchronous robustness", async_robustness(&path.join("c7")));
    }
    if wants(8) {
        record("8 initialization independence", initialization_independence(&path.join("c8")));
    }
    if wants(9) {
        record("9 lyapunov monotonicity", lyapunov_monotone());
    }
    if wants(10) {
        record("10 monotone gradient", monotone_gradient(&path.join("c10")));
    }
    if wants(11) {
        record("11 determinism", determinism(&path.join("c11")));
    }

    let failed = results.iter().filter(|r| !r.1.pass).count();
    println!("{} of {} criteria passed", results.len() - failed, results.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
