//! Centralized solver for the weighted sum-rate problem
//!
//! ```text
//! maximize   sum_i w_i R_i(p)
//! subject to sum_i p_{j,i} <= pbar_j,  p >= 0
//! ```
//!
//! used as ground truth for auction outcomes. The objective is concave and
//! the feasible set is a product of capped simplices (one per row), so
//! projected-gradient ascent with an exact row projection converges to the
//! global optimum. Multipliers are recovered from stationarity.
//!
//! A user whose own power reaches zero sits on a kink of its relay terms,
//! where the projected gradient can stall short of the optimum. Each such
//! column is certified with the exact one-sided ascent rate, and the ascent
//! is restarted along the escape direction when the certificate fails.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::channel::ChannelRealization;
use crate::error::{invalid, Error, Result};
use crate::matrix::{PowerMatrix, SquareMatrix};
use crate::rate::{marginal_values, weighted_sum_rate, zero_own_ascent, Budgets};
use crate::seed::{rng_from_seed, stream_seed, Stream};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    ProjectedGradient,
    GridSearch,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepRule {
    /// Barzilai-Borwein step with a monotone Armijo backtrack.
    #[default]
    Spectral,
    /// `eta_t = eta_0 / sqrt(t)` with `eta_0 = 0.1 min(pbar)`.
    Diminishing,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleOptions {
    /// Target KKT residual.
    pub tol: f64,
    /// Iteration cap per start.
    pub max_iterations: usize,
    pub step_rule: StepRule,
    /// Seed for the random feasible start.
    pub seed: u64,
    /// Keep the objective after every iteration of the winning start.
    pub record_history: bool,
}

impl Default for OracleOptions {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_iterations: 200_000,
            step_rule: StepRule::Spectral,
            seed: 0,
            record_history: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleSolution {
    pub p_star: PowerMatrix,
    pub lambda_star: Vec<f64>,
    pub objective: f64,
    pub kkt_residual: f64,
    pub method: Method,
    pub iterations: usize,
    /// `kkt_residual < tol` for projected gradient; always true for the grid.
    pub converged: bool,
    /// Largest objective difference between the independent starts.
    pub start_spread: f64,
    /// Objective of the winning start at its initial point, after each
    /// accepted step and after each kink escape; empty unless requested.
    pub objective_history: Vec<f64>,
}

#[derive(Serialize)]
struct OracleRecord<'a> {
    p_star: Vec<Vec<f64>>,
    lambda_star: &'a [f64],
    objective: f64,
    residual: f64,
    method: Method,
    iterations: usize,
    converged: bool,
}

impl OracleSolution {
    /// JSON object with `p_star` (row-major), `lambda_star`, `objective`,
    /// `residual`, `method`, `iterations` and `converged`.
    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(OracleRecord {
            p_star: self.p_star.to_rows(),
            lambda_star: &self.lambda_star,
            objective: self.objective,
            residual: self.kkt_residual,
            method: self.method,
            iterations: self.iterations,
            converged: self.converged,
        })
        .expect("oracle record serializes")
    }
}

fn check_dims(ch: &ChannelRealization, budgets: &Budgets) -> Result<usize> {
    let k = ch.num_users();
    if budgets.num_users() != k {
        return Err(Error::DimensionMismatch {
            expected: k,
            found: budgets.num_users(),
        });
    }
    Ok(k)
}

/// Euclidean projection of `x` onto `{y >= 0, sum y <= cap}`.
pub fn project_capped_simplex(x: &mut [f64], cap: f64) {
    let clipped: f64 = x.iter().map(|v| v.max(0.0)).sum();
    if clipped <= cap {
        x.iter_mut().for_each(|v| *v = v.max(0.0));
        return;
    }
    let mut u = x.to_vec();
    u.sort_by(|a, b| b.total_cmp(a));
    let mut cumsum = 0.0;
    let mut theta = 0.0;
    for (idx, &uj) in u.iter().enumerate() {
        cumsum += uj;
        let t = (cumsum - cap) / (idx + 1) as f64;
        if uj - t > 0.0 {
            theta = t;
        }
    }
    x.iter_mut().for_each(|v| *v = (*v - theta).max(0.0));
}

fn project_rows(p: &mut SquareMatrix, p_bar: &[f64]) {
    for (j, &cap) in p_bar.iter().enumerate() {
        project_capped_simplex(p.row_mut(j), cap);
    }
}

fn is_active(row_sum: f64, cap: f64) -> bool {
    cap - row_sum <= 1e-9 * cap.max(1.0)
}

/// `lambda_j = max_i w_i dR_i/dp_{j,i}` for rows whose budget is used up,
/// zero for rows with slack.
pub fn recover_duals(p: &PowerMatrix, ch: &ChannelRealization, budgets: &Budgets) -> Vec<f64> {
    let m = marginal_values(p, ch, budgets);
    dual_from_marginals(p, &m, budgets.p_bar())
}

fn dual_from_marginals(p: &PowerMatrix, m: &SquareMatrix, p_bar: &[f64]) -> Vec<f64> {
    (0..p.dim())
        .map(|j| {
            if is_active(p.row_sum(j), p_bar[j]) {
                m.row(j).iter().cloned().fold(0.0, f64::max)
            } else {
                0.0
            }
        })
        .collect()
}

/// Largest violation among stationarity (`|w_i R'_i - lambda_j|` where
/// `p_{j,i} > 0`, `max(0, w_i R'_i - lambda_j)` where `p_{j,i} = 0`),
/// primal feasibility and complementary slackness `|lambda_j (sum_i p_{j,i} - pbar_j)|`.
pub fn kkt_residual(p: &PowerMatrix, lambda: &[f64], ch: &ChannelRealization, budgets: &Budgets) -> f64 {
    let m = marginal_values(p, ch, budgets);
    residual_from_marginals(p, &m, lambda, budgets.p_bar())
}

fn residual_from_marginals(p: &PowerMatrix, m: &SquareMatrix, lambda: &[f64], p_bar: &[f64]) -> f64 {
    let mut worst: f64 = 0.0;
    for j in 0..p.dim() {
        for i in 0..p.dim() {
            let gap = m[(j, i)] - lambda[j];
            worst = worst.max(if p[(j, i)] > 0.0 { gap.abs() } else { gap.max(0.0) });
        }
        let excess = p.row_sum(j) - p_bar[j];
        worst = worst.max(excess.max(0.0)).max((lambda[j] * excess).abs());
    }
    worst
}

struct Run {
    p: PowerMatrix,
    objective: f64,
    residual: f64,
    iterations: usize,
    history: Vec<f64>,
}

fn ascend(
    start: SquareMatrix,
    ch: &ChannelRealization,
    budgets: &Budgets,
    opts: &OracleOptions,
) -> Run {
    let p_bar = budgets.p_bar();
    let k = start.dim();
    let mut p = start;
    project_rows(&mut p, p_bar);
    let mut p = PowerMatrix::new(p).expect("projection yields a nonnegative matrix");
    let mut m = marginal_values(&p, ch, budgets);
    let mut f = weighted_sum_rate(&p, ch, budgets);
    let mut residual = residual_from_marginals(&p, &m, &dual_from_marginals(&p, &m, p_bar), p_bar);
    let mut best = (p.clone(), f, residual);
    let mut history = Vec::new();
    if opts.record_history {
        history.push(f);
    }

    let eta0 = 0.1 * p_bar.iter().cloned().fold(f64::INFINITY, f64::min);
    let mut alpha = 1.0;
    let mut iterations = 0;
    while iterations < opts.max_iterations && residual >= opts.tol {
        iterations += 1;
        let next = match opts.step_rule {
            StepRule::Diminishing => {
                let eta = eta0 / (iterations as f64).sqrt();
                let mut q = SquareMatrix::from_fn(k, |j, i| p[(j, i)] + eta * m[(j, i)]);
                project_rows(&mut q, p_bar);
                q
            }
            StepRule::Spectral => {
                let mut target = SquareMatrix::from_fn(k, |j, i| p[(j, i)] + alpha * m[(j, i)]);
                project_rows(&mut target, p_bar);
                let dir = SquareMatrix::from_fn(k, |j, i| target[(j, i)] - p[(j, i)]);
                let slope: f64 = dir.as_slice().iter().zip(m.as_slice()).map(|(d, g)| d * g).sum();
                if !(slope > 0.0) {
                    break;
                }
                let mut t = 1.0;
                let mut accepted = None;
                while t > 1e-20 {
                    let q = SquareMatrix::from_fn(k, |j, i| (p[(j, i)] + t * dir[(j, i)]).max(0.0));
                    let qp = PowerMatrix::new(q.clone()).expect("nonnegative");
                    let fq = weighted_sum_rate(&qp, ch, budgets);
                    if fq >= f + 1e-4 * t * slope {
                        accepted = Some(q);
                        break;
                    }
                    // Once objective differences drop below rounding, fall
                    // back on concavity: a positive slope at q along the
                    // step means f(q) > f(p). Only valid where the gradient
                    // is a supergradient, i.e. away from zero own power.
                    let smooth = (0..k).all(|i| q[(i, i)] > 0.0);
                    if smooth && (fq - f).abs() <= 64.0 * f64::EPSILON * f.abs().max(1.0) {
                        let mq = marginal_values(&qp, ch, budgets);
                        let slope_q: f64 = dir.as_slice().iter().zip(mq.as_slice()).map(|(d, g)| d * g).sum();
                        if slope_q > 0.0 {
                            accepted = Some(q);
                            break;
                        }
                    }
                    t *= 0.5;
                }
                match accepted {
                    Some(q) => q,
                    // The spectral step overshot into a region the
                    // backtrack cannot repair; retry with a shorter one.
                    None if alpha > 1e-10 => {
                        alpha *= 1e-3;
                        continue;
                    }
                    None => break,
                }
            }
        };
        let q = PowerMatrix::new(next).expect("projection yields a nonnegative matrix");
        let mq = marginal_values(&q, ch, budgets);
        if opts.step_rule == StepRule::Spectral {
            let (mut ss, mut sy) = (0.0, 0.0);
            for ((qa, pa), (ga, gb)) in q
                .as_slice()
                .iter()
                .zip(p.as_slice())
                .zip(mq.as_slice().iter().zip(m.as_slice()))
            {
                let s = qa - pa;
                ss += s * s;
                sy += s * (ga - gb);
            }
            alpha = if sy < 0.0 { (ss / -sy).clamp(1e-12, 1e12) } else { 1e12 };
        }
        p = q;
        m = mq;
        f = weighted_sum_rate(&p, ch, budgets);
        residual = residual_from_marginals(&p, &m, &dual_from_marginals(&p, &m, p_bar), p_bar);
        if opts.record_history {
            history.push(f);
        }
        if f > best.1 || (f == best.1 && residual < best.2) {
            best = (p.clone(), f, residual);
        }
    }
    // For the monotone rule the last iterate is the best; for diminishing
    // steps keep the best objective seen.
    let (p, objective, residual) = match opts.step_rule {
        StepRule::Spectral => (p, f, residual),
        StepRule::Diminishing => best,
    };
    Run {
        p,
        objective,
        residual,
        iterations,
        history,
    }
}

/// Ascent plus kink certification: a column with zero own power whose
/// escape rate exceeds `tol` is pushed along its escape direction and the
/// ascent resumes.
fn ascend_certified(
    start: SquareMatrix,
    ch: &ChannelRealization,
    budgets: &Budgets,
    opts: &OracleOptions,
) -> Run {
    let p_bar = budgets.p_bar();
    let k = start.dim();
    let mut run = ascend(start, ch, budgets, opts);
    let mut iterations = run.iterations;
    for _ in 0..2 * k {
        let lambda = recover_duals(&run.p, ch, budgets);
        let free = vec![false; k];
        let escape = (0..k)
            .filter(|&i| run.p[(i, i)] == 0.0)
            .map(|i| {
                let (rate, dir) = zero_own_ascent(i, &run.p.column(i), ch, budgets.weights()[i], &lambda, &free);
                (i, rate, dir)
            })
            .filter(|(_, rate, _)| *rate > opts.tol)
            .max_by(|a, b| a.1.total_cmp(&b.1));
        let Some((i, _, dir)) = escape else { break };
        let mut t = p_bar[i];
        let mut next = None;
        while t > 1e-12 * p_bar[i] {
            let mut q = run.p.as_matrix().clone();
            for (j, d) in dir.iter().enumerate() {
                q[(j, i)] += t * d;
            }
            project_rows(&mut q, p_bar);
            let fq = weighted_sum_rate(&PowerMatrix::new(q.clone()).expect("nonnegative"), ch, budgets);
            if fq > run.objective {
                next = Some(q);
                break;
            }
            t *= 0.5;
        }
        let Some(q) = next else { break };
        let mut history = std::mem::take(&mut run.history);
        run = ascend(q, ch, budgets, opts);
        history.append(&mut run.history);
        run.history = history;
        iterations += run.iterations;
    }
    run.iterations = iterations;
    run
}

fn starts(budgets: &Budgets, seed: u64) -> [SquareMatrix; 3] {
    let p_bar = budgets.p_bar();
    let k = p_bar.len();
    let mut rng = rng_from_seed(stream_seed(seed, Stream::OracleStart));
    let diagonal = SquareMatrix::from_diagonal(p_bar);
    let uniform = SquareMatrix::from_fn(k, |j, _| p_bar[j] / k as f64);
    let random = SquareMatrix::from_fn(k, |j, _| 2.0 * rng.random::<f64>() * p_bar[j] / k as f64);
    [diagonal, uniform, random]
}

/// Projected-gradient solve with default options and the given KKT tolerance.
pub fn solve_p1(ch: &ChannelRealization, budgets: &Budgets, tol: f64) -> Result<OracleSolution> {
    solve_p1_with(
        ch,
        budgets,
        &OracleOptions {
            tol,
            ..OracleOptions::default()
        },
    )
}

/// Runs projected-gradient ascent from the direct-transmission point, the
/// uniform split and a seeded random feasible point, and returns the best.
pub fn solve_p1_with(ch: &ChannelRealization, budgets: &Budgets, opts: &OracleOptions) -> Result<OracleSolution> {
    check_dims(ch, budgets)?;
    if !(opts.tol > 0.0) {
        return Err(invalid("tol", "must be positive"));
    }
    let runs: Vec<Run> = starts(budgets, opts.seed)
        .into_iter()
        .map(|s| ascend_certified(s, ch, budgets, opts))
        .collect();
    let lo = runs.iter().map(|r| r.objective).fold(f64::INFINITY, f64::min);
    let hi = runs.iter().map(|r| r.objective).fold(f64::NEG_INFINITY, f64::max);
    let best = runs
        .into_iter()
        .reduce(|a, b| if b.objective > a.objective { b } else { a })
        .expect("three starts");
    let lambda_star = recover_duals(&best.p, ch, budgets);
    Ok(OracleSolution {
        lambda_star,
        objective: best.objective,
        kkt_residual: best.residual,
        method: Method::ProjectedGradient,
        iterations: best.iterations,
        converged: best.residual < opts.tol,
        start_spread: hi - lo,
        objective_history: best.history,
        p_star: best.p,
    })
}

/// All `m` in `N^k` with `sum m <= n`, in lexicographic order.
fn compositions(k: usize, n: usize) -> Vec<Vec<usize>> {
    fn rec(prefix: &mut Vec<usize>, k: usize, left: usize, out: &mut Vec<Vec<usize>>) {
        if prefix.len() == k {
            out.push(prefix.clone());
            return;
        }
        for m in 0..=left {
            prefix.push(m);
            rec(prefix, k, left - m, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    rec(&mut Vec::with_capacity(k), k, n, &mut out);
    out
}

/// Exhaustive search over the feasible grid with spacing
/// `resolution * min(pbar)`. Grid points are visited in lexicographic order
/// (row-major entries) and the first point attaining the best objective is
/// returned. Cost grows as `(n^K)^K`; intended for `K <= 2`.
pub fn grid_search(ch: &ChannelRealization, budgets: &Budgets, resolution: f64) -> Result<OracleSolution> {
    let k = check_dims(ch, budgets)?;
    if !(resolution > 0.0 && resolution <= 1.0) {
        return Err(invalid("resolution", "must lie in (0, 1]"));
    }
    let p_bar = budgets.p_bar();
    let step = resolution * p_bar.iter().cloned().fold(f64::INFINITY, f64::min);
    let rows: Vec<Vec<Vec<f64>>> = (0..k)
        .map(|j| {
            let n = (p_bar[j] / step + 1e-9).floor() as usize;
            compositions(k, n)
                .into_iter()
                .map(|c| {
                    let mut row: Vec<f64> = c.iter().map(|&m| m as f64 * step).collect();
                    let sum: f64 = row.iter().sum();
                    if sum > p_bar[j] {
                        row.iter_mut().for_each(|v| *v *= p_bar[j] / sum);
                    }
                    row
                })
                .collect()
        })
        .collect();

    let mut idx = vec![0usize; k];
    let mut p = PowerMatrix::zeros(k);
    let mut best: Option<(f64, PowerMatrix)> = None;
    let mut evaluated = 0usize;
    loop {
        for j in 0..k {
            p.matrix_mut().row_mut(j).copy_from_slice(&rows[j][idx[j]]);
        }
        let f = weighted_sum_rate(&p, ch, budgets);
        evaluated += 1;
        if best.as_ref().is_none_or(|(bf, _)| f > *bf) {
            best = Some((f, p.clone()));
        }
        // Odometer with row 0 most significant.
        let mut r = k;
        loop {
            if r == 0 {
                let (objective, p_star) = best.expect("grid is nonempty");
                let lambda_star = recover_duals(&p_star, ch, budgets);
                let kkt = kkt_residual(&p_star, &lambda_star, ch, budgets);
                return Ok(OracleSolution {
                    p_star,
                    lambda_star,
                    objective,
                    kkt_residual: kkt,
                    method: Method::GridSearch,
                    iterations: evaluated,
                    converged: true,
                    start_spread: 0.0,
                    objective_history: Vec::new(),
                });
            }
            r -= 1;
            idx[r] += 1;
            if idx[r] < rows[r].len() {
                break;
            }
            idx[r] = 0;
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BidConsistencyReport {
    /// Positive entries on priced rows that were checked.
    pub entries_checked: usize,
    /// Rows with `lambda* = 0`, where allocation-by-price is undefined.
    pub skipped_rows: Vec<usize>,
    /// Max over checked entries of `|b*/lambda* - p*| / p*`.
    pub max_relative_error: f64,
    pub consistent: bool,
}

/// Builds `b* = p* w R'(p*)` and checks that allocating by the recovered
/// prices reproduces `p*` (`p* = b* / lambda*`) to 1e-6 relative.
pub fn check_bid_consistency(
    oracle: &OracleSolution,
    ch: &ChannelRealization,
    budgets: &Budgets,
) -> BidConsistencyReport {
    let p = &oracle.p_star;
    let m = marginal_values(p, ch, budgets);
    let mut report = BidConsistencyReport {
        entries_checked: 0,
        skipped_rows: Vec::new(),
        max_relative_error: 0.0,
        consistent: true,
    };
    for j in 0..p.dim() {
        let lam = oracle.lambda_star[j];
        if lam <= 0.0 {
            report.skipped_rows.push(j);
            continue;
        }
        for i in (0..p.dim()).filter(|&i| p[(j, i)] > 0.0) {
            let b = p[(j, i)] * m[(j, i)];
            let err = (b / lam - p[(j, i)]).abs() / p[(j, i)];
            report.entries_checked += 1;
            report.max_relative_error = report.max_relative_error.max(err);
        }
    }
    report.consistent = report.max_relative_error <= 1e-6;
    report
}
