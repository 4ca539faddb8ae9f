//! Amplify-and-forward achievable rates and their derivatives.
//!
//! User `i`'s rate depends only on column `i` of the power matrix. With
//! `f = internode_gain`, `g = node_to_dest_gain`, `x_j = p_ii f_ij` and
//! `y_j = p_ji g_ji`, the concave upper-bound rate is
//!
//! ```text
//! R_i = 1/2 log2(1 + p_ii g_ii + sum_{j != i} x_j y_j / (x_j + y_j))
//! ```
//!
//! and the exact rate uses `1 + x_j + y_j` in each relay denominator. A relay
//! term with `x_j + y_j = 0` is taken as zero (its limit).

use std::f64::consts::LN_2;

use serde::{Deserialize, Serialize};

use crate::channel::ChannelRealization;
use crate::error::{invalid, Error, Result};
use crate::matrix::{PowerMatrix, SquareMatrix};

/// `d/dD [1/2 log2 D] * D`, i.e. `1 / (2 ln 2)`.
pub const HALF_LOG2_E: f64 = 0.5 / LN_2;

/// Per-node peak powers (linear) and per-user weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Budgets {
    p_bar: Vec<f64>,
    weights: Vec<f64>,
}

impl Budgets {
    pub fn new(p_bar: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        if p_bar.is_empty() {
            return Err(invalid("p_bar", "must not be empty"));
        }
        if weights.len() != p_bar.len() {
            return Err(Error::DimensionMismatch {
                expected: p_bar.len(),
                found: weights.len(),
            });
        }
        if p_bar.iter().any(|&p| !(p > 0.0 && p.is_finite())) {
            return Err(invalid("p_bar", "every budget must be positive and finite"));
        }
        if weights.iter().any(|&w| !(w > 0.0 && w.is_finite())) {
            return Err(invalid("weights", "every weight must be positive and finite"));
        }
        Ok(Self { p_bar, weights })
    }

    /// Equal budgets and unit weights.
    pub fn uniform(k: usize, p_bar: f64) -> Result<Self> {
        Self::new(vec![p_bar; k], vec![1.0; k])
    }

    pub fn num_users(&self) -> usize {
        self.p_bar.len()
    }

    pub fn p_bar(&self) -> &[f64] {
        &self.p_bar
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn with_weights(&self, weights: Vec<f64>) -> Result<Self> {
        Self::new(self.p_bar.clone(), weights)
    }
}

/// `10^(db / 10)`.
pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

/// Partial derivatives of one user's rate with respect to its power column.
#[derive(Debug, Clone, PartialEq)]
pub struct RateGradient {
    /// With respect to the user's own transmit power.
    pub d_own: f64,
    /// Entry `j` is with respect to relay power `p_{j,i}`; entry `i` is zero.
    pub d_relay: Vec<f64>,
}

#[inline]
fn relay_term(x: f64, y: f64) -> f64 {
    let s = x + y;
    if s > 0.0 {
        x * y / s
    } else {
        0.0
    }
}

/// `1 + p_ii g_ii + sum_j T_j` for the concave bound, from a power column.
pub(crate) fn column_snr(user: usize, col: &[f64], ch: &ChannelRealization) -> f64 {
    let own = col[user];
    let mut d = 1.0 + own * ch.node_to_dest(user, user);
    for (j, &pj) in col.iter().enumerate() {
        if j != user {
            d += relay_term(own * ch.internode(user, j), pj * ch.node_to_dest(j, user));
        }
    }
    d
}

/// Writes `dD/dp_{k,i}` into `grad` and returns `D`.
pub(crate) fn column_snr_gradient(
    user: usize,
    col: &[f64],
    ch: &ChannelRealization,
    grad: &mut [f64],
) -> f64 {
    let own = col[user];
    let mut d = 1.0 + own * ch.node_to_dest(user, user);
    let mut d_own = ch.node_to_dest(user, user);
    for (j, &pj) in col.iter().enumerate() {
        if j == user {
            continue;
        }
        let f = ch.internode(user, j);
        let g = ch.node_to_dest(j, user);
        let x = own * f;
        let y = pj * g;
        let s = x + y;
        if s > 0.0 {
            d += x * y / s;
            let inv = 1.0 / (s * s);
            d_own += f * y * y * inv;
            grad[j] = g * x * x * inv;
        } else {
            grad[j] = 0.0;
        }
    }
    grad[user] = d_own;
    d
}

/// Hessian of `D` with respect to the power column (row-major `k x k`).
/// Only the own/own, own/relay and relay/relay diagonal blocks are nonzero.
pub(crate) fn column_snr_hessian(user: usize, col: &[f64], ch: &ChannelRealization, hess: &mut [f64]) {
    let k = col.len();
    hess.iter_mut().for_each(|h| *h = 0.0);
    let own = col[user];
    let mut h_uu = 0.0;
    for (j, &pj) in col.iter().enumerate() {
        if j == user {
            continue;
        }
        let f = ch.internode(user, j);
        let g = ch.node_to_dest(j, user);
        let x = own * f;
        let y = pj * g;
        let s = x + y;
        if s > 0.0 {
            let inv3 = 1.0 / (s * s * s);
            h_uu -= 2.0 * f * f * y * y * inv3;
            let h_uj = 2.0 * f * g * x * y * inv3;
            hess[user * k + j] = h_uj;
            hess[j * k + user] = h_uj;
            hess[j * k + j] = -2.0 * g * g * x * x * inv3;
        }
    }
    hess[user * k + user] = h_uu;
}

/// Steepest one-sided ascent of `w c ln D - prices . v` out of a column with
/// zero own power, over directions that add one unit of own power.
///
/// With `p_ii = 0` every relay term vanishes, and at a relay whose power is
/// also zero the term `xy/(x+y)` has a kink: both axis derivatives are
/// zero, yet raising both powers together gains. Along `(1, b_j)` such a
/// relay contributes `f_ij b_j g_ji / (f_ij + b_j g_ji)`; maximizing that
/// minus `prices_j b_j` gives `b_j = f_ij (r_j - 1) / g_ji` and a gain of
/// `w c f_ij (1 - 1/r_j)^2` with `r_j = sqrt(w c g_ji / prices_j)`, when
/// `r_j > 1`. Relays already carrying power add `f_ij` and are not moved.
///
/// Returns the ascent rate (positive means the column is not optimal) and
/// the direction. Entries flagged in `fixed` are never moved.
pub(crate) fn zero_own_ascent(
    user: usize,
    col: &[f64],
    ch: &ChannelRealization,
    weight: f64,
    prices: &[f64],
    fixed: &[bool],
) -> (f64, Vec<f64>) {
    debug_assert_eq!(col[user], 0.0);
    let wc = weight * HALF_LOG2_E / column_snr(user, col, ch);
    let mut dir = vec![0.0; col.len()];
    dir[user] = 1.0;
    let mut rate = wc * ch.node_to_dest(user, user) - prices[user];
    for j in (0..col.len()).filter(|&j| j != user) {
        let f = ch.internode(user, j);
        let g = ch.node_to_dest(j, user);
        if col[j] > 0.0 {
            rate += wc * f;
        } else if !fixed[j] && f > 0.0 && g > 0.0 {
            let r = (wc * g / prices[j].max(f64::MIN_POSITIVE)).sqrt();
            if r > 1.0 {
                let shortfall = 1.0 - 1.0 / r;
                rate += wc * f * shortfall * shortfall;
                dir[j] = f * (r - 1.0) / g;
            }
        }
    }
    (rate, dir)
}

fn check_user(user: usize, p: &PowerMatrix, ch: &ChannelRealization) {
    assert_eq!(p.dim(), ch.num_users(), "power matrix and channel sizes differ");
    assert!(user < p.dim(), "user index {user} out of range");
}

/// Concave upper-bound rate of `user`, bits per channel use.
pub fn rate_approx(user: usize, p: &PowerMatrix, ch: &ChannelRealization) -> f64 {
    check_user(user, p, ch);
    0.5 * column_snr(user, &p.column(user), ch).log2()
}

/// Exact AF rate (relay denominators `1 + x_j + y_j`). Never exceeds
/// [`rate_approx`].
pub fn rate_exact(user: usize, p: &PowerMatrix, ch: &ChannelRealization) -> f64 {
    check_user(user, p, ch);
    let own = p[(user, user)];
    let mut d = 1.0 + own * ch.node_to_dest(user, user);
    for j in (0..p.dim()).filter(|&j| j != user) {
        let x = own * ch.internode(user, j);
        let y = p[(j, user)] * ch.node_to_dest(j, user);
        d += x * y / (1.0 + x + y);
    }
    0.5 * d.log2()
}

/// Full gradient of `R_user` with respect to column `user`; entry `k` is
/// `dR/dp_{k,user}` (own power at index `user`).
///
/// At boundaries the one-sided limits are used: a relay derivative is
/// `g_ji / (2 ln2 D)` when `p_ji = 0 < p_ii`, and zero when `p_ii = 0`.
pub fn column_gradient(user: usize, col: &[f64], ch: &ChannelRealization) -> Vec<f64> {
    let mut grad = vec![0.0; col.len()];
    let d = column_snr_gradient(user, col, ch, &mut grad);
    grad.iter_mut().for_each(|g| *g *= HALF_LOG2_E / d);
    grad
}

pub fn rate_gradient(user: usize, p: &PowerMatrix, ch: &ChannelRealization) -> RateGradient {
    check_user(user, p, ch);
    let mut d_relay = column_gradient(user, &p.column(user), ch);
    let d_own = std::mem::replace(&mut d_relay[user], 0.0);
    RateGradient { d_own, d_relay }
}

/// Matrix of weighted marginal values: entry `(j, i)` is
/// `w_i * dR_i/dp_{j,i}`, the most bidder `i` would pay per unit of node
/// `j`'s power at the current allocation.
pub fn marginal_values(p: &PowerMatrix, ch: &ChannelRealization, budgets: &Budgets) -> SquareMatrix {
    let k = p.dim();
    let mut m = SquareMatrix::zeros(k);
    for i in 0..k {
        let grad = column_gradient(i, &p.column(i), ch);
        let w = budgets.weights()[i];
        for (j, g) in grad.into_iter().enumerate() {
            m[(j, i)] = w * g;
        }
    }
    m
}

pub fn weighted_sum_rate(p: &PowerMatrix, ch: &ChannelRealization, budgets: &Budgets) -> f64 {
    (0..p.dim())
        .map(|i| budgets.weights()[i] * rate_approx(i, p, ch))
        .sum()
}

/// Bidder surplus: weighted rate minus payments at `prices`.
pub fn surplus(
    user: usize,
    p: &PowerMatrix,
    ch: &ChannelRealization,
    prices: &[f64],
    budgets: &Budgets,
) -> f64 {
    let paid: f64 = (0..p.dim()).map(|j| prices[j] * p[(j, user)]).sum();
    budgets.weights()[user] * rate_approx(user, p, ch) - paid
}

/// Combined bidder and auctioneer profit of `user` (unweighted rate):
/// `R_i - sum_j p_ji prices_j + prices_i sum_j p_ij`.
pub fn payoff(user: usize, p: &PowerMatrix, ch: &ChannelRealization, prices: &[f64]) -> f64 {
    let paid: f64 = (0..p.dim()).map(|j| prices[j] * p[(j, user)]).sum();
    let earned = prices[user] * p.row_sum(user);
    rate_approx(user, p, ch) - paid + earned
}
