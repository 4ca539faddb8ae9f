//! Bidder sub-problem: maximize `w_i R_i(p_{.,i}) - sum_j price_j p_{j,i}`
//! over a nonnegative power column.
//!
//! Solved by a projected Newton method with an active set (bound
//! coordinates whose surplus gradient points outward are held at zero) and a
//! projected Armijo search. The objective is strictly concave in the column,
//! so the maximizer is unique and warm starts only change the iteration
//! count. The one place the gradient misleads is a column with zero own
//! power, where the relay terms have a kink; that point is certified
//! separately (see `zero_own_ascent`) and left along the ascent ray when it
//! is not optimal.

use nalgebra::{DMatrix, DVector};

use crate::channel::ChannelRealization;
use crate::rate::{
    column_snr, column_snr_gradient, column_snr_hessian, zero_own_ascent, HALF_LOG2_E,
};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DemandOptions {
    /// Stop once every free coordinate's surplus gradient is within
    /// `rel_tol * max(prices)` of its KKT value.
    pub rel_tol: f64,
    pub max_iterations: usize,
}

impl Default for DemandOptions {
    fn default() -> Self {
        Self {
            rel_tol: 1e-12,
            max_iterations: 200,
        }
    }
}

struct Column<'a> {
    user: usize,
    weight: f64,
    prices: &'a [f64],
    ch: &'a ChannelRealization,
}

impl Column<'_> {
    fn surplus(&self, v: &[f64]) -> f64 {
        let paid: f64 = v.iter().zip(self.prices).map(|(x, p)| x * p).sum();
        self.weight * HALF_LOG2_E * column_snr(self.user, v, self.ch).ln() - paid
    }

    fn gradient(&self, v: &[f64], dgrad: &mut [f64], g: &mut [f64]) -> f64 {
        let d = column_snr_gradient(self.user, v, self.ch, dgrad);
        let scale = self.weight * HALF_LOG2_E / d;
        for k in 0..v.len() {
            g[k] = scale * dgrad[k] - self.prices[k];
        }
        d
    }

    /// Largest violation of the bound-constrained stationarity conditions.
    fn optimality(v: &[f64], g: &[f64], pinned: &[bool]) -> f64 {
        v.iter()
            .zip(g)
            .zip(pinned)
            .filter(|(_, &pin)| !pin)
            .map(|((&x, &gk), _)| if x > 0.0 { gk.abs() } else { gk.max(0.0) })
            .fold(0.0, f64::max)
    }
}

/// Surplus-maximizing demand of `user` at `prices`.
///
/// `warm` is the starting column; coordinates with `pinned[k]` set are held
/// at their `warm` value (an auctioneer that is not trading this round).
pub fn best_response(
    user: usize,
    prices: &[f64],
    ch: &ChannelRealization,
    weight: f64,
    warm: &[f64],
    pinned: &[bool],
    opts: &DemandOptions,
) -> Vec<f64> {
    let k = warm.len();
    debug_assert_eq!(prices.len(), k);
    debug_assert_eq!(pinned.len(), k);
    let col = Column {
        user,
        weight,
        prices,
        ch,
    };
    let price_scale = prices.iter().cloned().fold(0.0, f64::max);
    let tol = opts.rel_tol * price_scale;

    let mut v: Vec<f64> = warm
        .iter()
        .zip(pinned)
        .map(|(&x, &pin)| if pin { x } else { x.max(0.0) })
        .collect();
    for _ in 0..4 {
        newton(&col, &mut v, pinned, tol, opts.max_iterations);
        if pinned[user] || v[user] > 0.0 {
            break;
        }
        let (rate, dir) = zero_own_ascent(user, &v, ch, weight, prices, pinned);
        if rate <= tol {
            break;
        }
        // Step along the ascent ray until the surplus improves.
        let s0 = col.surplus(&v);
        let mut t = 1.0;
        let mut moved = false;
        while t > 1e-12 {
            let cand: Vec<f64> = v.iter().zip(&dir).map(|(x, d)| x + t * d).collect();
            if col.surplus(&cand) > s0 {
                v = cand;
                moved = true;
                break;
            }
            t *= 0.5;
        }
        if !moved {
            break;
        }
    }
    v
}

/// Projected Newton iterations from `v` in place.
fn newton(col: &Column, v: &mut Vec<f64>, pinned: &[bool], tol: f64, max_iterations: usize) {
    let k = v.len();
    let mut dgrad = vec![0.0; k];
    let mut g = vec![0.0; k];
    let mut hd = vec![0.0; k * k];
    let mut cand = v.to_vec();
    let mut cand_g = vec![0.0; k];

    for _ in 0..max_iterations {
        let d = col.gradient(v, &mut dgrad, &mut g);
        let opt = Column::optimality(v, &g, pinned);
        if opt <= tol {
            break;
        }

        let free: Vec<usize> = (0..k)
            .filter(|&i| !pinned[i] && !(v[i] <= 0.0 && g[i] <= 0.0))
            .collect();
        if free.is_empty() {
            break;
        }

        // Newton direction on the free coordinates: (-H) dir = g.
        column_snr_hessian(col.user, v, col.ch, &mut hd);
        let wc = col.weight * HALF_LOG2_E;
        let nf = free.len();
        let neg_h = DMatrix::from_fn(nf, nf, |a, b| {
            let (ia, ib) = (free[a], free[b]);
            -wc * (hd[ia * k + ib] / d - dgrad[ia] * dgrad[ib] / (d * d))
        });
        let rhs = DVector::from_fn(nf, |a, _| g[free[a]]);
        let mut dir = match neg_h.clone().cholesky() {
            Some(chol) => chol.solve(&rhs),
            None => {
                let diag = (0..nf).map(|a| neg_h[(a, a)].abs()).fold(0.0, f64::max);
                rhs.clone() / if diag > 0.0 { diag } else { 1.0 }
            }
        };
        if dir.dot(&rhs) <= 0.0 || dir.iter().any(|x| !x.is_finite()) {
            dir = rhs.clone();
        }

        let s0 = col.surplus(v);
        let mut alpha = 1.0;
        let mut accepted = false;
        for _ in 0..60 {
            cand.copy_from_slice(v);
            for (a, &i) in free.iter().enumerate() {
                cand[i] = (v[i] + alpha * dir[a]).max(0.0);
            }
            let ascent: f64 = free.iter().map(|&i| g[i] * (cand[i] - v[i])).sum();
            if col.surplus(&cand) >= s0 + 1e-4 * ascent && ascent > 0.0 {
                accepted = true;
                break;
            }
            alpha *= 0.5;
        }
        if !accepted {
            // Surplus differences are below rounding; fall back to the full
            // step if it still reduces the stationarity violation.
            cand.copy_from_slice(v);
            for (a, &i) in free.iter().enumerate() {
                cand[i] = (v[i] + dir[a]).max(0.0);
            }
            col.gradient(&cand, &mut dgrad, &mut cand_g);
            if Column::optimality(&cand, &cand_g, pinned) >= opt {
                break;
            }
        }
        let moved = free
            .iter()
            .map(|&i| (cand[i] - v[i]).abs() / (1.0 + v[i]))
            .fold(0.0, f64::max);
        std::mem::swap(v, &mut cand);
        if moved <= 1e-16 {
            break;
        }
    }
}
