use coop_auction::experiments::{Instance, ScenarioConfig};
use coop_auction::oracle::{grid_search, kkt_residual, solve_p1_with, OracleOptions};
use coop_auction::rate::{marginal_values, weighted_sum_rate};
use coop_auction::{Budgets, PowerMatrix};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn instance(k: usize, index: u64) -> Instance {
    ScenarioConfig::default().with_random_users(k).instance(index).unwrap()
}

fn options(seed: u64) -> OracleOptions {
    OracleOptions {
        seed,
        ..OracleOptions::default()
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn solution_is_feasible_and_certified(k in 2usize..=4, index in 0u64..10_000) {
        let inst = instance(k, index);
        let sol = solve_p1_with(&inst.channel, &inst.budgets, &options(inst.oracle_seed)).unwrap();
        prop_assert!(sol.p_star.is_feasible(inst.budgets.p_bar(), 1e-9));
        if sol.converged {
            prop_assert!(sol.kkt_residual < 1e-8);
            let again = kkt_residual(&sol.p_star, &sol.lambda_star, &inst.channel, &inst.budgets);
            prop_assert!(again < 1e-8);
        }
        let direct = PowerMatrix::direct(inst.budgets.p_bar());
        prop_assert!(sol.objective >= weighted_sum_rate(&direct, &inst.channel, &inst.budgets));
    }

    #[test]
    fn objective_never_decreases_along_the_ascent(k in 2usize..=4, index in 0u64..10_000) {
        let inst = instance(k, index);
        let opts = OracleOptions { record_history: true, ..options(inst.oracle_seed) };
        let sol = solve_p1_with(&inst.channel, &inst.budgets, &opts).unwrap();
        prop_assert!(!sol.objective_history.is_empty());
        for w in sol.objective_history.windows(2) {
            prop_assert!(w[1] >= w[0] - 64.0 * f64::EPSILON * w[0].abs());
        }
        prop_assert_eq!(*sol.objective_history.last().unwrap(), sol.objective);
    }

    #[test]
    fn scaling_weights_scales_duals_not_the_optimum(k in 2usize..=3, index in 0u64..10_000, c in 0.2f64..5.0) {
        let inst = instance(k, index);
        let heavy = inst.budgets.with_weights(vec![c; k]).unwrap();
        let base = solve_p1_with(&inst.channel, &inst.budgets, &options(1)).unwrap();
        let scaled = solve_p1_with(&inst.channel, &heavy, &options(1)).unwrap();
        prop_assert!((scaled.objective - c * base.objective).abs() <= 1e-9 * c * base.objective);
        // The scaled problem's maximizer is optimal for the original.
        let cross = weighted_sum_rate(&scaled.p_star, &inst.channel, &inst.budgets);
        prop_assert!((cross - base.objective).abs() <= 1e-9 * base.objective);
        for (a, b) in scaled.lambda_star.iter().zip(&base.lambda_star) {
            prop_assert!((a - c * b).abs() <= 1e-6 * c * b.max(1e-3), "{} vs {}", a, c * b);
        }
    }

    #[test]
    fn gradients_are_monotone_against_the_optimum(k in 2usize..=4, index in 0u64..10_000, seed in any::<u64>()) {
        let inst = instance(k, index);
        let sol = solve_p1_with(&inst.channel, &inst.budgets, &options(inst.oracle_seed)).unwrap();
        let m_star = marginal_values(&sol.p_star, &inst.channel, &inst.budgets);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..20 {
            let rows: Vec<Vec<f64>> = inst.budgets.p_bar().iter()
                .map(|&cap| {
                    let raw: Vec<f64> = (0..k).map(|_| rng.random::<f64>()).collect();
                    let total: f64 = raw.iter().sum();
                    let fill = cap * rng.random::<f64>();
                    raw.iter().map(|r| r / total * fill).collect()
                })
                .collect();
            let p = PowerMatrix::from_rows(rows).unwrap();
            let m = marginal_values(&p, &inst.channel, &inst.budgets);
            let inner: f64 = m.iter_entries()
                .map(|(j, i, v)| (v - m_star[(j, i)]) * (p[(j, i)] - sol.p_star[(j, i)]))
                .sum();
            prop_assert!(inner <= 1e-10, "inner product {}", inner);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    /// The grid cannot beat the optimum, and cannot fall below the grid
    /// point obtained by rounding the optimum down, whose shortfall is the
    /// cost of the resolution.
    #[test]
    fn grid_search_agrees_within_its_resolution(index in 0u64..10_000) {
        let inst = instance(2, index);
        let sol = solve_p1_with(&inst.channel, &inst.budgets, &options(inst.oracle_seed)).unwrap();
        let resolution = 0.02;
        let grid = grid_search(&inst.channel, &inst.budgets, resolution).unwrap();
        let step = resolution * inst.budgets.p_bar().iter().cloned().fold(f64::INFINITY, f64::min);
        let snapped = PowerMatrix::from_rows(
            sol.p_star.to_rows().iter()
                .map(|r| r.iter().map(|x| (x / step + 1e-9).floor() * step).collect())
                .collect(),
        ).unwrap();
        prop_assert!(snapped.is_feasible(inst.budgets.p_bar(), 1e-12));
        let floor = weighted_sum_rate(&snapped, &inst.channel, &inst.budgets);
        prop_assert!(grid.objective <= sol.objective + 1e-9);
        prop_assert!(grid.objective >= floor - 1e-12, "grid {} below snapped optimum {}", grid.objective, floor);
    }
}

#[test]
fn fine_grid_matches_a_two_user_optimum() {
    let inst = instance(2, 3);
    let sol = solve_p1_with(&inst.channel, &inst.budgets, &options(inst.oracle_seed)).unwrap();
    let grid = grid_search(&inst.channel, &inst.budgets, 0.02).unwrap();
    assert!(grid.objective <= sol.objective + 1e-9);
    assert!(sol.objective - grid.objective < 1e-3, "grid {} vs {}", grid.objective, sol.objective);
}

#[test]
fn uniform_budgets_give_matching_duals_in_a_symmetric_pair() {
    use coop_auction::{ChannelRealization, SquareMatrix};
    let f = SquareMatrix::from_rows(vec![vec![0.0, 4.0], vec![4.0, 0.0]]).unwrap();
    let g = SquareMatrix::from_rows(vec![vec![0.5, 2.0], vec![2.0, 0.5]]).unwrap();
    let ch = ChannelRealization::new(f, g).unwrap();
    let sol = solve_p1_with(&ch, &Budgets::uniform(2, 10.0).unwrap(), &options(3)).unwrap();
    assert!(sol.converged);
    assert!((sol.lambda_star[0] - sol.lambda_star[1]).abs() < 1e-7);
}
