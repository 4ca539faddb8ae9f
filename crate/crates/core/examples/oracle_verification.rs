//! The centralized solver against the auction fixed point, plus a coarse
//! grid search as a second opinion on a two-user instance.

use coop_auction::experiments::ScenarioConfig;
use coop_auction::oracle::{check_bid_consistency, grid_search, kkt_residual, solve_p1};
use coop_auction::Auction;

fn main() -> coop_auction::Result<()> {
    let mut cfg = ScenarioConfig::default().with_random_users(3);
    cfg.step.max_iterations = 20_000;
    for idx in 0..5 {
        let inst = cfg.instance(idx)?;
        let sol = solve_p1(&inst.channel, &inst.budgets, 1e-8)?;
        let rec = Auction::new(&inst.channel, &inst.budgets, &inst.step)
            .record_trace(false)
            .run(inst.auction_seed)?;
        let s = &rec.final_state;
        let a = rec.objective(&inst.channel, &inst.budgets);
        let bids = check_bid_consistency(&sol, &inst.channel, &inst.budgets);
        println!(
            "instance {idx}: converged={} gap={:+.2e} auction kkt={:.2e} oracle kkt={:.2e} bids consistent={}",
            rec.converged,
            (sol.objective - a) / sol.objective,
            kkt_residual(&s.p, &s.lambda, &inst.channel, &inst.budgets),
            sol.kkt_residual,
            bids.consistent
        );
    }

    let inst = ScenarioConfig::default().with_random_users(2).instance(3)?;
    let sol = solve_p1(&inst.channel, &inst.budgets, 1e-8)?;
    let grid = grid_search(&inst.channel, &inst.budgets, 0.05)?;
    println!("two users: solver {:.6} grid {:.6}", sol.objective, grid.objective);
    Ok(())
}
