//! Slowing one node's bid and price updates delays convergence but leaves
//! the final allocation unchanged.

use coop_auction::experiments::ScenarioConfig;
use coop_auction::{Auction, Schedule};

fn main() -> coop_auction::Result<()> {
    let inst = ScenarioConfig::default().instance(0)?;
    for period in [1, 2, 5, 20] {
        let schedule = Schedule::with_slow_node(4, 3, period)?;
        let rec = Auction::new(&inst.channel, &inst.budgets, &inst.step)
            .schedule(schedule)
            .record_trace(false)
            .run(inst.auction_seed)?;
        println!(
            "node 4 every {period:2} steps: converged={} iterations={:6} objective={:.9}",
            rec.converged,
            rec.iterations_used,
            rec.objective(&inst.channel, &inst.budgets)
        );
    }
    Ok(())
}
