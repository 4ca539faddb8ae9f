//! The four-user layout: one auction run, its relay links and the oracle
//! comparison.

use coop_auction::experiments::{active_links, toy4_outcome, ScenarioConfig};

fn main() -> coop_auction::Result<()> {
    let cfg = ScenarioConfig::default();
    let (inst, out) = toy4_outcome(&cfg, 0)?;
    println!("converged={} after {} iterations", out.converged, out.iterations);
    println!("auction  {:.6}", out.auction_objective);
    println!("oracle   {:.6}", out.oracle_objective);
    println!("direct   {:.6}", out.baseline_objective);
    println!("prices   {:?}", out.final_lambda);
    for (j, row) in out.final_power.iter().enumerate() {
        let cells: Vec<String> = row.iter().map(|v| format!("{v:8.4}")).collect();
        println!("node {}: {}", j + 1, cells.join(" "));
    }
    for l in active_links(&out.record.final_state.p, inst.budgets.p_bar()) {
        if l.from != l.user {
            println!("node {} relays for user {}", l.from, l.user);
        }
    }
    Ok(())
}
