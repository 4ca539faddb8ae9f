//! Mean weighted sum-rate of the auction against direct transmission on
//! random topologies, by user count and power budget.

use coop_auction::experiments::{cmd_throughput, ScenarioConfig};

fn main() -> coop_auction::Result<()> {
    let mut cfg = ScenarioConfig {
        realizations: 30,
        output_dir: std::env::temp_dir().join("coop-auction-throughput"),
        ..ScenarioConfig::default()
    };
    cfg.step.max_iterations = 20_000;
    println!("users  dB  converged  auction  direct  relative  absolute");
    for o in cmd_throughput(&cfg, &[2, 4, 6], &[5.0, 10.0])? {
        let a = &o.summary.aggregates;
        println!(
            "{:5} {:3} {:6}/{:<3} {:8.4} {:7.4} {:9.4} {:9.4}",
            o.users,
            o.budget_db,
            a.converged,
            a.realizations,
            a.mean_auction_objective.unwrap_or(f64::NAN),
            a.mean_baseline_objective.unwrap_or(f64::NAN),
            a.relative_gain.unwrap_or(f64::NAN),
            a.absolute_gain.unwrap_or(f64::NAN)
        );
    }
    Ok(())
}
