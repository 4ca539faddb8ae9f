//! Per-node convergence-iteration quantiles over random fading draws of the
//! four-user layout, for two step sizes.

use coop_auction::experiments::{cmd_cdf, ScenarioConfig};

fn main() -> coop_auction::Result<()> {
    let mut cfg = ScenarioConfig {
        realizations: 20,
        output_dir: std::env::temp_dir().join("coop-auction-cdf"),
        ..ScenarioConfig::default()
    };
    cfg.step.max_iterations = 200_000;
    for o in cmd_cdf(&cfg, &[1e-4, 1e-5])? {
        println!("epsilon={:e} converged {}/{}", o.epsilon, o.summary.aggregates.converged, cfg.realizations);
        for (j, v) in o.node_iterations.iter().enumerate() {
            let q = |f: f64| v[((v.len() - 1) as f64 * f).round() as usize];
            println!("  node {}: p10={} p50={} p90={}", j + 1, q(0.1), q(0.5), q(0.9));
        }
    }
    println!("csv files in {}", cfg.output_dir.display());
    Ok(())
}
