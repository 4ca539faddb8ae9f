use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use coop_auction::experiments::{cmd_async, cmd_cdf, cmd_throughput, cmd_toy4, cmd_verify, ScenarioConfig};
use coop_auction::Result;

#[derive(Parser)]
#[command(version, about = "Cooperative relay power auction experiments")]
struct Cli {
    /// Scenario config (JSON); defaults are used for absent fields.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true)]
    realizations: Option<usize>,
    /// Price step size for every node.
    #[arg(long, global = true)]
    epsilon: Option<f64>,
    /// Suppress the stdout report.
    #[arg(long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// One run of the four-user layout with oracle comparison.
    Toy4,
    /// Per-node convergence-iteration CDFs for several step sizes.
    Cdf {
        #[arg(long, value_delimiter = ',', default_value = "1e-3,1e-4,1e-5")]
        steps: Vec<f64>,
    },
    /// Slow one node's updates and compare outcomes.
    Async {
        #[arg(long, value_delimiter = ',', default_value = "1,4,20")]
        periods: Vec<u32>,
        /// 1-based node to slow down.
        #[arg(long, default_value_t = 4)]
        node: usize,
    },
    /// Auction against direct transmission over random topologies.
    Throughput {
        #[arg(long, value_delimiter = ',', default_value = "2,3,4,5,6,7,8")]
        users: Vec<usize>,
        #[arg(long, value_delimiter = ',', default_value = "5,10")]
        budgets_db: Vec<f64>,
    },
    /// Auction against the centralized oracle on random instances.
    Verify {
        #[arg(long, value_delimiter = ',', default_value = "2,3,4")]
        users: Vec<usize>,
    },
}

fn load(cli: &Cli) -> Result<ScenarioConfig> {
    let mut cfg = match &cli.config {
        Some(path) => ScenarioConfig::load(path)?,
        None => ScenarioConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(o) = &cli.out {
        cfg.output_dir = o.clone();
    }
    if let Some(n) = cli.realizations {
        cfg.realizations = n;
    }
    if let Some(e) = cli.epsilon {
        cfg.step.epsilon = e;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "n/a".to_string(), |x| format!("{x:.3e}"))
}

fn execute(cli: &Cli) -> Result<Vec<String>> {
    let cfg = load(cli)?;
    let mut lines = Vec::new();
    match &cli.command {
        Command::Toy4 => {
            let o = cmd_toy4(&cfg)?;
            lines.push(format!(
                "converged={} iterations={} auction={:.6} oracle={:.6} baseline={:.6} gap={:.2e} kkt={:.2e}",
                o.converged, o.iterations, o.auction_objective, o.oracle_objective, o.baseline_objective,
                o.relative_gap, o.kkt_residual
            ));
        }
        Command::Cdf { steps } => {
            for o in cmd_cdf(&cfg, steps)? {
                let a = &o.summary.aggregates;
                lines.push(format!(
                    "epsilon={:e} converged={}/{} median_iterations={}",
                    o.epsilon,
                    a.converged,
                    a.realizations,
                    o.node_iterations
                        .iter()
                        .map(|v| v.get(v.len() / 2).map_or("n/a".into(), |x| x.to_string()))
                        .collect::<Vec<_>>()
                        .join("/")
                ));
            }
        }
        Command::Async { periods, node } => {
            if *node == 0 {
                return Err(coop_auction::Error::Config("--node is 1-based".into()));
            }
            for o in cmd_async(&cfg, periods, node - 1)? {
                lines.push(format!(
                    "period={} converged={} iterations={} objective={:.9} relative_difference={:.2e}",
                    o.period, o.converged, o.iterations, o.objective, o.relative_difference
                ));
            }
        }
        Command::Throughput { users, budgets_db } => {
            for o in cmd_throughput(&cfg, users, budgets_db)? {
                let a = &o.summary.aggregates;
                lines.push(format!(
                    "users={} budget_db={} converged={}/{} auction={} baseline={} gain={} absolute_gain={}",
                    o.users,
                    o.budget_db,
                    a.converged,
                    a.realizations,
                    opt(a.mean_auction_objective),
                    opt(a.mean_baseline_objective),
                    opt(a.relative_gain),
                    opt(a.absolute_gain)
                ));
            }
        }
        Command::Verify { users } => {
            for o in cmd_verify(&cfg, users)? {
                lines.push(format!(
                    "users={} unconverged={:.3} max_gap={} max_kkt={} max_init_difference={}",
                    o.users,
                    o.unconverged_fraction,
                    opt(o.max_relative_gap),
                    opt(o.max_kkt_residual),
                    opt(o.max_init_relative_difference)
                ));
            }
        }
    }
    Ok(lines)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(lines) => {
            if !cli.quiet {
                lines.iter().for_each(|l| println!("{l}"));
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
