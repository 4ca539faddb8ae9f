//! Random topologies and seeded fading draws: positions, gains and the
//! average fading power on one link.

use coop_auction::channel::{path_gain, random_topology, sample_realization, DestinationPlacement};
use coop_auction::seed::realization_seed;
use coop_auction::PropagationParams;

fn main() -> coop_auction::Result<()> {
    let topo = random_topology(3, 1.0, DestinationPlacement::default(), 42)?;
    for (j, p) in topo.node_positions().iter().enumerate() {
        println!("node {}: ({:.3}, {:.3})", j + 1, p.x, p.y);
    }
    let params = PropagationParams::default();
    let ch = sample_realization(&topo, &params, 7)?;
    println!("internode gains {:?}", ch.internode_gain().to_rows());
    println!("node-to-destination gains {:?}", ch.node_to_dest_gain().to_rows());

    let params = PropagationParams {
        shadowing_std_db: 0.0,
        ..params
    };
    let d = topo.node_to_destination_distance(0, 0);
    let mean = path_gain(d, &params, 0.0, 1.0)?;
    let draws = 20_000;
    let total: f64 = (0..draws)
        .map(|n| sample_realization(&topo, &params, realization_seed(1, n)).map(|c| c.node_to_dest(0, 0)))
        .sum::<coop_auction::Result<f64>>()?;
    println!("link 1->dest: mean fading power {:.4}", total / draws as f64 / mean);
    Ok(())
}
