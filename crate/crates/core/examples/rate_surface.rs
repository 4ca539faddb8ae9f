//! User 1's rate as one helper shifts power into relaying, with the exact
//! rate next to the concave bound the auction optimizes.

use coop_auction::rate::{rate_approx, rate_exact, rate_gradient};
use coop_auction::{ChannelRealization, PowerMatrix, SquareMatrix};

fn main() -> coop_auction::Result<()> {
    let f = SquareMatrix::from_rows(vec![vec![0.0, 20.0], vec![20.0, 0.0]])?;
    let g = SquareMatrix::from_rows(vec![vec![0.5, 1.0], vec![4.0, 3.0]])?;
    let ch = ChannelRealization::new(f, g)?;
    println!("relay power  approx   exact   d/d_relay");
    for step in 0..=10 {
        let relay = step as f64;
        let p = PowerMatrix::from_rows(vec![vec![10.0, 0.0], vec![relay, 10.0 - relay]])?;
        let grad = rate_gradient(0, &p, &ch);
        println!(
            "{relay:11.1} {:8.4} {:7.4} {:10.4}",
            rate_approx(0, &p, &ch),
            rate_exact(0, &p, &ch),
            grad.d_relay[1]
        );
    }
    Ok(())
}
