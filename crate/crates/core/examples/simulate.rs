//! Draw a dataset from a GDRF prior on a 26x26 lattice and print its most
//! likely topic map.
//!
//!     cargo run --release --example simulate

use gdrf::density::DiscretizationGrid;
use gdrf::kernel::KernelParams;
use gdrf::model::{Hyperparameters, World};
use gdrf::simulator::simulate;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let grid = DiscretizationGrid::default_for(World::lattice(&[26, 26])?)?;
    let hp = Hyperparameters::new(4, 50, KernelParams::new(2.5, 5.0));
    let truth = simulate(&grid, &hp, 10_000, 42)?;

    let mut per_topic = vec![0usize; hp.k];
    for o in &truth.observations {
        per_topic[o.topic] += 1;
    }
    println!("{} observations, tokens per topic {per_topic:?}", truth.observations.len());

    let symbols = ['.', 'o', '#', '+'];
    let cols = grid.cells_per_dim()[1];
    for row in truth.ml_topic_map.chunks(cols) {
        println!("{}", row.iter().map(|&z| symbols[z]).collect::<String>());
    }
    Ok(())
}
