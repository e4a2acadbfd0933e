//! GDRF against the neighbourhood-count ROST baseline on a few simulated
//! worlds, with the same Gibbs budget for both.
//!
//!     cargo run --release --example rost_baseline

use gdrf::density::DiscretizationGrid;
use gdrf::engine::{GdrfModel, TopicModel};
use gdrf::eval::label_afmi;
use gdrf::kernel::KernelParams;
use gdrf::model::{Hyperparameters, World};
use gdrf::rost::{RostModel, DEFAULT_RADIUS};
use gdrf::simulator::simulate;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let grid = DiscretizationGrid::default_for(World::lattice(&[11, 11])?)?;
    let mut hp = Hyperparameters::new(3, 15, KernelParams::new(12.5, 5.0));
    hp.schedule.n_outer = 20;
    hp.schedule.early_stop_tol = None;

    println!("seed  gdrf-topic  rost-topic");
    for seed in 0..3 {
        let truth = simulate(&grid, &hp, 10_000, seed)?;
        let data = truth.data();
        let gdrf = GdrfModel::fit(&data, &hp, &grid, seed)?;
        let rost = RostModel::fit(&data, &hp, &grid, DEFAULT_RADIUS, seed)?;
        let score = |m: &dyn TopicModel| -> Result<String, Box<dyn std::error::Error>> {
            let (topics, _) = m.max_likelihood_maps(&grid)?;
            Ok(label_afmi(&topics, &truth.ml_topic_map).map_or("undefined".into(), |a| format!("{a:.3}")))
        };
        println!("{seed:>4}  {:>10}  {:>10}", score(&gdrf)?, score(&rost)?);
    }
    Ok(())
}
