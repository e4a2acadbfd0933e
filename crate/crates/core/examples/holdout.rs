//! Slide a held-out window across a short 1-D series and compare the KL of
//! a model that never saw the window with one trained on everything.
//!
//!     cargo run --release --example holdout

use gdrf::density::DiscretizationGrid;
use gdrf::eval::holdout_experiment;
use gdrf::kernel::KernelParams;
use gdrf::model::{Hyperparameters, World};
use gdrf::simulator::simulate;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let bins = 60;
    let grid = DiscretizationGrid::new(World::lattice(&[bins])?, vec![bins])?;
    let mut hp = Hyperparameters::new(2, 12, KernelParams::new(10.0, 5.0));
    hp.schedule.n_outer = 15;
    hp.schedule.threads = 4;
    let data = simulate(&grid, &hp, 6_000, 8)?.data();

    let result = holdout_experiment(&data, &hp, &grid, 3, 15, 8)?;
    for w in &result.windows {
        println!(
            "bins {:>2}..{:<2}  held out {:>4}  ratio {}",
            w.start_bin,
            w.end_bin,
            w.n_held_out,
            w.ratio.map_or("skipped".into(), |r| format!("{r:.3}"))
        );
    }
    println!("mean {:.3}  max {:.3}", result.mean().unwrap_or(f64::NAN), result.max().unwrap_or(f64::NAN));
    Ok(())
}
