//! A 1-D time series: windowed KL divergence between observed and predicted
//! word frequencies for GDRF, ROST and an untrained model.
//!
//!     cargo run --release --example time_series_kl

use gdrf::density::DiscretizationGrid;
use gdrf::engine::GdrfModel;
use gdrf::eval::windowed_kl;
use gdrf::kernel::KernelParams;
use gdrf::model::{Hyperparameters, World};
use gdrf::rost::RostModel;
use gdrf::simulator::simulate;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let bins = 100;
    let grid = DiscretizationGrid::new(World::lattice(&[bins])?, vec![bins])?;
    let mut hp = Hyperparameters::new(3, 20, KernelParams::new(8.0, 5.0));
    hp.schedule.n_outer = 20;
    hp.schedule.inducing_cap = 50;
    let data = simulate(&grid, &hp, 20_000, 4)?.data();

    let gdrf = GdrfModel::fit(&data, &hp, &grid, 4)?;
    let rost = RostModel::fit(&data, &hp, &grid, 1, 4)?;
    let untrained = GdrfModel::untrained(&data, &hp, &grid, 4)?;
    for (name, series) in [
        ("gdrf", windowed_kl(&gdrf, &data, bins)?),
        ("rost", windowed_kl(&rost, &data, bins)?),
        ("untrained", windowed_kl(&untrained, &data, bins)?),
    ] {
        println!("{name:>9}: mean KL {:.4} nats", series.mean().unwrap_or(f64::NAN));
    }
    Ok(())
}
