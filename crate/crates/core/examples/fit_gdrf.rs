//! Fit a GDRF to simulated data and score its topic map against the truth.
//!
//!     cargo run --release --example fit_gdrf

use gdrf::density::DiscretizationGrid;
use gdrf::engine::{GdrfModel, TopicModel};
use gdrf::eval::label_afmi;
use gdrf::kernel::KernelParams;
use gdrf::model::{Hyperparameters, World};
use gdrf::simulator::simulate;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let grid = DiscretizationGrid::default_for(World::lattice(&[11, 11])?)?;
    let mut hp = Hyperparameters::new(3, 15, KernelParams::new(12.5, 5.0));
    hp.schedule.n_outer = 30;
    let truth = simulate(&grid, &hp, 10_000, 1)?;

    let model = GdrfModel::fit(&truth.data(), &hp, &grid, 1)?;
    for d in &model.diagnostics {
        println!(
            "iteration {:>3}  train log-lik {:.4}  elbo {:?}",
            d.iteration,
            d.train_log_likelihood,
            d.elbo.iter().map(|e| e.round()).collect::<Vec<_>>()
        );
    }

    let (topics, words) = model.max_likelihood_maps(&grid)?;
    println!("topic AFMI {:.3}", label_afmi(&topics, &truth.ml_topic_map)?);
    println!("word AFMI  {:.3}", label_afmi(&words, &truth.ml_word_map)?);
    Ok(())
}
