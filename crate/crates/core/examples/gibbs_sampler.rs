//! Collapsed Gibbs sampling of topic assignments under a known spatial
//! prior: the word distributions are recovered from scratch.
//!
//!     cargo run --release --example gibbs_sampler

use gdrf::density::DiscretizationGrid;
use gdrf::gibbs::{initialize, sweep, PriorTable};
use gdrf::kernel::KernelParams;
use gdrf::model::{word_topic_posterior, Hyperparameters, World};
use gdrf::rng::{derive, Stream};
use gdrf::simulator::simulate;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let grid = DiscretizationGrid::default_for(World::lattice(&[11, 11])?)?;
    let hp = Hyperparameters::new(3, 15, KernelParams::new(4.0, 5.0));
    let truth = simulate(&grid, &hp, 5_000, 9)?;
    let data = truth.data();

    let cell_probs = truth.topic_probs()?;
    let rows: Vec<Vec<f64>> = data
        .iter()
        .map(|o| Ok(cell_probs[grid.bin(&o.location)?].clone()))
        .collect::<gdrf::error::Result<_>>()?;
    let prior = PriorTable::from_rows(&rows)?;

    let mut counts = initialize(&data, hp.k, hp.w, &mut derive(9, Stream::Initialization))?;
    let mut rng = derive(9, Stream::Sweep);
    for s in 1..=200 {
        sweep(&data, &mut counts, &prior, hp.beta, &mut rng)?;
        if s % 50 == 0 {
            let phi = word_topic_posterior(&counts, hp.beta);
            let tv: Vec<String> = phi
                .iter()
                .zip(&truth.phi)
                .map(|(a, b)| format!("{:.3}", a.iter().zip(b).map(|(p, q)| (p - q).abs()).sum::<f64>() / 2.0))
                .collect();
            println!("sweep {s:>3}  total variation to true word distributions {}", tv.join(" "));
        }
    }
    Ok(())
}
