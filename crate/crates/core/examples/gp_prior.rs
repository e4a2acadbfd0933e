//! Matern-3/2 covariance and exact prior draws on a 1-D grid.
//!
//!     cargo run --release --example gp_prior

use gdrf::kernel::{matern32, sample_prior, KernelParams};
use gdrf::rng::{derive, Stream};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    for r in [0.0, 0.5, 1.0, 2.0, 4.0] {
        println!("k({r}) = {:.5}", matern32(r, 1.0, 1.0)?);
    }

    let params = KernelParams::new(5.0, 2.0);
    let xs: Vec<Vec<f64>> = (0..60).map(|i| vec![i as f64]).collect();
    let mut rng = derive(3, Stream::Simulation);
    for _ in 0..3 {
        let f = sample_prior(&xs, &params, 0.0, &mut rng)?;
        let line: String = f
            .iter()
            .map(|v| match *v {
                v if v < -1.0 => '_',
                v if v < 1.0 => '-',
                _ => '^',
            })
            .collect();
        println!("{line}");
    }
    Ok(())
}
