//! Sparse variational GP regression on a noisy sine, trained with the same
//! monotone step routine the topic model uses.
//!
//!     cargo run --release --example sparse_gp

use gdrf::kernel::KernelParams;
use gdrf::rng::{derive, Stream};
use gdrf::svgp::GpState;
use rand::Rng;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut rng = derive(0, Stream::Simulation);
    let x: Vec<Vec<f64>> = (0..200).map(|i| vec![i as f64 / 20.0]).collect();
    let y: Vec<f64> = x.iter().map(|p| p[0].sin() + 0.2 * (rng.random::<f64>() - 0.5)).collect();
    let inducing: Vec<Vec<f64>> = (0..15).map(|i| vec![i as f64 * 10.0 / 14.0]).collect();

    let mut gp = GpState::new(KernelParams::new(1.0, 1.0), 0.0, inducing)?;
    for step in 0..=200 {
        let (next, report) = gp.fit_step(&x, &y, 0.05)?;
        gp = next;
        if step % 50 == 0 {
            println!("step {step:>3}  elbo {:.3}", report.elbo_after);
        }
    }
    println!(
        "length scale {:.3}, scale {:.3}, noise {:.4}",
        gp.kernel.length_scales[0], gp.kernel.scale, gp.kernel.noise_variance
    );
    let query: Vec<Vec<f64>> = [0.5, 2.0, 4.5, 8.0].iter().map(|&t| vec![t]).collect();
    for (q, m) in query.iter().zip(gp.predict_mean(&query)?) {
        println!("f({:.1}) = {m:+.3}   sin = {:+.3}", q[0], q[0].sin());
    }
    Ok(())
}
