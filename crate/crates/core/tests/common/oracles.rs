//! Independent oracles shared by the GP tests.

use gdrf::kernel::KernelParams;
use gdrf::model::Location;
use gdrf::svgp::GpState;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// Matérn-3/2 written out independently of the library.
pub fn matern(x: &[f64], y: &[f64], ls: &[f64], scale: f64) -> f64 {
    let r = x
        .iter()
        .zip(y)
        .zip(ls)
        .map(|((a, b), l)| ((a - b) / l).powi(2))
        .sum::<f64>()
        .sqrt();
    let a = 3f64.sqrt() * r;
    scale * (1.0 + a) * (-a).exp()
}

/// Exact log N(y | c, K + noise I).
pub fn dense_log_marginal(x: &[Location], y: &[f64], ls: &[f64], scale: f64, noise: f64, c: f64) -> f64 {
    let n = x.len();
    let k = DMatrix::from_fn(n, n, |i, j| {
        matern(&x[i], &x[j], ls, scale) + if i == j { noise } else { 0.0 }
    });
    let chol = k.cholesky().expect("dense covariance PD");
    let r = DVector::from_iterator(n, y.iter().map(|v| v - c));
    let alpha = chol.solve(&r);
    let logdet: f64 = (0..n).map(|i| chol.l()[(i, i)].ln()).sum::<f64>() * 2.0;
    -0.5 * r.dot(&alpha) - 0.5 * logdet - 0.5 * n as f64 * (2.0 * std::f64::consts::PI).ln()
}

pub fn random_config(seed: u64, dim: usize, n: usize, m: usize) -> (GpState, Vec<Location>, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x: Vec<Location> = (0..n)
        .map(|_| (0..dim).map(|_| rng.random_range(0.0..5.0)).collect())
        .collect();
    let y: Vec<f64> = x
        .iter()
        .map(|p| p.iter().map(|v| v.sin()).sum::<f64>() + 0.3 * rng.sample::<f64, _>(StandardNormal))
        .collect();
    let z: Vec<Location> = (0..m)
        .map(|_| (0..dim).map(|_| rng.random_range(0.0..5.0)).collect())
        .collect();
    let ls: Vec<f64> = (0..dim).map(|_| rng.random_range(0.8..2.0)).collect();
    let mut kernel = KernelParams::with_length_scales(ls, rng.random_range(0.5..2.0));
    kernel.noise_variance = rng.random_range(0.05..0.5);
    kernel.jitter = 1e-6;
    let gp = GpState::new(kernel, rng.random_range(-1.0..1.0), z).unwrap();
    // Move away from the prior so every gradient block is exercised.
    let mut p = gp.pack();
    let base = dim + 3;
    for v in p.iter_mut().skip(base) {
        *v += 0.3 * rng.sample::<f64, _>(StandardNormal);
    }
    // keep the diagonal of S away from zero
    let mut idx = base + m;
    for i in 0..m {
        idx += i;
        p[idx] = 0.5 + p[idx].abs();
        idx += 1;
    }
    (gp.unpack(&p).unwrap(), x, y)
}
