//! Matérn-3/2 covariance with per-dimension length scales.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{GdrfError, Result};
use crate::model::Location;

const SQRT3: f64 = 1.732_050_807_568_877_2;

/// Largest jitter (relative to the kernel scale) tried before a
/// factorization is declared failed.
pub const MAX_JITTER: f64 = 1e-2;

/// Default cap on the number of points for dense prior sampling.
pub const DENSE_CAP: usize = 5000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelParams {
    /// One entry per dimension, or a single entry shared by all dimensions.
    pub length_scales: Vec<f64>,
    /// Output variance scale: `k(0) = scale`.
    pub scale: f64,
    /// Gaussian likelihood variance used by the variational regression.
    pub noise_variance: f64,
    /// Diagonal jitter, relative to `scale`.
    pub jitter: f64,
}

impl KernelParams {
    pub fn new(length_scale: f64, scale: f64) -> Self {
        KernelParams {
            length_scales: vec![length_scale],
            scale,
            noise_variance: 0.1,
            jitter: 1e-8,
        }
    }

    pub fn with_length_scales(length_scales: Vec<f64>, scale: f64) -> Self {
        KernelParams {
            length_scales,
            ..KernelParams::new(1.0, scale)
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |x: f64| x > 0.0 && x.is_finite();
        if self.length_scales.is_empty() || !self.length_scales.iter().all(|&l| positive(l)) {
            return Err(GdrfError::config(format!(
                "length scales must be positive, got {:?}",
                self.length_scales
            )));
        }
        for (name, v) in [
            ("scale", self.scale),
            ("noise_variance", self.noise_variance),
            ("jitter", self.jitter),
        ] {
            if !positive(v) {
                return Err(GdrfError::config(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(())
    }

    /// Length scale along dimension `d`.
    pub fn length_scale(&self, d: usize) -> f64 {
        if self.length_scales.len() == 1 {
            self.length_scales[0]
        } else {
            self.length_scales[d]
        }
    }

    /// Copy with the length scales expanded to exactly `dim` entries.
    pub fn expanded(&self, dim: usize) -> Result<Self> {
        let length_scales = match self.length_scales.len() {
            1 => vec![self.length_scales[0]; dim],
            n if n == dim => self.length_scales.clone(),
            n => {
                return Err(GdrfError::contract(format!(
                    "{n} length scales for a {dim}-dimensional world"
                )))
            }
        };
        Ok(KernelParams {
            length_scales,
            ..self.clone()
        })
    }

    fn check_dim(&self, dim: usize) -> Result<()> {
        let n = self.length_scales.len();
        if n == 1 || n == dim {
            Ok(())
        } else {
            Err(GdrfError::contract(format!(
                "{n} length scales for {dim}-dimensional points"
            )))
        }
    }

    /// Distance between `x` and `y` after dividing each axis by its length scale.
    pub fn scaled_distance(&self, x: &[f64], y: &[f64]) -> f64 {
        x.iter()
            .zip(y)
            .enumerate()
            .map(|(d, (a, b))| {
                let t = (a - b) / self.length_scale(d);
                t * t
            })
            .sum::<f64>()
            .sqrt()
    }

    /// Covariance between two points.
    pub fn eval(&self, x: &[f64], y: &[f64]) -> f64 {
        matern32_unit(self.scaled_distance(x, y), self.scale)
    }
}

/// `scale * (1 + sqrt(3) u) * exp(-sqrt(3) u)` for an already length-scaled
/// distance `u`.
#[inline]
pub fn matern32_unit(u: f64, scale: f64) -> f64 {
    let a = SQRT3 * u;
    scale * (1.0 + a) * (-a).exp()
}

/// Matérn-3/2 covariance at distance `r`.
pub fn matern32(r: f64, length_scale: f64, scale: f64) -> Result<f64> {
    if !(r >= 0.0) {
        return Err(GdrfError::contract(format!(
            "kernel distance must be non-negative, got {r}"
        )));
    }
    Ok(matern32_unit(r / length_scale, scale))
}

fn check_points(points: &[Location]) -> Result<usize> {
    let dim = points.first().map_or(0, Vec::len);
    if points.iter().any(|p| p.len() != dim) {
        return Err(GdrfError::contract("points have inconsistent dimensionality"));
    }
    Ok(dim)
}

/// Cross-covariance matrix, `xs.len() x ys.len()`.
pub fn kernel_matrix(xs: &[Location], ys: &[Location], params: &KernelParams) -> Result<DMatrix<f64>> {
    let dx = check_points(xs)?;
    let dy = check_points(ys)?;
    if !xs.is_empty() && !ys.is_empty() && dx != dy {
        return Err(GdrfError::contract(format!(
            "dimension mismatch: {dx} vs {dy}"
        )));
    }
    if !xs.is_empty() {
        params.check_dim(dx)?;
    }
    Ok(DMatrix::from_fn(xs.len(), ys.len(), |i, j| {
        params.eval(&xs[i], &ys[j])
    }))
}

/// Symmetric covariance of a point set with itself.
pub fn kernel_matrix_sym(xs: &[Location], params: &KernelParams) -> Result<DMatrix<f64>> {
    let dim = check_points(xs)?;
    if !xs.is_empty() {
        params.check_dim(dim)?;
    }
    let n = xs.len();
    let mut k = DMatrix::zeros(n, n);
    for i in 0..n {
        k[(i, i)] = params.scale;
        for j in 0..i {
            let v = params.eval(&xs[i], &xs[j]);
            k[(i, j)] = v;
            k[(j, i)] = v;
        }
    }
    Ok(k)
}

/// Cholesky factor of `k + jitter * scale * I`, escalating the jitter tenfold
/// until the factorization succeeds or [`MAX_JITTER`] is exceeded. Returns
/// the factor and the relative jitter that was used.
pub fn jittered_cholesky(
    k: &DMatrix<f64>,
    scale: f64,
    start_jitter: f64,
) -> Result<(Cholesky<f64, Dyn>, f64)> {
    if k.iter().any(|v| !v.is_finite()) {
        return Err(GdrfError::numerical("covariance matrix has non-finite entries"));
    }
    let mut jitter = start_jitter;
    loop {
        let mut kj = k.clone();
        for i in 0..kj.nrows() {
            kj[(i, i)] += jitter * scale;
        }
        if let Some(chol) = Cholesky::new(kj) {
            return Ok((chol, jitter));
        }
        if jitter * 10.0 > MAX_JITTER * (1.0 + 1e-9) {
            return Err(GdrfError::numerical(format!(
                "Cholesky failed on {n}x{n} covariance even with jitter {jitter:e} x scale {scale}",
                n = k.nrows()
            )));
        }
        jitter *= 10.0;
    }
}

/// One exact draw from the GP prior `N(mean, K)` at `locations`.
pub fn sample_prior<R: Rng + ?Sized>(
    locations: &[Location],
    params: &KernelParams,
    mean: f64,
    rng: &mut R,
) -> Result<Vec<f64>> {
    sample_prior_capped(locations, params, mean, DENSE_CAP, rng)
}

pub fn sample_prior_capped<R: Rng + ?Sized>(
    locations: &[Location],
    params: &KernelParams,
    mean: f64,
    cap: usize,
    rng: &mut R,
) -> Result<Vec<f64>> {
    if locations.len() > cap {
        return Err(GdrfError::contract(format!(
            "{} points exceed the dense sampling cap of {cap}",
            locations.len()
        )));
    }
    let k = kernel_matrix_sym(locations, params)?;
    let (chol, _) = jittered_cholesky(&k, params.scale, params.jitter)?;
    Ok(draw_with_factor(&chol, mean, rng))
}

pub(crate) fn draw_with_factor<R: Rng + ?Sized>(
    chol: &Cholesky<f64, Dyn>,
    mean: f64,
    rng: &mut R,
) -> Vec<f64> {
    let n = chol.l_dirty().nrows();
    let z = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
    let l = chol.l();
    (l * z).iter().map(|v| v + mean).collect()
}
