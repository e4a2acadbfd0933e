//! Sparse variational GP regression with a Gaussian likelihood.
//!
//! The inducing values are whitened: `u = c + L_zz v` with `v ~ N(0, I)`
//! a priori and `q(v) = N(m, S S^T)`, `S` lower triangular. The prior
//! therefore corresponds to `m = 0, S = I`, and the KL term does not depend
//! on the kernel. Everything is optimised on a flat parameter vector:
//!
//! ```text
//! [ln l_1 .. ln l_D, ln scale, ln(noise - floor), const_mean, m (M), tril(S) (M(M+1)/2, row-major)]
//! ```

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};

use crate::error::{GdrfError, Result};
use crate::kernel::{jittered_cholesky, kernel_matrix, kernel_matrix_sym, KernelParams};
use crate::model::Location;

/// Lower bound on the likelihood noise variance.
pub const NOISE_FLOOR: f64 = 1e-6;

const SQRT3: f64 = 1.732_050_807_568_877_2;

/// Maximum number of step halvings before a step is rejected.
const MAX_BACKTRACK: usize = 12;

#[derive(Debug, Clone, PartialEq)]
struct Adam {
    first: Vec<f64>,
    second: Vec<f64>,
    t: i32,
}

impl Adam {
    const B1: f64 = 0.9;
    const B2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    fn new(n: usize) -> Self {
        Adam {
            first: vec![0.0; n],
            second: vec![0.0; n],
            t: 0,
        }
    }

    /// Update the moments with `grad` and return the bias-corrected direction.
    fn direction(&mut self, grad: &[f64]) -> Vec<f64> {
        self.t += 1;
        let c1 = 1.0 - Self::B1.powi(self.t);
        let c2 = 1.0 - Self::B2.powi(self.t);
        grad.iter()
            .zip(self.first.iter_mut().zip(self.second.iter_mut()))
            .map(|(&g, (m, v))| {
                *m = Self::B1 * *m + (1.0 - Self::B1) * g;
                *v = Self::B2 * *v + (1.0 - Self::B2) * g * g;
                (*m / c1) / ((*v / c2).sqrt() + Self::EPS)
            })
            .collect()
    }
}

/// Variational posterior of one latent field.
#[derive(Debug, Clone)]
pub struct GpState {
    pub kernel: KernelParams,
    /// Prior mean of the field.
    pub const_mean: f64,
    pub inducing: Vec<Location>,
    pub variational_mean: DVector<f64>,
    /// Lower-triangular factor `S` of the whitened variational covariance.
    pub variational_cov_factor: DMatrix<f64>,
    adam: Option<Adam>,
}

impl PartialEq for GpState {
    fn eq(&self, other: &Self) -> bool {
        self.kernel == other.kernel
            && self.const_mean == other.const_mean
            && self.inducing == other.inducing
            && self.variational_mean == other.variational_mean
            && self.variational_cov_factor == other.variational_cov_factor
    }
}

/// Result of one optimisation step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepReport {
    pub elbo_before: f64,
    pub elbo_after: f64,
    /// Multiplier finally applied to the learning rate (0 when rejected).
    pub step_fraction: f64,
    pub accepted: bool,
}

/// Cached quantities for fast posterior-mean evaluation.
#[derive(Debug, Clone)]
pub struct MeanPredictor {
    kernel: KernelParams,
    const_mean: f64,
    inducing: Vec<Location>,
    weights: Vec<f64>,
}

impl MeanPredictor {
    pub fn eval(&self, x: &[f64]) -> f64 {
        self.const_mean
            + self
                .inducing
                .iter()
                .zip(&self.weights)
                .map(|(z, w)| w * self.kernel.eval(x, z))
                .sum::<f64>()
    }
}

impl GpState {
    /// A GP whose variational distribution equals the prior.
    pub fn new(kernel: KernelParams, const_mean: f64, inducing: Vec<Location>) -> Result<Self> {
        let dim = inducing
            .first()
            .map(Vec::len)
            .ok_or_else(|| GdrfError::contract("at least one inducing point is required"))?;
        if inducing.iter().any(|z| z.len() != dim) {
            return Err(GdrfError::contract("inducing points differ in dimension"));
        }
        kernel.validate()?;
        let kernel = kernel.expanded(dim)?;
        if kernel.noise_variance <= NOISE_FLOOR {
            return Err(GdrfError::contract(format!(
                "noise variance must exceed the floor {NOISE_FLOOR}"
            )));
        }
        let m = inducing.len();
        Ok(GpState {
            kernel,
            const_mean,
            inducing,
            variational_mean: DVector::zeros(m),
            variational_cov_factor: DMatrix::identity(m, m),
            adam: None,
        })
    }

    /// Rebuild a state from stored parameters.
    pub fn from_parts(
        kernel: KernelParams,
        const_mean: f64,
        inducing: Vec<Location>,
        variational_mean: Vec<f64>,
        variational_cov_factor: DMatrix<f64>,
    ) -> Result<Self> {
        let mut gp = GpState::new(kernel, const_mean, inducing)?;
        let m = gp.num_inducing();
        if variational_mean.len() != m || variational_cov_factor.shape() != (m, m) {
            return Err(GdrfError::contract("variational parameters do not match inducing count"));
        }
        gp.variational_mean = DVector::from_vec(variational_mean);
        gp.variational_cov_factor = variational_cov_factor.lower_triangle();
        Ok(gp)
    }

    pub fn dim(&self) -> usize {
        self.kernel.length_scales.len()
    }

    pub fn num_inducing(&self) -> usize {
        self.inducing.len()
    }

    pub fn num_params(&self) -> usize {
        let m = self.num_inducing();
        self.dim() + 3 + m + m * (m + 1) / 2
    }

    pub fn pack(&self) -> Vec<f64> {
        let mut p = Vec::with_capacity(self.num_params());
        p.extend(self.kernel.length_scales.iter().map(|l| l.ln()));
        p.push(self.kernel.scale.ln());
        p.push((self.kernel.noise_variance - NOISE_FLOOR).ln());
        p.push(self.const_mean);
        p.extend(self.variational_mean.iter());
        let s = &self.variational_cov_factor;
        for i in 0..self.num_inducing() {
            for j in 0..=i {
                p.push(s[(i, j)]);
            }
        }
        p
    }

    /// Copy of `self` with parameters taken from `p` (layout as [`Self::pack`]).
    pub fn unpack(&self, p: &[f64]) -> Result<Self> {
        if p.len() != self.num_params() {
            return Err(GdrfError::contract(format!(
                "expected {} parameters, got {}",
                self.num_params(),
                p.len()
            )));
        }
        let d = self.dim();
        let m = self.num_inducing();
        let mut out = self.clone();
        for (l, v) in out.kernel.length_scales.iter_mut().zip(&p[..d]) {
            *l = v.exp();
        }
        out.kernel.scale = p[d].exp();
        out.kernel.noise_variance = NOISE_FLOOR + p[d + 1].exp();
        out.const_mean = p[d + 2];
        let base = d + 3;
        out.variational_mean = DVector::from_column_slice(&p[base..base + m]);
        let mut idx = base + m;
        let mut s = DMatrix::zeros(m, m);
        for i in 0..m {
            for j in 0..=i {
                s[(i, j)] = p[idx];
                idx += 1;
            }
        }
        out.variational_cov_factor = s;
        Ok(out)
    }

    fn check_data(&self, x: &[Location], y: &[f64]) -> Result<()> {
        if x.len() != y.len() {
            return Err(GdrfError::contract(format!(
                "{} inputs but {} targets",
                x.len(),
                y.len()
            )));
        }
        if x.iter().any(|p| p.len() != self.dim()) {
            return Err(GdrfError::contract("training inputs have the wrong dimension"));
        }
        Ok(())
    }

    /// Evidence lower bound of `y` observed at `x`.
    pub fn elbo(&self, x: &[Location], y: &[f64]) -> Result<f64> {
        Ok(self.elbo_impl(x, y, false)?.0)
    }

    /// ELBO together with its gradient in the [`Self::pack`] layout.
    pub fn elbo_and_gradient(&self, x: &[Location], y: &[f64]) -> Result<(f64, Vec<f64>)> {
        let (v, g) = self.elbo_impl(x, y, true)?;
        Ok((v, g.expect("gradient requested")))
    }

    fn elbo_impl(&self, x: &[Location], y: &[f64], want_grad: bool) -> Result<(f64, Option<Vec<f64>>)> {
        self.check_data(x, y)?;
        let n = x.len();
        let m = self.num_inducing();
        let d = self.dim();
        let kern = &self.kernel;
        let sigma = kern.scale;
        let noise = kern.noise_variance;
        let mean = &self.variational_mean;
        let s = &self.variational_cov_factor;

        let kzz = kernel_matrix_sym(&self.inducing, kern)?;
        let (chol, jitter) = jittered_cholesky(&kzz, sigma, kern.jitter)?;
        let l = chol.l();

        // At = L^{-1} K_zx, i.e. the transpose of A = K_xz L^{-T}.
        let kzx = kernel_matrix(&self.inducing, x, kern)?;
        let mut at = kzx.clone();
        if n > 0 && !l.solve_lower_triangular_mut(&mut at) {
            return Err(GdrfError::numerical("singular inducing factor"));
        }

        let mu = at.tr_mul(mean).add_scalar(self.const_mean);
        let st_a = s.tr_mul(&at);
        let resid = DVector::from_iterator(n, y.iter().zip(mu.iter()).map(|(y, mu)| y - mu));
        let var = DVector::from_iterator(
            n,
            (0..n).map(|i| sigma - at.column(i).norm_squared() + st_a.column(i).norm_squared()),
        );

        let sq_sum: f64 = resid.iter().zip(var.iter()).map(|(r, v)| r * r + v).sum();
        let data_term = -0.5 * n as f64 * (2.0 * PI * noise).ln() - sq_sum / (2.0 * noise);

        let mut log_det_s = 0.0;
        for i in 0..m {
            log_det_s += s[(i, i)].abs().ln();
        }
        let kl = 0.5 * (s.norm_squared() + mean.norm_squared() - m as f64) - log_det_s;
        let elbo = data_term - kl;
        if !elbo.is_finite() {
            return Err(GdrfError::numerical(format!(
                "non-finite ELBO (data term {data_term}, KL {kl})"
            )));
        }
        if !want_grad {
            return Ok((elbo, None));
        }

        let mut grad = vec![0.0; self.num_params()];
        let base = d + 3;

        // Variational mean and constant mean.
        let d_mean = (&at * &resid) / noise - mean;
        grad[d + 2] = resid.sum() / noise;
        grad[base..base + m].copy_from_slice(d_mean.as_slice());

        // Variational covariance factor.
        let ata = &at * at.transpose();
        let mut d_s = -(&ata * s) / noise - s;
        for i in 0..m {
            d_s[(i, i)] += 1.0 / s[(i, i)];
        }
        let mut idx = base + m;
        for i in 0..m {
            for j in 0..=i {
                grad[idx] = d_s[(i, j)];
                idx += 1;
            }
        }

        // Noise, through ln(noise - floor).
        let d_noise = -0.5 * n as f64 / noise + sq_sum / (2.0 * noise * noise);
        grad[d + 1] = d_noise * (noise - NOISE_FLOOR);

        // Kernel hyperparameters: backpropagate through A and chol(K_zz).
        let p_mat = DMatrix::identity(m, m) - s * s.transpose();
        let g_at = (mean * resid.transpose() + &p_mat * &at) / noise;
        let mut bt = g_at;
        if n > 0 && !l.tr_solve_lower_triangular_mut(&mut bt) {
            return Err(GdrfError::numerical("singular inducing factor"));
        }
        let l_bar = -(&bt * at.transpose()).lower_triangle();
        let k_zz_bar = cholesky_backward(&l, &l_bar)?;

        let mut d_log_scale = -0.5 * n as f64 / noise * sigma;
        for k in 0..m {
            for i in 0..n {
                d_log_scale += bt[(k, i)] * kzx[(k, i)];
            }
            for j in 0..m {
                let kzz_eff = kzz[(k, j)] + if k == j { jitter * sigma } else { 0.0 };
                d_log_scale += k_zz_bar[(k, j)] * kzz_eff;
            }
        }
        grad[d] = d_log_scale;

        let mut d_log_ls = vec![0.0; d];
        let mut accumulate = |a: &[f64], b: &[f64], weight: f64| {
            if weight == 0.0 {
                return;
            }
            let u = kern.scaled_distance(a, b);
            let common = 3.0 * sigma * (-SQRT3 * u).exp() * weight;
            for (dd, acc) in d_log_ls.iter_mut().enumerate() {
                let t = (a[dd] - b[dd]) / kern.length_scales[dd];
                *acc += common * t * t;
            }
        };
        for k in 0..m {
            for i in 0..n {
                accumulate(&self.inducing[k], &x[i], bt[(k, i)]);
            }
            for j in 0..m {
                accumulate(&self.inducing[k], &self.inducing[j], k_zz_bar[(k, j)]);
            }
        }
        grad[..d].copy_from_slice(&d_log_ls);

        if grad.iter().any(|g| !g.is_finite()) {
            return Err(GdrfError::numerical("non-finite ELBO gradient"));
        }
        Ok((elbo, Some(grad)))
    }

    /// One Adam ascent step on the ELBO with base rate `learning_rate`.
    ///
    /// The step is halved until the ELBO does not decrease; if no fraction
    /// works the parameters are left unchanged and `accepted` is false.
    pub fn fit_step(&self, x: &[Location], y: &[f64], learning_rate: f64) -> Result<(GpState, StepReport)> {
        self.fit_step_with(x, y, learning_rate, true)
    }

    /// As [`Self::fit_step`], but with `train_kernel == false` the length
    /// scales and output scale are held fixed. Noise, mean and `q` still move.
    pub fn fit_step_with(
        &self,
        x: &[Location],
        y: &[f64],
        learning_rate: f64,
        train_kernel: bool,
    ) -> Result<(GpState, StepReport)> {
        if !(learning_rate >= 0.0) {
            return Err(GdrfError::contract("learning rate must be non-negative"));
        }
        let (before, mut grad) = self.elbo_and_gradient(x, y)?;
        if !train_kernel {
            grad[..=self.kernel.length_scales.len()].fill(0.0);
        }
        if learning_rate == 0.0 {
            return Ok((
                self.clone(),
                StepReport {
                    elbo_before: before,
                    elbo_after: before,
                    step_fraction: 0.0,
                    accepted: true,
                },
            ));
        }
        let mut adam = self.adam.clone().unwrap_or_else(|| Adam::new(grad.len()));
        let dir = adam.direction(&grad);
        let params = self.pack();

        let mut fraction = 1.0;
        for _ in 0..=MAX_BACKTRACK {
            let trial: Vec<f64> = params
                .iter()
                .zip(&dir)
                .map(|(p, d)| p + learning_rate * fraction * d)
                .collect();
            let candidate = self.unpack(&trial)?;
            if let Ok(after) = candidate.elbo(x, y) {
                if after >= before {
                    let mut next = candidate;
                    next.adam = Some(adam);
                    return Ok((
                        next,
                        StepReport {
                            elbo_before: before,
                            elbo_after: after,
                            step_fraction: fraction,
                            accepted: true,
                        },
                    ));
                }
            }
            fraction *= 0.5;
        }
        let mut same = self.clone();
        same.adam = Some(adam);
        Ok((
            same,
            StepReport {
                elbo_before: before,
                elbo_after: before,
                step_fraction: 0.0,
                accepted: false,
            },
        ))
    }

    /// Replace `q` by its closed-form optimum for the current kernel, mean and
    /// noise.
    pub fn with_optimal_variational(&self, x: &[Location], y: &[f64]) -> Result<GpState> {
        self.check_data(x, y)?;
        let m = self.num_inducing();
        let kzz = kernel_matrix_sym(&self.inducing, &self.kernel)?;
        let (chol, _) = jittered_cholesky(&kzz, self.kernel.scale, self.kernel.jitter)?;
        let l = chol.l();
        let mut at = kernel_matrix(&self.inducing, x, &self.kernel)?;
        if !x.is_empty() && !l.solve_lower_triangular_mut(&mut at) {
            return Err(GdrfError::numerical("singular inducing factor"));
        }
        let noise = self.kernel.noise_variance;
        let precision = DMatrix::identity(m, m) + (&at * at.transpose()) / noise;
        let centred = DVector::from_iterator(y.len(), y.iter().map(|v| v - self.const_mean));
        let pchol = nalgebra::Cholesky::new(precision)
            .ok_or_else(|| GdrfError::numerical("variational precision not positive definite"))?;
        let mean = pchol.solve(&((&at * centred) / noise));
        let cov = pchol.inverse();
        let cov = (&cov + cov.transpose()) * 0.5;
        let factor = nalgebra::Cholesky::new(cov)
            .ok_or_else(|| GdrfError::numerical("variational covariance not positive definite"))?
            .l();
        let mut out = self.clone();
        out.variational_mean = mean;
        out.variational_cov_factor = factor;
        out.adam = None;
        Ok(out)
    }

    pub fn predictor(&self) -> Result<MeanPredictor> {
        let kzz = kernel_matrix_sym(&self.inducing, &self.kernel)?;
        let (chol, _) = jittered_cholesky(&kzz, self.kernel.scale, self.kernel.jitter)?;
        let mut w = self.variational_mean.clone();
        if !chol.l().tr_solve_lower_triangular_mut(&mut w) {
            return Err(GdrfError::numerical("singular inducing factor"));
        }
        Ok(MeanPredictor {
            kernel: self.kernel.clone(),
            const_mean: self.const_mean,
            inducing: self.inducing.clone(),
            weights: w.iter().copied().collect(),
        })
    }

    /// Posterior mean of the latent field at each query location.
    pub fn predict_mean(&self, query: &[Location]) -> Result<Vec<f64>> {
        if query.iter().any(|q| q.len() != self.dim()) {
            return Err(GdrfError::contract("query points have the wrong dimension"));
        }
        let p = self.predictor()?;
        Ok(query.iter().map(|q| p.eval(q)).collect())
    }
}

/// Reverse-mode derivative of `L = chol(K)`: given `dF/dL` (lower
/// triangular), return the symmetric `dF/dK`.
fn cholesky_backward(l: &DMatrix<f64>, l_bar: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let mut phi = (l.transpose() * l_bar).lower_triangle();
    for i in 0..phi.nrows() {
        phi[(i, i)] *= 0.5;
    }
    // L^{-T} phi L^{-1}
    let mut left = phi;
    if !l.tr_solve_lower_triangular_mut(&mut left) {
        return Err(GdrfError::numerical("singular Cholesky factor"));
    }
    let mut right = left.transpose();
    if !l.tr_solve_lower_triangular_mut(&mut right) {
        return Err(GdrfError::numerical("singular Cholesky factor"));
    }
    let full = right.transpose();
    Ok((&full + full.transpose()) * 0.5)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(n: usize, lo: f64, hi: f64) -> Vec<Location> {
        (0..n)
            .map(|i| vec![lo + (hi - lo) * i as f64 / (n.max(2) - 1) as f64])
            .collect()
    }

    #[test]
    fn prior_has_zero_kl_on_empty_data() {
        let gp = GpState::new(KernelParams::new(1.0, 2.0), 0.3, line(5, 0.0, 4.0)).unwrap();
        assert_eq!(gp.elbo(&[], &[]).unwrap(), 0.0);
    }

    #[test]
    fn pack_unpack_roundtrip() {
        let mut gp = GpState::new(KernelParams::new(1.5, 2.0), 0.3, line(3, 0.0, 4.0)).unwrap();
        gp.variational_cov_factor[(2, 1)] = 0.4;
        gp.variational_mean[0] = -1.0;
        let back = gp.unpack(&gp.pack()).unwrap();
        for (a, b) in back.pack().iter().zip(gp.pack()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn untrained_predicts_const_mean() {
        let gp = GpState::new(KernelParams::new(1.0, 2.0), 1.7, line(4, 0.0, 3.0)).unwrap();
        for v in gp.predict_mean(&line(10, -5.0, 8.0)).unwrap() {
            assert!((v - 1.7).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_rate_leaves_state() {
        let x = line(6, 0.0, 5.0);
        let y: Vec<f64> = x.iter().map(|p| p[0].sin()).collect();
        let gp = GpState::new(KernelParams::new(1.0, 1.0), 0.0, line(4, 0.0, 5.0)).unwrap();
        let (next, _) = gp.fit_step(&x, &y, 0.0).unwrap();
        assert_eq!(next.pack(), gp.pack());
    }

    #[test]
    fn frozen_kernel_step_keeps_scales() {
        let x = line(12, 0.0, 6.0);
        let y: Vec<f64> = x.iter().map(|p| p[0].sin() + 1.0).collect();
        let mut gp = GpState::new(KernelParams::new(1.3, 2.0), 0.0, line(5, 0.0, 6.0)).unwrap();
        let start = gp.kernel.clone();
        for _ in 0..10 {
            let (next, report) = gp.fit_step_with(&x, &y, 0.1, false).unwrap();
            assert!(report.elbo_after >= report.elbo_before);
            gp = next;
        }
        assert_eq!(gp.kernel.length_scales, start.length_scales);
        assert_eq!(gp.kernel.scale, start.scale);
        assert_ne!(gp.kernel.noise_variance, start.noise_variance);
        assert_ne!(gp.const_mean, 0.0);
    }

    #[test]
    fn far_query_reverts_to_mean() {
        let x = line(8, 0.0, 7.0);
        let y: Vec<f64> = x.iter().map(|p| 2.0 * p[0].cos()).collect();
        let gp = GpState::new(KernelParams::new(1.0, 1.0), 0.5, x.clone())
            .unwrap()
            .with_optimal_variational(&x, &y)
            .unwrap();
        let far = gp.predict_mean(&[vec![7.0 + 20.0]]).unwrap()[0];
        assert!((far - 0.5).abs() < 1e-3);
    }

    #[test]
    fn data_shape_checked() {
        let gp = GpState::new(KernelParams::new(1.0, 1.0), 0.0, line(3, 0.0, 1.0)).unwrap();
        assert!(gp.elbo(&line(2, 0.0, 1.0), &[1.0]).is_err());
        assert!(gp.elbo(&[vec![0.0, 1.0]], &[1.0]).is_err());
    }
}
