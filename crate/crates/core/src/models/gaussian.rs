use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{check_dim, HessianBound, Moments, TargetModel};
use crate::error::{Error, Result};

/// Mean and covariance of a multivariate Gaussian.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GaussianSpec {
    pub mu: Vec<f64>,
    /// Covariance, row-major.
    pub sigma: Vec<Vec<f64>>,
}

impl GaussianSpec {
    pub fn isotropic(mu: Vec<f64>, variance: f64) -> Self {
        let d = mu.len();
        let sigma = (0..d)
            .map(|i| (0..d).map(|j| if i == j { variance } else { 0.0 }).collect())
            .collect();
        Self { mu, sigma }
    }

    pub fn standard(d: usize) -> Self {
        Self::isotropic(vec![0.0; d], 1.0)
    }
}

/// `log q(x) = -1/2 (x - mu)' Sigma^{-1} (x - mu)`; the normalizing
/// constant `-1/2 log det(2 pi Sigma)` is dropped.
#[derive(Debug, Clone)]
pub struct GaussianModel {
    mu: Vec<f64>,
    covariance: DMatrix<f64>,
    precision: DMatrix<f64>,
    chol_lower: DMatrix<f64>,
    bound: HessianBound,
}

pub fn gaussian_model(spec: &GaussianSpec) -> Result<GaussianModel> {
    let d = spec.mu.len();
    if d == 0 {
        return Err(Error::InvalidArgument("Gaussian needs dimension >= 1".into()));
    }
    if spec.sigma.len() != d || spec.sigma.iter().any(|row| row.len() != d) {
        return Err(Error::InvalidArgument(format!(
            "covariance must be {d}x{d} to match mu"
        )));
    }
    let covariance = DMatrix::from_fn(d, d, |i, j| spec.sigma[i][j]);
    if covariance.iter().chain(spec.mu.iter()).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("Gaussian spec"));
    }
    let scale = covariance.amax().max(1.0);
    if (&covariance - covariance.transpose()).amax() > 1e-12 * scale {
        return Err(Error::InvalidArgument("covariance must be symmetric".into()));
    }
    let chol = covariance
        .clone()
        .cholesky()
        .ok_or(Error::Singular("Gaussian covariance is not positive definite"))?;
    let precision = chol.inverse();
    let bound = HessianBound::new(precision.map(f64::abs))?;
    Ok(GaussianModel {
        mu: spec.mu.clone(),
        chol_lower: chol.l(),
        covariance,
        precision,
        bound,
    })
}

impl GaussianModel {
    pub fn mean(&self) -> &[f64] {
        &self.mu
    }

    pub fn covariance(&self) -> &DMatrix<f64> {
        &self.covariance
    }

    pub fn precision(&self) -> &DMatrix<f64> {
        &self.precision
    }

    /// Exact draw `mu + L z`.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let d = self.mu.len();
        let z = DVector::from_fn(d, |_, _| rng.sample::<f64, _>(StandardNormal));
        let y = &self.chol_lower * z;
        self.mu.iter().zip(y.iter()).map(|(m, y)| m + y).collect()
    }
}

impl TargetModel for GaussianModel {
    fn dim(&self) -> usize {
        self.mu.len()
    }

    fn log_density(&self, x: &[f64]) -> f64 {
        check_dim(x, self.mu.len());
        let d = self.mu.len();
        let mut quad = 0.0;
        for i in 0..d {
            let di = x[i] - self.mu[i];
            let mut row = 0.0;
            for j in 0..d {
                row += self.precision[(i, j)] * (x[j] - self.mu[j]);
            }
            quad += di * row;
        }
        -0.5 * quad
    }

    fn grad_log_density_into(&self, x: &[f64], grad: &mut [f64]) {
        check_dim(x, self.mu.len());
        let d = self.mu.len();
        for i in 0..d {
            let mut g = 0.0;
            for j in 0..d {
                g -= self.precision[(i, j)] * (x[j] - self.mu[j]);
            }
            grad[i] = g;
        }
    }

    fn hessian_bound(&self) -> &HessianBound {
        &self.bound
    }

    fn exact_moments(&self) -> Option<Moments> {
        let second = self
            .mu
            .iter()
            .enumerate()
            .map(|(i, m)| self.covariance[(i, i)] + m * m)
            .collect();
        Some(Moments {
            mean: self.mu.clone(),
            second,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mixture_base_has_half_identity_bound() {
        let m = gaussian_model(&GaussianSpec::isotropic(vec![5.0, 5.0], 2.0)).unwrap();
        let b = m.hessian_bound().matrix();
        assert!((b[(0, 0)] - 0.5).abs() < 1e-15);
        assert!((b[(1, 1)] - 0.5).abs() < 1e-15);
        assert_eq!(b[(0, 1)], 0.0);
    }

    #[test]
    fn gradient_vanishes_at_mean() {
        let m = gaussian_model(&GaussianSpec::standard(3)).unwrap();
        assert_eq!(m.grad_log_density(&[0.0, 0.0, 0.0]), vec![0.0; 3]);
    }

    #[test]
    fn one_dimensional_gradient_and_bound() {
        let m = gaussian_model(&GaussianSpec::standard(1)).unwrap();
        assert_eq!(m.grad_log_density(&[3.0]), vec![-3.0]);
        assert_eq!(m.hessian_bound().matrix()[(0, 0)], 1.0);
        assert_eq!(m.log_density(&[2.0]), -2.0);
    }

    #[test]
    fn singular_covariance_is_rejected() {
        let spec = GaussianSpec {
            mu: vec![0.0, 0.0],
            sigma: vec![vec![1.0, 1.0], vec![1.0, 1.0]],
        };
        assert!(matches!(gaussian_model(&spec), Err(Error::Singular(_))));
    }

    #[test]
    fn exact_moments_add_mean_square() {
        let m = gaussian_model(&GaussianSpec::isotropic(vec![1.0, -2.0], 0.5)).unwrap();
        let mo = m.exact_moments().unwrap();
        assert_eq!(mo.mean, vec![1.0, -2.0]);
        assert_eq!(mo.second, vec![1.5, 4.5]);
    }
}
