use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::{check_dim, HessianBound, Moments, TargetModel};
use crate::error::{Error, Result};

/// Equal-weight mixture of isotropic Gaussians sharing one variance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MixtureSpec {
    pub means: Vec<Vec<f64>>,
    pub sigma2: f64,
}

/// `log q(x) = log sum_k exp(-|x - mu_k|^2 / (2 sigma^2))`, with no further
/// constant: the component normalizers and the 1/K weight are dropped.
#[derive(Debug, Clone)]
pub struct MixtureModel {
    d: usize,
    means: Vec<Vec<f64>>,
    sigma2: f64,
    bound: HessianBound,
}

pub fn mixture_model(spec: &MixtureSpec) -> Result<MixtureModel> {
    let k = spec.means.len();
    if k == 0 {
        return Err(Error::InvalidArgument("mixture needs at least one component".into()));
    }
    if !(spec.sigma2 > 0.0) || !spec.sigma2.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "mixture variance must be positive, got {}",
            spec.sigma2
        )));
    }
    let d = spec.means[0].len();
    if d == 0 || spec.means.iter().any(|m| m.len() != d) {
        return Err(Error::InvalidArgument(
            "mixture means must share one non-zero dimension".into(),
        ));
    }
    if spec.means.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("mixture means"));
    }
    // The Hessian of log q is (1/s2)(Cov_r(mu)/s2 - I), with Cov_r the
    // responsibility-weighted covariance of the means. Values in [m_i, M_i]
    // have variance at most (M_i - m_i)^2 / 4, and Cauchy-Schwarz bounds the
    // covariances by the product of the half-ranges.
    let s2 = spec.sigma2;
    let half_range: Vec<f64> = (0..d)
        .map(|i| {
            let (lo, hi) = spec
                .means
                .iter()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), m| {
                    (lo.min(m[i]), hi.max(m[i]))
                });
            0.5 * (hi - lo)
        })
        .collect();
    let m = DMatrix::from_fn(d, d, |i, j| {
        let cov = half_range[i] * half_range[j] / (s2 * s2);
        if i == j {
            1.0 / s2 + cov
        } else {
            cov
        }
    });
    let bound = HessianBound::new(m)?;
    Ok(MixtureModel {
        d,
        means: spec.means.clone(),
        sigma2: s2,
        bound,
    })
}

impl MixtureModel {
    pub fn components(&self) -> usize {
        self.means.len()
    }

    fn logit(&self, k: usize, x: &[f64]) -> f64 {
        let sq: f64 = x
            .iter()
            .zip(&self.means[k])
            .map(|(a, m)| (a - m) * (a - m))
            .sum();
        -sq / (2.0 * self.sigma2)
    }

    fn max_logit(&self, x: &[f64]) -> f64 {
        (0..self.means.len())
            .map(|k| self.logit(k, x))
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

impl TargetModel for MixtureModel {
    fn dim(&self) -> usize {
        self.d
    }

    fn log_density(&self, x: &[f64]) -> f64 {
        check_dim(x, self.d);
        let max = self.max_logit(x);
        let sum: f64 = (0..self.means.len())
            .map(|k| (self.logit(k, x) - max).exp())
            .sum();
        max + sum.ln()
    }

    fn grad_log_density_into(&self, x: &[f64], grad: &mut [f64]) {
        check_dim(x, self.d);
        let max = self.max_logit(x);
        let mut total = 0.0;
        grad.iter_mut().for_each(|g| *g = 0.0);
        for (k, mean) in self.means.iter().enumerate() {
            let w = (self.logit(k, x) - max).exp();
            total += w;
            for (g, m) in grad.iter_mut().zip(mean) {
                *g += w * m;
            }
        }
        for (g, xi) in grad.iter_mut().zip(x) {
            *g = -(xi - *g / total) / self.sigma2;
        }
    }

    fn hessian_bound(&self) -> &HessianBound {
        &self.bound
    }

    fn exact_moments(&self) -> Option<Moments> {
        let k = self.means.len() as f64;
        let mean = (0..self.d)
            .map(|i| self.means.iter().map(|m| m[i]).sum::<f64>() / k)
            .collect();
        let second = (0..self.d)
            .map(|i| self.sigma2 + self.means.iter().map(|m| m[i] * m[i]).sum::<f64>() / k)
            .collect();
        Some(Moments { mean, second })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{gaussian_model, GaussianSpec};

    #[test]
    fn bound_from_mean_range() {
        let spec = MixtureSpec {
            means: vec![vec![0.0], vec![10.0], vec![3.0]],
            sigma2: 0.5,
        };
        let m = mixture_model(&spec).unwrap();
        assert!((m.hessian_bound().matrix()[(0, 0)] - 102.0).abs() < 1e-12);
    }

    #[test]
    fn bound_covers_cross_curvature() {
        // two components on the diagonal: the Hessian has equal off-diagonal
        // and diagonal covariance terms midway between them
        let spec = MixtureSpec {
            means: vec![vec![0.0, 0.0], vec![2.0, 2.0]],
            sigma2: 0.5,
        };
        let m = mixture_model(&spec).unwrap();
        let bound = m.hessian_bound().matrix();
        assert!((bound[(0, 1)] - 4.0).abs() < 1e-12);
        let x = [1.0, 1.0];
        let h = 1e-5;
        let g0 = m.grad_log_density(&[x[0], x[1] - h]);
        let g1 = m.grad_log_density(&[x[0], x[1] + h]);
        let cross = (g1[0] - g0[0]) / (2.0 * h);
        assert!((cross - 4.0).abs() < 1e-4, "{cross}");
        assert!(cross.abs() <= bound[(0, 1)] + 1e-6);
    }

    #[test]
    fn single_component_matches_gaussian() {
        let mu = vec![1.5, -0.5];
        let mix = mixture_model(&MixtureSpec {
            means: vec![mu.clone()],
            sigma2: 0.7,
        })
        .unwrap();
        let gauss = gaussian_model(&GaussianSpec::isotropic(mu, 0.7)).unwrap();
        for x in [[0.0, 0.0], [3.0, -2.0], [-10.0, 7.5]] {
            assert!((mix.log_density(&x) - gauss.log_density(&x)).abs() < 1e-12);
            let (a, b) = (mix.grad_log_density(&x), gauss.grad_log_density(&x));
            for i in 0..2 {
                assert!((a[i] - b[i]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn far_field_is_finite() {
        let m = mixture_model(&MixtureSpec {
            means: vec![vec![0.0, 0.0], vec![10.0, 10.0]],
            sigma2: 0.2,
        })
        .unwrap();
        for x in [[1e3, -1e3], [-1e3, -1e3], [1e3, 1e3]] {
            assert!(m.log_density(&x).is_finite());
            assert!(m.grad_log_density(&x).iter().all(|g| g.is_finite()));
        }
    }

    #[test]
    fn rejects_bad_variance() {
        let spec = MixtureSpec {
            means: vec![vec![0.0]],
            sigma2: 0.0,
        };
        assert!(mixture_model(&spec).is_err());
    }
}
