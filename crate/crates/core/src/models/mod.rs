//! Target and base distributions.
//!
//! A model supplies an unnormalized log-density, its gradient, and a
//! non-negative matrix `M` dominating the Hessian of `-log q` entrywise.
//! The additive constant dropped from each log-density is documented on the
//! model; tempering calibration absorbs it.

use std::fmt::Debug;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

mod boltzmann;
mod gaussian;
mod mixture;

pub use boltzmann::{
    boltzmann_exact_moments, boltzmann_relaxation_model, build_q, random_machine, BoltzmannModel,
    BoltzmannMoments, BoltzmannSpec, MAX_ENUMERATION_DIM,
};
pub use gaussian::{gaussian_model, GaussianModel, GaussianSpec};
pub use mixture::{mixture_model, MixtureModel, MixtureSpec};

/// Per-coordinate first and second moments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Moments {
    pub mean: Vec<f64>,
    pub second: Vec<f64>,
}

/// Entrywise non-negative matrix with `|H(x)_ij| <= M_ij` for all `x`.
#[derive(Debug, Clone, PartialEq)]
pub struct HessianBound {
    matrix: DMatrix<f64>,
    row_sums: Vec<f64>,
    total: f64,
}

impl HessianBound {
    pub fn new(matrix: DMatrix<f64>) -> Result<Self> {
        if !matrix.is_square() {
            return Err(Error::InvalidArgument("Hessian bound must be square".into()));
        }
        if matrix.iter().any(|&m| !(m >= 0.0) || !m.is_finite()) {
            return Err(Error::InvalidArgument(
                "Hessian bound entries must be finite and non-negative".into(),
            ));
        }
        let row_sums: Vec<f64> = matrix.row_iter().map(|r| r.sum()).collect();
        let total = row_sums.iter().sum();
        Ok(Self {
            matrix,
            row_sums,
            total,
        })
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    /// `sum_j M_ij`, the slope of the linear bound for coordinate `i`.
    pub fn row_sum(&self, i: usize) -> f64 {
        self.row_sums[i]
    }

    /// `sum_ij M_ij`.
    pub fn total(&self) -> f64 {
        self.total
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }
}

/// Contract every target or base distribution implements.
pub trait TargetModel: Debug + Send + Sync {
    fn dim(&self) -> usize;

    /// Unnormalized log-density `log q(x)`.
    fn log_density(&self, x: &[f64]) -> f64;

    /// Writes `grad log q(x)` into `grad`.
    fn grad_log_density_into(&self, x: &[f64], grad: &mut [f64]);

    fn grad_log_density(&self, x: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; self.dim()];
        self.grad_log_density_into(x, &mut g);
        g
    }

    fn hessian_bound(&self) -> &HessianBound;

    /// Closed-form or enumerated moments, when known.
    fn exact_moments(&self) -> Option<Moments> {
        None
    }
}

/// Numerically stable `log(sum(exp(values)))`.
pub(crate) fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

pub(crate) fn check_dim(x: &[f64], d: usize) {
    debug_assert_eq!(x.len(), d, "position has wrong dimension");
}
