//! Fitting `kappa(beta) ~ 1 / Z(beta)` from estimates of
//! `E[log q(X) - log q0(X) | beta]` on a grid.
//!
//! `d/dbeta log Z(beta)` equals that conditional expectation, so the
//! cumulative trapezoid rule over the grid gives `log Z` up to a constant,
//! and a least-squares polynomial through those values gives `psi`.

use nalgebra::{DMatrix, DVector};

use crate::error::{ensure_all_finite, Error, Result};
use crate::models::TargetModel;
use crate::state::{ExtendedState, Horizon};
use crate::tempering::{GeometricPath, LogKappa};
use crate::zigzag::{discretize, run_zigzag_with_rng, PathSample};
use crate::rng::{chain_rng, random_sign};

/// Calibration degree used when none is given.
pub const DEFAULT_DEGREE: usize = 4;

/// `n` equally spaced points from `lo` to `hi` inclusive.
pub fn uniform_grid(lo: f64, hi: f64, n: usize) -> Result<Vec<f64>> {
    if n < 2 || !(lo < hi) || lo < 0.0 || hi > 1.0 {
        return Err(Error::InvalidArgument(format!(
            "grid needs n >= 2 and 0 <= lo < hi <= 1, got n = {n}, [{lo}, {hi}]"
        )));
    }
    Ok((0..n)
        .map(|k| lo + (hi - lo) * k as f64 / (n - 1) as f64)
        .collect())
}

/// Cumulative trapezoid integral of `ubar` over `grid`, starting at 0.
pub fn trapezoid_log_z(grid: &[f64], ubar: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(grid.len());
    let mut acc = 0.0;
    out.push(0.0);
    for k in 1..grid.len() {
        acc += 0.5 * (grid[k] - grid[k - 1]) * (ubar[k - 1] + ubar[k]);
        out.push(acc);
    }
    out
}

/// Least-squares fit of a degree-`degree` polynomial to the trapezoid
/// estimate of `log Z` on the grid.
pub fn calibrate_kappa(beta_grid: &[f64], ubar: &[f64], degree: usize) -> Result<LogKappa> {
    let n = beta_grid.len();
    if n < 2 {
        return Err(Error::InvalidArgument("calibration grid needs at least 2 points".into()));
    }
    if ubar.len() != n {
        return Err(Error::InvalidArgument(format!(
            "grid has {n} points but {} ubar values",
            ubar.len()
        )));
    }
    ensure_all_finite(beta_grid, "calibration grid")?;
    ensure_all_finite(ubar, "ubar estimates")?;
    if beta_grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::InvalidArgument("calibration grid must be strictly increasing".into()));
    }
    if degree + 1 > n {
        return Err(Error::InvalidArgument(format!(
            "degree {degree} needs at least {} grid points, got {n}",
            degree + 1
        )));
    }
    let log_z = trapezoid_log_z(beta_grid, ubar);
    let a = DMatrix::from_fn(n, degree + 1, |r, c| beta_grid[r].powi(c as i32));
    let y = DVector::from_column_slice(&log_z);
    let svd = a.svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    if !(smin > smax * 1e-12) {
        return Err(Error::Singular("calibration design matrix is rank deficient"));
    }
    let coef = svd
        .solve(&y, 0.0)
        .map_err(|_| Error::Singular("calibration least squares failed"))?;
    let psi: Vec<f64> = coef.iter().copied().collect();
    ensure_all_finite(&psi, "fitted kappa coefficients")?;
    Ok(LogKappa::new(psi))
}

/// Averages `log q(x) - log q0(x)` over samples binned to the nearest grid
/// point.
pub fn estimate_ubar(samples: &[PathSample], path: &GeometricPath, beta_grid: &[f64]) -> Result<Vec<f64>> {
    if beta_grid.is_empty() {
        return Err(Error::InvalidArgument("empty calibration grid".into()));
    }
    let mut sums = vec![0.0; beta_grid.len()];
    let mut counts = vec![0usize; beta_grid.len()];
    for s in samples {
        let k = nearest(beta_grid, s.beta);
        sums[k] += path.dbeta_log_density(&s.x);
        counts[k] += 1;
    }
    sums.iter()
        .zip(&counts)
        .enumerate()
        .map(|(k, (&s, &c))| {
            if c == 0 {
                Err(Error::EmptyBin {
                    index: k,
                    beta: beta_grid[k],
                })
            } else {
                Ok(s / c as f64)
            }
        })
        .collect()
}

fn nearest(grid: &[f64], beta: f64) -> usize {
    let mut best = 0;
    for (k, g) in grid.iter().enumerate() {
        if (g - beta).abs() < (grid[best] - beta).abs() {
            best = k;
        }
    }
    best
}

/// Settings for estimating `ubar` by separate runs at fixed beta.
#[derive(Debug, Clone, Copy)]
pub struct FixedGridRuns {
    pub horizon: Horizon,
    pub burnin_fraction: f64,
    pub dt: f64,
}

/// Estimates `ubar` at each grid point from an untempered Zig-Zag run on
/// `q(x, beta)` with beta held fixed. Grid point `k` uses the chain seeded
/// with `seeds(k)`.
pub fn fixed_grid_ubar(
    path: &GeometricPath,
    beta_grid: &[f64],
    start: &[f64],
    runs: FixedGridRuns,
    seeds: impl Fn(usize) -> u64,
) -> Result<Vec<f64>> {
    if !(0.0..1.0).contains(&runs.burnin_fraction) {
        return Err(Error::InvalidArgument(format!(
            "burn-in fraction must lie in [0, 1), got {}",
            runs.burnin_fraction
        )));
    }
    beta_grid
        .iter()
        .enumerate()
        .map(|(k, &beta)| {
            let model = path.at_beta(beta)?;
            let mut rng = chain_rng(seeds(k));
            let v = (0..model.dim()).map(|_| random_sign(&mut rng)).collect();
            let init = ExtendedState::untempered(start.to_vec(), v);
            let sk = run_zigzag_with_rng(&model, &init, runs.horizon, &mut rng)?;
            let samples = discretize(&sk, runs.dt, runs.burnin_fraction * sk.total_time)?;
            let total: f64 = samples.iter().map(|s| path.dbeta_log_density(&s.x)).sum();
            Ok(total / samples.len() as f64)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{gaussian_model, GaussianSpec};
    use crate::state::Mode;
    use std::sync::Arc;

    #[test]
    fn three_point_trapezoid_and_exact_fit() {
        let k = calibrate_kappa(&[0.0, 0.5, 1.0], &[0.0, 1.0, 2.0], 2).unwrap();
        assert_eq!(trapezoid_log_z(&[0.0, 0.5, 1.0], &[0.0, 1.0, 2.0]), vec![0.0, 0.25, 1.0]);
        let expect = [0.0, 0.0, 1.0];
        for (a, b) in k.psi.iter().zip(expect) {
            assert!((a - b).abs() < 1e-12, "{:?}", k.psi);
        }
        assert_eq!(k.left_limit_ratio, 1.0);
    }

    #[test]
    fn zero_ubar_gives_flat_kappa() {
        let grid = uniform_grid(0.0, 1.0, 15).unwrap();
        let k = calibrate_kappa(&grid, &vec![0.0; 15], 4).unwrap();
        assert!(k.psi.iter().all(|p| p.abs() < 1e-12));
    }

    #[test]
    fn bad_inputs() {
        assert!(calibrate_kappa(&[0.0, 0.5, 0.4], &[0.0; 3], 1).is_err());
        assert!(calibrate_kappa(&[0.0, 1.0], &[0.0; 2], 2).is_err());
        assert!(calibrate_kappa(&[0.0], &[0.0], 0).is_err());
    }

    #[test]
    fn fixed_grid_endpoints() {
        let g = uniform_grid(0.01, 0.99, 15).unwrap();
        assert_eq!(g.len(), 15);
        assert_eq!(g[0], 0.01);
        assert!((g[14] - 0.99).abs() < 1e-15);
        assert!((g[1] - g[0] - 0.07).abs() < 1e-15);
    }

    fn gauss_path(target_var: f64, base_var: f64) -> GeometricPath {
        GeometricPath::new(
            Arc::new(gaussian_model(&GaussianSpec::isotropic(vec![0.0], base_var)).unwrap()),
            Arc::new(gaussian_model(&GaussianSpec::isotropic(vec![0.0], target_var)).unwrap()),
        )
        .unwrap()
    }

    #[test]
    fn ubar_bins_and_empty_bins() {
        let p = gauss_path(1.0, 4.0);
        let at = |beta: f64| PathSample {
            t: 0.0,
            x: vec![2.0],
            beta,
            mode: Mode::Tempering,
        };
        let u = estimate_ubar(&[at(0.1), at(0.6), at(0.9)], &p, &[0.0, 0.5, 1.0]).unwrap();
        assert_eq!(u, vec![-1.5; 3]);
        let err = estimate_ubar(&[at(0.1)], &p, &[0.0, 1.0]).unwrap_err();
        assert!(matches!(err, Error::EmptyBin { index: 1, .. }));
        let same = gauss_path(1.0, 1.0);
        assert_eq!(estimate_ubar(&[at(0.2)], &same, &[0.0]).unwrap(), vec![0.0]);
    }

    #[test]
    fn gaussian_path_fit_matches_closed_form() {
        // q = exp(-x^2/2), q0 = exp(-x^2/8): q(x, beta) has precision
        // p(beta) = beta + (1 - beta)/4, so log Z = -1/2 log p + const and
        // E[log q - log q0 | beta] = -(3/8) / p(beta).
        let prec = |b: f64| b + (1.0 - b) / 4.0;
        let grid = uniform_grid(0.0, 1.0, 15).unwrap();
        let ubar: Vec<f64> = grid.iter().map(|&b| -0.375 / prec(b)).collect();
        let k = calibrate_kappa(&grid, &ubar, 4).unwrap();
        let exact = |b: f64| -0.5 * (prec(b) / prec(0.0)).ln();
        for i in 0..=100 {
            let b = i as f64 / 100.0;
            assert!((-k.log_kappa(b) - exact(b)).abs() < 0.05);
        }
    }
}
