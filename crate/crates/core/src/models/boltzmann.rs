use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{check_dim, log_sum_exp, HessianBound, Moments, TargetModel};
use crate::error::{Error, Result};
use crate::rng::chain_rng;

/// Largest binary dimension for which moments are enumerated.
pub const MAX_ENUMERATION_DIM: usize = 20;

/// Boltzmann machine `q(s) ~ exp(s'Ws/2 + s'b)` on `{-1,1}^{d_b}` together
/// with the factor `Q Q' = W + D` that defines its Gaussian relaxation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoltzmannSpec {
    pub w: Vec<Vec<f64>>,
    pub b: Vec<f64>,
    /// Diagonal of `D`.
    pub d: Vec<f64>,
    /// `d_b x d_r`, row `k` is `q_k`.
    pub q: Vec<Vec<f64>>,
}

impl BoltzmannSpec {
    pub fn binary_dim(&self) -> usize {
        self.b.len()
    }

    pub fn relaxed_dim(&self) -> usize {
        self.q.first().map_or(0, Vec::len)
    }

    fn q_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.binary_dim(), self.relaxed_dim(), |i, j| self.q[i][j])
    }

    fn w_matrix(&self) -> DMatrix<f64> {
        let n = self.binary_dim();
        DMatrix::from_fn(n, n, |i, j| self.w[i][j])
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.b.len();
        if n == 0 {
            return Err(Error::InvalidArgument("Boltzmann machine needs d_b >= 1".into()));
        }
        if self.w.len() != n || self.w.iter().any(|r| r.len() != n) || self.d.len() != n {
            return Err(Error::InvalidArgument(format!(
                "W must be {n}x{n} and D must have {n} entries"
            )));
        }
        let dr = self.relaxed_dim();
        if self.q.len() != n || dr == 0 || self.q.iter().any(|r| r.len() != dr) {
            return Err(Error::InvalidArgument(format!(
                "Q must be {n} x d_r with d_r >= 1"
            )));
        }
        let w = self.w_matrix();
        if w.iter().chain(self.b.iter()).chain(self.d.iter()).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("Boltzmann spec"));
        }
        if (&w - w.transpose()).amax() > 1e-12 * w.amax().max(1.0) {
            return Err(Error::InvalidArgument("W must be symmetric".into()));
        }
        if (0..n).any(|i| w[(i, i)] != 0.0) {
            return Err(Error::InvalidArgument("W must have a zero diagonal".into()));
        }
        let q = self.q_matrix();
        let target = w + DMatrix::from_diagonal(&self.d.clone().into());
        let err = (&q * q.transpose() - target).amax();
        if err > 1e-10 * (1.0 + q.amax().powi(2)) {
            return Err(Error::InvalidArgument(format!(
                "Q Q' differs from W + D by {err:e}"
            )));
        }
        Ok(())
    }
}

/// Picks `D = (max(0, -lambda_min(W)) + jitter) I` and factors `W + D`.
pub fn build_q(w: &[Vec<f64>], b: &[f64], jitter: f64) -> Result<BoltzmannSpec> {
    let n = b.len();
    if w.len() != n || w.iter().any(|r| r.len() != n) {
        return Err(Error::InvalidArgument(format!("W must be {n}x{n}")));
    }
    if !(jitter >= 0.0) || !jitter.is_finite() {
        return Err(Error::InvalidArgument("jitter must be finite and >= 0".into()));
    }
    let wm = DMatrix::from_fn(n, n, |i, j| w[i][j]);
    let lambda_min = wm
        .clone()
        .symmetric_eigenvalues()
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min);
    let shift = (-lambda_min).max(0.0) + jitter;
    let a = &wm + DMatrix::identity(n, n) * shift;
    let q = match a.clone().cholesky() {
        Some(c) => c.l(),
        None => {
            let eig = a.symmetric_eigen();
            let sqrt_vals = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
            &eig.eigenvectors * DMatrix::from_diagonal(&sqrt_vals)
        }
    };
    let spec = BoltzmannSpec {
        w: w.to_vec(),
        b: b.to_vec(),
        d: vec![shift; n],
        q: q.row_iter().map(|r| r.iter().copied().collect()).collect(),
    };
    spec.validate().map_err(|e| match e {
        Error::InvalidArgument(m) => Error::Singular(if m.contains("Q Q'") {
            "factorization of W + D failed"
        } else {
            "invalid Boltzmann machine"
        }),
        other => other,
    })?;
    Ok(spec)
}

/// Seeded random machine: symmetric `W` with zero diagonal and i.i.d.
/// `N(0, scale^2)` off-diagonal entries, and `b ~ N(0, bias_scale^2)`.
pub fn random_machine(d_b: usize, scale: f64, bias_scale: f64, seed: u64) -> (Vec<Vec<f64>>, Vec<f64>) {
    let mut rng = chain_rng(seed);
    let mut w = vec![vec![0.0; d_b]; d_b];
    for i in 0..d_b {
        for j in (i + 1)..d_b {
            let v = scale * rng.sample::<f64, _>(StandardNormal);
            w[i][j] = v;
            w[j][i] = v;
        }
    }
    let b = (0..d_b)
        .map(|_| bias_scale * rng.sample::<f64, _>(StandardNormal))
        .collect();
    (w, b)
}

/// Continuous relaxation on `R^{d_r}`:
/// `log q(x) = -|x|^2/2 + sum_k log cosh(q_k'x + b_k)`.
/// The constant `log(2^{d_b} / ((2 pi)^{d_r/2} Z_b exp(tr(D)/2)))` is dropped.
#[derive(Debug, Clone)]
pub struct BoltzmannModel {
    spec: BoltzmannSpec,
    q: DMatrix<f64>,
    bound: HessianBound,
    moments: Option<BoltzmannMoments>,
}

pub fn boltzmann_relaxation_model(spec: &BoltzmannSpec) -> Result<BoltzmannModel> {
    spec.validate()?;
    let q = spec.q_matrix();
    let dr = q.ncols();
    let mut upper = DMatrix::<f64>::identity(dr, dr);
    let mut lower = DMatrix::<f64>::zeros(dr, dr);
    for row in q.row_iter() {
        for i in 0..dr {
            for j in 0..dr {
                let outer = row[i] * row[j];
                upper[(i, j)] -= outer.min(0.0);
                lower[(i, j)] -= outer.max(0.0);
            }
        }
    }
    let m = upper.zip_map(&lower, |u, l| u.abs().max(l.abs()));
    let moments = if spec.binary_dim() <= MAX_ENUMERATION_DIM {
        Some(boltzmann_exact_moments(spec)?)
    } else {
        None
    };
    Ok(BoltzmannModel {
        spec: spec.clone(),
        q,
        bound: HessianBound::new(m)?,
        moments,
    })
}

impl BoltzmannModel {
    pub fn spec(&self) -> &BoltzmannSpec {
        &self.spec
    }

    /// `H(x) = I - sum_k q_k q_k' sech^2(q_k'x + b_k)`, the Hessian of `-log q`.
    pub fn hessian(&self, x: &[f64]) -> DMatrix<f64> {
        let dr = self.q.ncols();
        let mut h = DMatrix::<f64>::identity(dr, dr);
        for (k, row) in self.q.row_iter().enumerate() {
            let a = row.iter().zip(x).map(|(q, x)| q * x).sum::<f64>() + self.spec.b[k];
            let sech2 = 1.0 / a.cosh().powi(2);
            for i in 0..dr {
                for j in 0..dr {
                    h[(i, j)] -= row[i] * row[j] * sech2;
                }
            }
        }
        h
    }

    pub fn moments(&self) -> Option<&BoltzmannMoments> {
        self.moments.as_ref()
    }
}

fn log_cosh(t: f64) -> f64 {
    let a = t.abs();
    a + (-2.0 * a).exp().ln_1p() - std::f64::consts::LN_2
}

impl TargetModel for BoltzmannModel {
    fn dim(&self) -> usize {
        self.q.ncols()
    }

    fn log_density(&self, x: &[f64]) -> f64 {
        check_dim(x, self.q.ncols());
        let mut lp = -0.5 * x.iter().map(|v| v * v).sum::<f64>();
        for (k, row) in self.q.row_iter().enumerate() {
            let a = row.iter().zip(x).map(|(q, x)| q * x).sum::<f64>() + self.spec.b[k];
            lp += log_cosh(a);
        }
        lp
    }

    fn grad_log_density_into(&self, x: &[f64], grad: &mut [f64]) {
        check_dim(x, self.q.ncols());
        for (g, xi) in grad.iter_mut().zip(x) {
            *g = -xi;
        }
        for (k, row) in self.q.row_iter().enumerate() {
            let a = row.iter().zip(x).map(|(q, x)| q * x).sum::<f64>() + self.spec.b[k];
            let t = a.tanh();
            for (g, q) in grad.iter_mut().zip(row.iter()) {
                *g += q * t;
            }
        }
    }

    fn hessian_bound(&self) -> &HessianBound {
        &self.bound
    }

    fn exact_moments(&self) -> Option<Moments> {
        self.moments.as_ref().map(|m| Moments {
            mean: m.ex.clone(),
            second: (0..m.ex.len()).map(|i| m.exx[i][i]).collect(),
        })
    }
}

/// Enumerated moments of the binary machine and of its relaxation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoltzmannMoments {
    pub es: Vec<f64>,
    pub ess: Vec<Vec<f64>>,
    pub ex: Vec<f64>,
    pub exx: Vec<Vec<f64>>,
}

/// Exact moments by summing over all `2^{d_b}` sign vectors. The relaxation
/// has `x | s ~ N(Q's, I)`, so `E[X] = Q'E[S]` and `E[XX'] = Q'E[SS']Q + I`.
pub fn boltzmann_exact_moments(spec: &BoltzmannSpec) -> Result<BoltzmannMoments> {
    let n = spec.binary_dim();
    if n > MAX_ENUMERATION_DIM {
        return Err(Error::InvalidArgument(format!(
            "enumeration over 2^{n} states exceeds the d_b <= {MAX_ENUMERATION_DIM} limit"
        )));
    }
    if spec.w.len() != n || spec.w.iter().any(|r| r.len() != n) {
        return Err(Error::InvalidArgument(format!("W must be {n}x{n}")));
    }
    let states = 1usize << n;
    let sign = |code: usize, i: usize| if code >> i & 1 == 1 { 1.0 } else { -1.0 };
    let log_w: Vec<f64> = (0..states)
        .map(|code| {
            let mut e = 0.0;
            for i in 0..n {
                let si = sign(code, i);
                e += si * spec.b[i];
                for j in 0..n {
                    e += 0.5 * si * spec.w[i][j] * sign(code, j);
                }
            }
            e
        })
        .collect();
    let log_z = log_sum_exp(&log_w);
    let mut es = vec![0.0; n];
    let mut ess = DMatrix::<f64>::zeros(n, n);
    for (code, lw) in log_w.iter().enumerate() {
        let p = (lw - log_z).exp();
        for i in 0..n {
            let si = sign(code, i);
            es[i] += p * si;
            for j in 0..n {
                ess[(i, j)] += p * si * sign(code, j);
            }
        }
    }
    let q = spec.q_matrix();
    let dr = q.ncols();
    let es_vec = nalgebra::DVector::from_vec(es.clone());
    let ex = q.transpose() * es_vec;
    let exx = q.transpose() * &ess * &q + DMatrix::<f64>::identity(dr, dr);
    Ok(BoltzmannMoments {
        es,
        ess: ess.row_iter().map(|r| r.iter().copied().collect()).collect(),
        ex: ex.iter().copied().collect(),
        exx: exx.row_iter().map(|r| r.iter().copied().collect()).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn zeros(n: usize) -> Vec<Vec<f64>> {
        vec![vec![0.0; n]; n]
    }

    #[test]
    fn zero_machine_factor_is_scaled_identity() {
        let spec = build_q(&zeros(3), &[0.0; 3], 0.25).unwrap();
        assert_eq!(spec.d, vec![0.25; 3]);
        for i in 0..3 {
            for j in 0..3 {
                let expect = if i == j { 0.5 } else { 0.0 };
                assert!((spec.q[i][j] - expect).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn shift_uses_smallest_eigenvalue() {
        // eigenvalues of [[0,2],[2,0]] are +-2
        let w = vec![vec![0.0, 2.0], vec![2.0, 0.0]];
        let spec = build_q(&w, &[0.0, 0.0], 0.1).unwrap();
        assert!((spec.d[0] - 2.1).abs() < 1e-12);
    }

    #[test]
    fn factor_reproduces_w_plus_d() {
        let (w, b) = random_machine(8, 0.7, 0.3, 11);
        let spec = build_q(&w, &b, 0.0).unwrap();
        let q = spec.q_matrix();
        let target = spec.w_matrix() + DMatrix::from_diagonal(&spec.d.clone().into());
        assert!((&q * q.transpose() - target).amax() < 1e-10);
    }

    #[test]
    fn degenerate_relaxation_is_standard_gaussian() {
        let spec = BoltzmannSpec {
            w: zeros(2),
            b: vec![0.0; 2],
            d: vec![0.0; 2],
            q: zeros(2),
        };
        let m = boltzmann_relaxation_model(&spec).unwrap();
        assert_eq!(m.grad_log_density(&[1.0, -2.0]), vec![-1.0, 2.0]);
        let bound = m.hessian_bound().matrix();
        assert_eq!(bound, &DMatrix::<f64>::identity(2, 2));
    }

    #[test]
    fn symmetric_single_unit_has_zero_gradient_at_origin() {
        let spec = BoltzmannSpec {
            w: zeros(1),
            b: vec![0.0],
            d: vec![1.0],
            q: vec![vec![1.0]],
        };
        let m = boltzmann_relaxation_model(&spec).unwrap();
        assert_eq!(m.grad_log_density(&[0.0]), vec![0.0]);
    }

    #[test]
    fn enumeration_of_independent_signs() {
        let spec = build_q(&zeros(3), &[0.0; 3], 1.0).unwrap();
        let mo = boltzmann_exact_moments(&spec).unwrap();
        for i in 0..3 {
            assert!(mo.es[i].abs() < 1e-15);
            for j in 0..3 {
                let e = if i == j { 1.0 } else { 0.0 };
                assert!((mo.ess[i][j] - e).abs() < 1e-14);
                // Q = I here so E[XX'] = Q'Q + I = 2I
                assert!((mo.exx[i][j] - 2.0 * e).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn single_biased_unit() {
        let spec = build_q(&zeros(1), &[1.0], 1.0).unwrap();
        let mo = boltzmann_exact_moments(&spec).unwrap();
        assert!((mo.es[0] - 1f64.tanh()).abs() < 1e-15);
        assert!((mo.es[0] - 0.7616).abs() < 1e-4);
    }

    #[test]
    fn enumeration_guard() {
        let spec = BoltzmannSpec {
            w: zeros(21),
            b: vec![0.0; 21],
            d: vec![1.0; 21],
            q: zeros(21),
        };
        assert!(boltzmann_exact_moments(&spec).is_err());
    }

    #[test]
    fn log_cosh_is_stable() {
        assert!((log_cosh(0.3) - 0.3f64.cosh().ln()).abs() < 1e-15);
        assert!((log_cosh(800.0) - (800.0 - std::f64::consts::LN_2)).abs() < 1e-12);
    }
}
