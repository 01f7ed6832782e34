//! First event times of inhomogeneous Poisson processes.
//!
//! Rates that are (clipped) polynomials in the time `s` since the current
//! state are inverted exactly: the polynomial is split at its sign changes,
//! integrated in closed form on the positive pieces, and the integrated rate
//! is solved for `-log u` with Newton steps safeguarded by bisection. Other
//! rates are simulated by thinning against such a polynomial bound. The
//! bound constructors here cover plain Zig-Zag (linear Hessian bounds) and
//! the geometric tempering path.

use rand::Rng;

use crate::error::{ensure_all_finite, ensure_finite, Error, Result};
use crate::models::TargetModel;
use crate::poly;
use crate::rng::open01;
use crate::state::{ExtendedState, Mode};
use crate::tempering::{GeometricPath, LogKappa};

/// Default relative tolerance on the integrated rate when inverting.
pub const DEFAULT_TOL: f64 = 1e-10;

/// A proposal whose true rate exceeds `bound * (1 + BOUND_SLACK) + BOUND_SLACK_ABS`
/// is reported as a [`Error::BoundViolation`].
pub const BOUND_SLACK: f64 = 1e-9;
pub const BOUND_SLACK_ABS: f64 = 1e-12;

/// Upper rate `max(0, sum_k c_k s^k)`, consulted only on `[0, horizon]`.
#[derive(Debug, Clone, PartialEq)]
pub struct RateBound {
    pub coeffs: Vec<f64>,
    pub horizon: f64,
}

impl RateBound {
    pub fn new(coeffs: Vec<f64>, horizon: f64) -> Self {
        Self { coeffs, horizon }
    }

    pub fn unbounded(coeffs: Vec<f64>) -> Self {
        Self::new(coeffs, f64::INFINITY)
    }

    pub fn constant(rate: f64, horizon: f64) -> Self {
        Self::new(vec![rate], horizon)
    }

    #[inline]
    pub fn eval(&self, s: f64) -> f64 {
        poly::eval(&self.coeffs, s).max(0.0)
    }

    /// Bound for the process restarted `s` time units from now.
    pub fn shifted(&self, s: f64) -> Self {
        Self::new(poly::shift(&self.coeffs, s), self.horizon - s)
    }

    /// Whether a true rate value is consistent with this bound at `s`.
    pub fn dominates(&self, s: f64, rate: f64) -> bool {
        let b = self.eval(s);
        rate <= b * (1.0 + BOUND_SLACK) + BOUND_SLACK_ABS
    }
}

/// `-log(u) / rate`, or infinity for a zero rate.
pub fn first_event_constant(rate: f64, u: f64) -> Result<f64> {
    if !(u > 0.0 && u < 1.0) {
        return Err(Error::InvalidArgument(format!("u must lie in (0, 1), got {u}")));
    }
    if !(rate >= 0.0) || rate.is_nan() {
        return Err(Error::InvalidArgument(format!("rate must be >= 0, got {rate}")));
    }
    if rate == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(-u.ln() / rate)
}

/// Solves `int_0^t max(0, p(s)) ds = -log u` for `t` in `[0, horizon]`.
///
/// Returns `None` when the integrated rate over the whole horizon falls
/// short of `-log u`.
pub fn first_event_poly(bound: &RateBound, u: f64, tol: f64) -> Result<Option<f64>> {
    if !(u > 0.0 && u < 1.0) {
        return Err(Error::InvalidArgument(format!("u must lie in (0, 1), got {u}")));
    }
    if !(tol > 0.0) {
        return Err(Error::InvalidArgument(format!("tolerance must be > 0, got {tol}")));
    }
    ensure_all_finite(&bound.coeffs, "rate bound coefficients")?;
    if bound.horizon.is_nan() || bound.horizon < 0.0 {
        return Err(Error::InvalidArgument(format!(
            "bound horizon must be >= 0, got {}",
            bound.horizon
        )));
    }
    let p = poly::trim(&bound.coeffs);
    let horizon = bound.horizon;
    let target = -u.ln();
    if p.is_empty() || horizon == 0.0 {
        return Ok(None);
    }
    if p.len() == 1 {
        let c = p[0];
        if c <= 0.0 {
            return Ok(None);
        }
        let t = target / c;
        return Ok((t <= horizon).then_some(t));
    }

    let mut knots = vec![0.0];
    knots.extend(poly::sign_changes(p, 0.0, horizon));
    knots.push(horizon);
    if knots.windows(2).any(|w| !(w[1] >= w[0])) {
        return Err(Error::RootIsolation(format!(
            "unordered sign changes for coefficients {:?}",
            bound.coeffs
        )));
    }

    let abs_tol = tol * (1.0 + target);
    let mut accumulated = 0.0;
    for w in knots.windows(2) {
        let (a, b) = (w[0], w[1]);
        if b <= a {
            continue;
        }
        let probe = if b.is_finite() { 0.5 * (a + b) } else { a + 1.0 };
        if poly::eval(p, probe) <= 0.0 {
            continue;
        }
        // Work relative to the left end of the piece for accuracy.
        let local = poly::shift(p, a);
        let integral = poly::antiderivative(&local);
        let width = b - a;
        let mass = if width.is_finite() {
            poly::eval(&integral, width)
        } else {
            f64::INFINITY
        };
        let need = target - accumulated;
        if mass < need {
            accumulated += mass;
            continue;
        }
        let r = solve_increasing(&local, &integral, need, width, abs_tol)?;
        return Ok(Some(a + r));
    }
    Ok(None)
}

/// Finds `r` in `[0, width]` with `I(r) = need`, where `I` is the
/// antiderivative of a polynomial `p` positive on `(0, width)`.
fn solve_increasing(
    p: &[f64],
    integral: &[f64],
    need: f64,
    width: f64,
    abs_tol: f64,
) -> Result<f64> {
    let g = |r: f64| poly::eval(integral, r) - need;
    let mut hi = if width.is_finite() {
        width
    } else {
        let mut hi = 1.0;
        while g(hi) < 0.0 {
            hi *= 2.0;
            if !hi.is_finite() {
                return Err(Error::RootIsolation("unbounded integrated rate".into()));
            }
        }
        hi
    };
    let mut lo = 0.0;
    let mut r = match poly::eval(p, 0.0) {
        d if d > 0.0 => (need / d).min(hi),
        _ => 0.5 * hi,
    };
    for _ in 0..200 {
        let gr = g(r);
        if gr.abs() <= abs_tol {
            // one polishing Newton step when it stays inside the bracket
            let d = poly::eval(p, r);
            if d > 0.0 {
                let next = r - gr / d;
                if next >= lo && next <= hi && g(next).abs() <= gr.abs() {
                    return Ok(next);
                }
            }
            return Ok(r);
        }
        if gr < 0.0 {
            lo = r;
        } else {
            hi = r;
        }
        let d = poly::eval(p, r);
        let mut next = if d > 0.0 { r - gr / d } else { f64::NAN };
        if !(next > lo && next < hi) {
            next = 0.5 * (lo + hi);
        }
        if next == r || hi - lo <= f64::EPSILON * hi.abs().max(1.0) {
            return Ok(next);
        }
        r = next;
    }
    Ok(r)
}

/// Simulates the first event of `rate` by thinning against `bound`.
///
/// Candidates are drawn from the bound; a candidate at `s` is accepted with
/// probability `rate(s) / bound(s)`. After a rejection the bound clock is
/// restarted from `s` with the same bound, so the bound must hold on the
/// whole horizon. Returns the accepted time (or `None` past the horizon)
/// and the number of candidates examined.
pub fn thinned_first_event<F, R>(
    mut rate: F,
    bound: &RateBound,
    rng: &mut R,
    tol: f64,
) -> Result<(Option<f64>, u64)>
where
    F: FnMut(f64) -> f64,
    R: Rng + ?Sized,
{
    let mut origin = 0.0;
    let mut proposals = 0u64;
    loop {
        let local = if origin == 0.0 {
            bound.clone()
        } else {
            bound.shifted(origin)
        };
        let Some(dt) = first_event_poly(&local, open01(rng), tol)? else {
            return Ok((None, proposals));
        };
        let s = origin + dt;
        proposals += 1;
        let lambda = ensure_finite(rate(s), "thinned rate")?;
        let upper = bound.eval(s);
        if !bound.dominates(s, lambda) {
            return Err(Error::BoundViolation {
                clock: 0,
                s,
                rate: lambda,
                bound: upper,
            });
        }
        if open01(rng) * upper < lambda {
            return Ok((Some(s), proposals));
        }
        origin = s;
    }
}

/// Linear bounds `max(0, a_i + b_i s)` with `a_i = -v_i d_i log q(x)` and
/// `b_i = sum_j M_ij`, one per coordinate.
pub fn linear_rate_bound(model: &dyn TargetModel, x: &[f64], v: &[i8]) -> Result<Vec<RateBound>> {
    let grad = model.grad_log_density(x);
    ensure_all_finite(&grad, "gradient")?;
    let m = model.hessian_bound();
    Ok((0..x.len())
        .map(|i| linear_bound_from_gradient(grad[i], v[i], m.row_sum(i)))
        .collect())
}

#[inline]
pub(crate) fn linear_bound_from_gradient(grad_i: f64, v_i: i8, row_sum: f64) -> RateBound {
    RateBound::unbounded(vec![-f64::from(v_i) * grad_i, row_sum])
}

/// Log-densities and gradients of both ends of a geometric path at one
/// position.
#[derive(Debug, Clone)]
pub(crate) struct PathAnchor {
    pub log_q: f64,
    pub log_q0: f64,
    pub grad_q: Vec<f64>,
    pub grad_q0: Vec<f64>,
}

impl PathAnchor {
    pub(crate) fn at(path: &GeometricPath, x: &[f64]) -> Result<Self> {
        let log_q = ensure_finite(path.target().log_density(x), "target log-density")?;
        let log_q0 = ensure_finite(path.base().log_density(x), "base log-density")?;
        let grad_q = path.target().grad_log_density(x);
        let grad_q0 = path.base().grad_log_density(x);
        ensure_all_finite(&grad_q, "target gradient")?;
        ensure_all_finite(&grad_q0, "base gradient")?;
        Ok(Self {
            log_q,
            log_q0,
            grad_q,
            grad_q0,
        })
    }
}

fn require_tempered(state: &ExtendedState) -> Result<()> {
    if state.mode == Mode::Untempered {
        return Err(Error::InvalidArgument(
            "geometric-path bounds need a tempered state".into(),
        ));
    }
    Ok(())
}

/// Quadratic bound for the rate of coordinate `j` along the geometric path,
/// valid until beta reaches a boundary.
pub fn geometric_x_bound(path: &GeometricPath, state: &ExtendedState, j: usize) -> Result<RateBound> {
    require_tempered(state)?;
    let anchor = PathAnchor::at(path, &state.x)?;
    Ok(geometric_x_bound_at(path, &anchor, state, j))
}

pub(crate) fn geometric_x_bound_at(
    path: &GeometricPath,
    anchor: &PathAnchor,
    state: &ExtendedState,
    j: usize,
) -> RateBound {
    let vj = f64::from(state.v[j]);
    let vb = f64::from(state.v_beta);
    let beta = state.beta;
    let a_q = -vj * anchor.grad_q[j];
    let a_q0 = -vj * anchor.grad_q0[j];
    let b_q = path.target().hessian_bound().row_sum(j);
    let b_q0 = path.base().hessian_bound().row_sum(j);
    let a = beta * a_q + (1.0 - beta) * a_q0;
    let b = vb * (a_q - a_q0) + beta * b_q + (1.0 - beta) * b_q0;
    let c = vb * (b_q - b_q0);
    RateBound::new(vec![a, b, c], state.time_to_beta_boundary())
}

/// Polynomial bound for the inverse-temperature rate along the geometric
/// path, valid until beta reaches a boundary.
pub fn geometric_beta_bound(
    path: &GeometricPath,
    kappa: &LogKappa,
    state: &ExtendedState,
) -> Result<RateBound> {
    require_tempered(state)?;
    let anchor = PathAnchor::at(path, &state.x)?;
    Ok(geometric_beta_bound_at(path, kappa, &anchor, state))
}

pub(crate) fn geometric_beta_bound_at(
    path: &GeometricPath,
    kappa: &LogKappa,
    anchor: &PathAnchor,
    state: &ExtendedState,
) -> RateBound {
    let vb = f64::from(state.v_beta);
    // -v_beta * d/dbeta log kappa(beta + s v_beta), expanded in s
    let mut coeffs = kappa.rate_polynomial(state.beta, state.v_beta);
    if coeffs.len() < 3 {
        coeffs.resize(3, 0.0);
    }
    let vel_dot = |g: &[f64]| -> f64 {
        g.iter()
            .zip(&state.v)
            .map(|(g, &v)| g * f64::from(v))
            .sum()
    };
    // -v_beta log q(x + s v) <= a_q + b_q s + c_q s^2, and the mirror image
    // for +v_beta log q0(x + s v).
    let a_q = -vb * anchor.log_q;
    let b_q = -vb * vel_dot(&anchor.grad_q);
    let c_q = 0.5 * path.target().hessian_bound().total();
    let a_q0 = vb * anchor.log_q0;
    let b_q0 = vb * vel_dot(&anchor.grad_q0);
    let c_q0 = 0.5 * path.base().hessian_bound().total();
    coeffs[0] += a_q + a_q0;
    coeffs[1] += b_q + b_q0;
    coeffs[2] += c_q + c_q0;
    RateBound::new(coeffs, state.time_to_beta_boundary())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{gaussian_model, GaussianSpec};
    use crate::rng::chain_rng;
    use std::sync::Arc;

    #[test]
    fn constant_rate_inversion() {
        let e = (-1.0f64).exp();
        assert!((first_event_constant(2.0, e).unwrap() - 0.5).abs() < 1e-15);
        assert_eq!(first_event_constant(0.0, 0.3).unwrap(), f64::INFINITY);
        assert!(first_event_constant(1.0, 0.0).is_err());
        assert!(first_event_constant(1.0, 1.0).is_err());
        assert!(first_event_constant(-1.0, 0.5).is_err());
    }

    #[test]
    fn polynomial_inversion_examples() {
        let e1 = (-1.0f64).exp();
        let t = first_event_poly(&RateBound::unbounded(vec![2.0]), e1, DEFAULT_TOL)
            .unwrap()
            .unwrap();
        assert!((t - 0.5).abs() < 1e-14);

        let t = first_event_poly(&RateBound::unbounded(vec![0.0, 1.0]), (-2.0f64).exp(), DEFAULT_TOL)
            .unwrap()
            .unwrap();
        assert!((t - 2.0).abs() < 1e-12);

        let t = first_event_poly(&RateBound::unbounded(vec![-1.0, 1.0]), (-0.5f64).exp(), DEFAULT_TOL)
            .unwrap()
            .unwrap();
        assert!((t - 2.0).abs() < 1e-12);
    }

    #[test]
    fn finite_horizon_without_enough_mass_gives_none() {
        let b = RateBound::new(vec![1.0], 0.5);
        // needs integrated rate 1 but only 0.5 is available
        assert_eq!(first_event_poly(&b, (-1.0f64).exp(), DEFAULT_TOL).unwrap(), None);
        let neg = RateBound::unbounded(vec![-1.0, -1.0]);
        assert_eq!(first_event_poly(&neg, 0.5, DEFAULT_TOL).unwrap(), None);
        let falling = RateBound::unbounded(vec![1.0, -1.0]); // total mass 1/2
        assert_eq!(first_event_poly(&falling, (-1.0f64).exp(), DEFAULT_TOL).unwrap(), None);
        let t = first_event_poly(&falling, (-0.375f64).exp(), DEFAULT_TOL).unwrap().unwrap();
        assert!((t - 0.5).abs() < 1e-12);
    }

    #[test]
    fn rejects_nonfinite_coefficients() {
        let b = RateBound::unbounded(vec![f64::NAN, 1.0]);
        assert!(matches!(first_event_poly(&b, 0.5, DEFAULT_TOL), Err(Error::NonFinite(_))));
    }

    #[test]
    fn tight_bound_accepts_first_proposal() {
        let mut rng = chain_rng(3);
        let bound = RateBound::unbounded(vec![0.5, 2.0]);
        for _ in 0..100 {
            let (t, n) = thinned_first_event(|s| bound.eval(s), &bound, &mut rng, DEFAULT_TOL).unwrap();
            assert!(t.is_some());
            assert_eq!(n, 1);
        }
    }

    #[test]
    fn zero_rate_on_finite_horizon_gives_none() {
        let mut rng = chain_rng(4);
        let bound = RateBound::constant(3.0, 10.0);
        let (t, n) = thinned_first_event(|_| 0.0, &bound, &mut rng, DEFAULT_TOL).unwrap();
        assert_eq!(t, None);
        assert!(n > 0);
    }

    #[test]
    fn violation_is_reported() {
        let mut rng = chain_rng(5);
        let bound = RateBound::unbounded(vec![1.0]);
        let err = thinned_first_event(|_| 2.0, &bound, &mut rng, DEFAULT_TOL).unwrap_err();
        assert!(matches!(err, Error::BoundViolation { .. }));
    }

    #[test]
    fn linear_bound_gaussian_examples() {
        let m = gaussian_model(&GaussianSpec::standard(1)).unwrap();
        let b = linear_rate_bound(&m, &[2.0], &[1]).unwrap();
        assert_eq!(b[0].coeffs, vec![2.0, 1.0]);
        let b = linear_rate_bound(&m, &[-3.0], &[1]).unwrap();
        assert_eq!(b[0].coeffs, vec![-3.0, 1.0]);
        assert_eq!(b[0].eval(2.0), 0.0);

        let m2 = gaussian_model(&GaussianSpec::isotropic(vec![0.0, 0.0], 2.0)).unwrap();
        let b = linear_rate_bound(&m2, &[1.0, 0.0], &[1, 1]).unwrap();
        let expect = [[0.5, 0.5], [0.0, 0.5]];
        for (bound, e) in b.iter().zip(expect) {
            for (c, e) in bound.coeffs.iter().zip(e) {
                assert!((c - e).abs() < 1e-15);
            }
        }
    }

    fn path(target_var: f64, base_var: f64) -> GeometricPath {
        GeometricPath::new(
            Arc::new(gaussian_model(&GaussianSpec::isotropic(vec![0.0], base_var)).unwrap()),
            Arc::new(gaussian_model(&GaussianSpec::isotropic(vec![0.0], target_var)).unwrap()),
        )
        .unwrap()
    }

    #[test]
    fn x_bound_degenerates_at_the_ends() {
        let p = path(1.0, 4.0);
        let x = vec![1.5];
        let on_target = ExtendedState::on_target(x.clone(), vec![1]);
        let linear = linear_rate_bound(p.target(), &x, &[1]).unwrap();
        let xb = geometric_x_bound(&p, &on_target, 0).unwrap();
        assert_eq!(&xb.coeffs[..2], &linear[0].coeffs[..]);
        assert_eq!(xb.coeffs[2], 0.0);

        let mut at_base = ExtendedState::tempering(x.clone(), vec![1], 0.0, 1);
        at_base.v_beta = 0;
        let linear0 = linear_rate_bound(p.base(), &x, &[1]).unwrap();
        let xb0 = geometric_x_bound(&p, &at_base, 0).unwrap();
        assert_eq!(&xb0.coeffs[..2], &linear0[0].coeffs[..]);

        let same = path(1.0, 1.0);
        let s = ExtendedState::tempering(x, vec![-1], 0.3, 1);
        let b = geometric_x_bound(&same, &s, 0).unwrap();
        assert!((b.coeffs[1] - 1.0).abs() < 1e-15);
        assert_eq!(b.coeffs[2], 0.0);
        assert_eq!(b.horizon, 0.7);
    }

    #[test]
    fn beta_bound_includes_kappa_slope() {
        let same = path(1.0, 1.0);
        let kappa = LogKappa::new(vec![0.0, 0.0, 1.0]);
        let s = ExtendedState::tempering(vec![0.0], vec![1], 0.25, 1);
        let b = geometric_beta_bound(&same, &kappa, &s).unwrap();
        // v_beta * 2 psi_2 (beta + s) = 0.5 + 2 s, plus c_q + c_q0 = 1
        assert!((b.coeffs[0] - 0.5).abs() < 1e-15);
        assert!((b.coeffs[1] - 2.0).abs() < 1e-15);
        assert!((b.coeffs[2] - 1.0).abs() < 1e-15);
    }
}
