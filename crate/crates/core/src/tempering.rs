//! Continuously-tempered Zig-Zag with a point mass at beta = 1.
//!
//! The augmented target is
//!
//! ```text
//! omega(dx, dbeta) ~ (1 - alpha) kappa(beta) q(x, beta) dx dbeta
//!                  + alpha kappa(1) q(x) dx delta_1(dbeta),
//! q(x, beta) = q0(x)^(1 - beta) q(x)^beta.
//! ```
//!
//! In tempering mode the process is a Zig-Zag on `(x, beta)`. When beta
//! reaches 1 its velocity is set to 0 and the process runs a plain Zig-Zag
//! on `q` until an independent exponential clock of rate
//! `eta = (kappa(1-)/kappa(1)) (1 - alpha) / (2 alpha)` rings, after which
//! beta leaves with velocity -1. At beta = 0 the beta velocity reflects.
//! With `alpha = 0` there is no point mass and beta also reflects at 1.

use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{ensure_all_finite, ensure_finite, Error, Result};
use crate::event_times::{
    first_event_poly, geometric_beta_bound_at, geometric_x_bound_at, linear_bound_from_gradient,
    PathAnchor, RateBound, DEFAULT_TOL,
};
use crate::models::{HessianBound, TargetModel};
use crate::rng::{chain_rng, open01, ChainRng};
use crate::state::{EventKind, ExtendedState, Horizon, Mode, Recorder, Skeleton};

/// Geometric interpolation `log q(x, beta) = (1 - beta) log q0(x) + beta log q(x)`.
#[derive(Debug, Clone)]
pub struct GeometricPath {
    base: Arc<dyn TargetModel>,
    target: Arc<dyn TargetModel>,
}

impl GeometricPath {
    pub fn new(base: Arc<dyn TargetModel>, target: Arc<dyn TargetModel>) -> Result<Self> {
        if base.dim() != target.dim() {
            return Err(Error::InvalidArgument(format!(
                "base dimension {} differs from target dimension {}",
                base.dim(),
                target.dim()
            )));
        }
        Ok(Self { base, target })
    }

    pub fn dim(&self) -> usize {
        self.target.dim()
    }

    pub fn base(&self) -> &dyn TargetModel {
        self.base.as_ref()
    }

    pub fn target(&self) -> &dyn TargetModel {
        self.target.as_ref()
    }

    pub fn log_density(&self, x: &[f64], beta: f64) -> f64 {
        (1.0 - beta) * self.base.log_density(x) + beta * self.target.log_density(x)
    }

    /// `d/dbeta log q(x, beta) = log q(x) - log q0(x)`.
    pub fn dbeta_log_density(&self, x: &[f64]) -> f64 {
        self.target.log_density(x) - self.base.log_density(x)
    }

    /// The tempered density at a fixed inverse temperature, as a model.
    pub fn at_beta(&self, beta: f64) -> Result<FixedBetaModel> {
        if !(0.0..=1.0).contains(&beta) {
            return Err(Error::InvalidArgument(format!("beta must lie in [0, 1], got {beta}")));
        }
        let m = self.target.hessian_bound().matrix() * beta
            + self.base.hessian_bound().matrix() * (1.0 - beta);
        Ok(FixedBetaModel {
            path: self.clone(),
            beta,
            bound: HessianBound::new(m)?,
        })
    }
}

/// `q(x, beta)` at a fixed `beta`; its Hessian bound is the convex
/// combination of the two end-point bounds.
#[derive(Debug, Clone)]
pub struct FixedBetaModel {
    path: GeometricPath,
    beta: f64,
    bound: HessianBound,
}

impl FixedBetaModel {
    pub fn beta(&self) -> f64 {
        self.beta
    }
}

impl TargetModel for FixedBetaModel {
    fn dim(&self) -> usize {
        self.path.dim()
    }

    fn log_density(&self, x: &[f64]) -> f64 {
        self.path.log_density(x, self.beta)
    }

    fn grad_log_density_into(&self, x: &[f64], grad: &mut [f64]) {
        let mut g0 = vec![0.0; grad.len()];
        self.path.target.grad_log_density_into(x, grad);
        self.path.base.grad_log_density_into(x, &mut g0);
        for (g, g0) in grad.iter_mut().zip(g0) {
            *g = self.beta * *g + (1.0 - self.beta) * g0;
        }
    }

    fn hessian_bound(&self) -> &HessianBound {
        &self.bound
    }
}

/// `kappa(beta) = exp(-sum_k psi_k beta^k)` on `[0, 1)`, plus the ratio
/// `kappa(1-) / kappa(1)` used by the exit rate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogKappa {
    pub psi: Vec<f64>,
    #[serde(default = "one")]
    pub left_limit_ratio: f64,
}

fn one() -> f64 {
    1.0
}

impl LogKappa {
    pub fn new(psi: Vec<f64>) -> Self {
        Self {
            psi,
            left_limit_ratio: 1.0,
        }
    }

    /// `kappa` constant in beta.
    pub fn flat() -> Self {
        Self::new(Vec::new())
    }

    /// `kappa(beta) ~ xi^(1 - beta)`, the family for which the
    /// importance-sampling estimator applies.
    pub fn from_xi(xi: f64) -> Result<Self> {
        if !(xi > 0.0) || !xi.is_finite() {
            return Err(Error::InvalidArgument(format!("xi must be positive, got {xi}")));
        }
        let l = xi.ln();
        Ok(Self::new(vec![-l, l]))
    }

    pub fn validate(&self) -> Result<()> {
        ensure_all_finite(&self.psi, "kappa coefficients")?;
        if !(self.left_limit_ratio > 0.0) || !self.left_limit_ratio.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "kappa left-limit ratio must be positive, got {}",
                self.left_limit_ratio
            )));
        }
        Ok(())
    }

    pub fn log_kappa(&self, beta: f64) -> f64 {
        -crate::poly::eval(&self.psi, beta)
    }

    /// `d/dbeta log kappa(beta) = -sum_k k psi_k beta^(k-1)`.
    pub fn dlog_kappa(&self, beta: f64) -> f64 {
        -crate::poly::eval(&crate::poly::derivative(&self.psi), beta)
    }

    /// Coefficients in `s` of `-v_beta d/dbeta log kappa(beta + s v_beta)`.
    pub fn rate_polynomial(&self, beta: f64, v_beta: i8) -> Vec<f64> {
        let vb = f64::from(v_beta);
        let slope = crate::poly::derivative(&self.psi);
        // p(beta + vb s) expanded around s = 0
        let shifted = crate::poly::shift(&slope, beta);
        shifted
            .iter()
            .enumerate()
            .map(|(r, c)| vb * c * vb.powi(r as i32))
            .collect()
    }
}

/// Point-mass weight, kappa and path. `alpha = 0` selects the regime with
/// no point mass, where beta reflects at 1 as well as at 0.
#[derive(Debug, Clone)]
pub struct TemperingConfig {
    pub alpha: f64,
    pub kappa: LogKappa,
    pub path: GeometricPath,
}

impl TemperingConfig {
    pub fn new(alpha: f64, kappa: LogKappa, path: GeometricPath) -> Result<Self> {
        if !(0.0..=1.0).contains(&alpha) {
            return Err(Error::InvalidArgument(format!("alpha must lie in [0, 1], got {alpha}")));
        }
        kappa.validate()?;
        Ok(Self { alpha, kappa, path })
    }

    pub fn has_point_mass(&self) -> bool {
        self.alpha > 0.0
    }
}

/// Exit rate from the point mass, `(kappa(1-)/kappa(1)) (1 - alpha) / (2 alpha)`.
pub fn exit_rate(config: &TemperingConfig) -> Result<f64> {
    exit_rate_for(config.alpha, config.kappa.left_limit_ratio)
}

pub fn exit_rate_for(alpha: f64, left_limit_ratio: f64) -> Result<f64> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "exit rate needs alpha in (0, 1], got {alpha}"
        )));
    }
    Ok(left_limit_ratio * (1.0 - alpha) / (2.0 * alpha))
}

/// Event rates at `state`: `d` position rates followed, in tempering mode,
/// by the inverse-temperature rate.
pub fn tempered_rates(state: &ExtendedState, config: &TemperingConfig) -> Result<Vec<f64>> {
    let anchor = PathAnchor::at(&config.path, &state.x)?;
    match state.mode {
        Mode::Tempering => {
            let mut rates: Vec<f64> = (0..state.dim())
                .map(|j| x_rate(&anchor, state, j))
                .collect();
            rates.push(beta_rate(&anchor, &config.kappa, state));
            Ok(rates)
        }
        Mode::Target => Ok((0..state.dim())
            .map(|j| (-f64::from(state.v[j]) * anchor.grad_q[j]).max(0.0))
            .collect()),
        Mode::Untempered => Err(Error::InvalidArgument(
            "tempered rates need a tempered state".into(),
        )),
    }
}

#[inline]
fn x_rate(anchor: &PathAnchor, state: &ExtendedState, j: usize) -> f64 {
    let g = state.beta * anchor.grad_q[j] + (1.0 - state.beta) * anchor.grad_q0[j];
    (-f64::from(state.v[j]) * g).max(0.0)
}

#[inline]
fn beta_rate(anchor: &PathAnchor, kappa: &LogKappa, state: &ExtendedState) -> f64 {
    let slope = anchor.log_q - anchor.log_q0 + kappa.dlog_kappa(state.beta);
    (-f64::from(state.v_beta) * slope).max(0.0)
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Clock {
    Boundary,
    Exit,
    Position(usize),
    Beta,
}

/// Simulates the tempered process from `init` (tempering or target mode).
pub fn run_tempered_zigzag(
    config: &TemperingConfig,
    init: &ExtendedState,
    horizon: Horizon,
    rng_seed: u64,
) -> Result<Skeleton> {
    let mut rng = chain_rng(rng_seed);
    run_tempered_with_rng(config, init, horizon, &mut rng)
}

pub fn run_tempered_with_rng(
    config: &TemperingConfig,
    init: &ExtendedState,
    horizon: Horizon,
    rng: &mut ChainRng,
) -> Result<Skeleton> {
    init.validate()?;
    if init.dim() != config.path.dim() {
        return Err(Error::InvalidArgument(format!(
            "state dimension {} does not match path dimension {}",
            init.dim(),
            config.path.dim()
        )));
    }
    match init.mode {
        Mode::Untempered => {
            return Err(Error::InvalidArgument(
                "tempered run needs an initial state in tempering or target mode".into(),
            ))
        }
        Mode::Target if !config.has_point_mass() => {
            return Err(Error::InvalidArgument(
                "alpha = 0 has no point mass to start on".into(),
            ))
        }
        _ => {}
    }
    if init.stuck.iter().any(|&s| s) {
        return Err(Error::InvalidArgument(
            "geometric tempering does not support stuck coordinates".into(),
        ));
    }
    let eta = if config.has_point_mass() {
        exit_rate(config)?
    } else {
        0.0
    };
    let d = init.dim();
    let mut state = init.clone();
    let mut rec = Recorder::new(horizon, &state)?;
    let mut exit_at = draw_exit(&state, eta, 0.0, rng);
    let mut anchor = PathAnchor::at(&config.path, &state.x)?;
    let target_bound = config.path.target().hessian_bound();

    loop {
        let (mut best_t, mut best) = match state.mode {
            Mode::Tempering => (state.time_to_beta_boundary(), Clock::Boundary),
            _ => (exit_at - rec.t, Clock::Exit),
        };
        let mut best_bound: Option<RateBound> = None;
        match state.mode {
            Mode::Tempering => {
                for j in 0..d {
                    let b = geometric_x_bound_at(&config.path, &anchor, &state, j);
                    if let Some(t) = first_event_poly(&b, open01(rng), DEFAULT_TOL)? {
                        if t < best_t {
                            best_t = t;
                            best = Clock::Position(j);
                            best_bound = Some(b);
                        }
                    }
                }
                let b = geometric_beta_bound_at(&config.path, &config.kappa, &anchor, &state);
                if let Some(t) = first_event_poly(&b, open01(rng), DEFAULT_TOL)? {
                    if t < best_t {
                        best_t = t;
                        best = Clock::Beta;
                        best_bound = Some(b);
                    }
                }
            }
            Mode::Target => {
                for j in 0..d {
                    let b = linear_bound_from_gradient(anchor.grad_q[j], state.v[j], target_bound.row_sum(j));
                    if let Some(t) = first_event_poly(&b, open01(rng), DEFAULT_TOL)? {
                        if t < best_t {
                            best_t = t;
                            best = Clock::Position(j);
                            best_bound = Some(b);
                        }
                    }
                }
            }
            Mode::Untempered => unreachable!("rejected above"),
        }

        if let Some(rest) = rec.remaining_before(best_t)? {
            state.advance(rest)?;
            rec.tick(rest);
            if best == Clock::Boundary && rest == best_t {
                cross_beta_boundary(&mut state, config.has_point_mass());
            }
            break;
        }
        state.advance(best_t)?;
        rec.tick(best_t);
        anchor = PathAnchor::at(&config.path, &state.x)?;

        match best {
            Clock::Boundary => {
                let kind = cross_beta_boundary(&mut state, config.has_point_mass());
                if state.mode == Mode::Target {
                    exit_at = draw_exit(&state, eta, rec.t, rng);
                }
                rec.record(kind, &state);
            }
            Clock::Exit => {
                state.mode = Mode::Tempering;
                state.beta = 1.0;
                state.v_beta = -1;
                rec.record(EventKind::ExitBetaOne, &state);
            }
            Clock::Position(j) => {
                let bound = best_bound.as_ref().expect("proposal carries its bound");
                let rate = match state.mode {
                    Mode::Tempering => x_rate(&anchor, &state, j),
                    _ => (-f64::from(state.v[j]) * anchor.grad_q[j]).max(0.0),
                };
                if accept(bound, best_t, rate, j, &mut rec, rng)? {
                    state.v[j] = -state.v[j];
                    rec.record(EventKind::FlipX(j), &state);
                }
            }
            Clock::Beta => {
                let bound = best_bound.as_ref().expect("proposal carries its bound");
                let rate = beta_rate(&anchor, &config.kappa, &state);
                if accept(bound, best_t, rate, d, &mut rec, rng)? {
                    state.v_beta = -state.v_beta;
                    rec.record(EventKind::FlipBeta, &state);
                }
            }
        }
    }
    Ok(rec.finish(&state))
}

/// Applies the boundary transition for a state sitting on `beta = 0` or
/// `beta = 1`: reflect, or enter the atom when there is one.
pub(crate) fn cross_beta_boundary(state: &mut ExtendedState, point_mass: bool) -> EventKind {
    if state.v_beta > 0 {
        state.beta = 1.0;
        if point_mass {
            state.v_beta = 0;
            state.mode = Mode::Target;
            EventKind::HitBetaOne
        } else {
            state.v_beta = -1;
            EventKind::ReflectBetaOne
        }
    } else {
        state.beta = 0.0;
        state.v_beta = 1;
        EventKind::ReflectBetaZero
    }
}

fn draw_exit(state: &ExtendedState, eta: f64, now: f64, rng: &mut ChainRng) -> f64 {
    if state.mode != Mode::Target || eta == 0.0 {
        return f64::INFINITY;
    }
    now + (-open01(rng).ln()) / eta
}

/// Thinning acceptance for a proposal `s` time units after the bound's anchor.
pub(crate) fn accept<R: Rng + ?Sized>(
    bound: &RateBound,
    s: f64,
    rate: f64,
    clock: usize,
    rec: &mut Recorder,
    rng: &mut R,
) -> Result<bool> {
    let rate = ensure_finite(rate, "event rate")?;
    rec.proposals += 1;
    let upper = bound.eval(s);
    if !bound.dominates(s, rate) {
        return Err(Error::BoundViolation {
            clock,
            s,
            rate,
            bound: upper,
        });
    }
    let accepted = open01(rng) * upper < rate;
    if accepted {
        rec.accepted += 1;
    }
    Ok(accepted)
}
