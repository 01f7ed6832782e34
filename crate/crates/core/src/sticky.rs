//! Sticky Zig-Zag for the tempered spike-and-slab target
//!
//! ```text
//! q(x, beta) = prod_i (w phi(x_i; m beta, sigma2) + (1 - w) delta_0(x_i)).
//! ```
//!
//! A coordinate that reaches zero freezes there (keeping its velocity) and
//! is released at rate `(w / (1 - w)) phi(0; m beta, sigma2)`. The
//! normalizing constant of `q(., beta)` is 1 for every beta, so `kappa = 1`
//! makes beta marginally uniform without calibration.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::event_times::{first_event_poly, RateBound, DEFAULT_TOL};
use crate::models::Moments;
use crate::rng::{chain_rng, open01, random_sign, ChainRng};
use crate::state::{EventKind, ExtendedState, Horizon, Mode, Recorder, Skeleton};
use crate::tempering::{accept, cross_beta_boundary, exit_rate_for};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpikeSlabSpec {
    pub d: usize,
    /// Inclusion probability.
    pub w: f64,
    /// Slab mean at beta = 1.
    pub m: f64,
    pub sigma2: f64,
}

impl SpikeSlabSpec {
    pub fn validate(&self) -> Result<()> {
        if self.d == 0 {
            return Err(Error::InvalidArgument("spike-and-slab needs d >= 1".into()));
        }
        if !(self.w > 0.0 && self.w < 1.0) {
            return Err(Error::InvalidArgument(format!("w must lie in (0, 1), got {}", self.w)));
        }
        if !(self.sigma2 > 0.0) || !self.sigma2.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "sigma2 must be positive, got {}",
                self.sigma2
            )));
        }
        if !self.m.is_finite() {
            return Err(Error::NonFinite("slab mean"));
        }
        Ok(())
    }

    /// Per-coordinate moments of the target at beta = 1.
    pub fn exact_moments(&self) -> Moments {
        Moments {
            mean: vec![self.w * self.m; self.d],
            second: vec![self.w * (self.sigma2 + self.m * self.m); self.d],
        }
    }

    /// Upper bound on the release rate over all beta.
    pub fn unstick_bound(&self) -> f64 {
        self.w / ((1.0 - self.w) * (2.0 * std::f64::consts::PI * self.sigma2).sqrt())
    }
}

/// What a released coordinate does with its velocity.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UnstickVelocity {
    /// Keep the velocity held while stuck.
    #[default]
    Resume,
    /// Draw a fresh uniform sign.
    Refresh,
}

/// Release rate `(w / (1 - w)) phi(0; m beta, sigma2)`.
pub fn unstick_rate(spec: &SpikeSlabSpec, beta: f64) -> f64 {
    let mb = spec.m * beta;
    spec.unstick_bound() * (-mb * mb / (2.0 * spec.sigma2)).exp()
}

fn beta_velocity(state: &ExtendedState) -> f64 {
    match state.mode {
        Mode::Tempering => f64::from(state.v_beta),
        _ => 0.0,
    }
}

/// Exact linear flip rate `(v_i / sigma2)((x_i + s v_i) - m(beta + s v_beta))`
/// of an active coordinate.
pub fn active_coordinate_rate(spec: &SpikeSlabSpec, state: &ExtendedState, i: usize) -> Result<RateBound> {
    if state.stuck[i] {
        return Err(Error::InvalidArgument(format!("coordinate {i} is stuck")));
    }
    let vi = f64::from(state.v[i]);
    let vb = beta_velocity(state);
    let a = vi * (state.x[i] - spec.m * state.beta) / spec.sigma2;
    let b = (1.0 - spec.m * vi * vb) / spec.sigma2;
    Ok(RateBound::new(vec![a, b], state.time_to_beta_boundary()))
}

/// Exact linear inverse-temperature rate
/// `-v_beta (m / sigma2) sum_{active i} (x_i + s v_i - m(beta + s v_beta))`.
pub fn beta_rate_sticky(spec: &SpikeSlabSpec, state: &ExtendedState) -> Result<RateBound> {
    if state.mode != Mode::Tempering {
        return Err(Error::InvalidArgument("beta rate needs tempering mode".into()));
    }
    let vb = f64::from(state.v_beta);
    let (mut a, mut b) = (0.0, 0.0);
    for i in (0..state.dim()).filter(|&i| !state.stuck[i]) {
        a += state.x[i] - spec.m * state.beta;
        b += f64::from(state.v[i]) - spec.m * vb;
    }
    let k = -vb * spec.m / spec.sigma2;
    Ok(RateBound::new(vec![k * a, k * b], state.time_to_beta_boundary()))
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Clock {
    Boundary,
    Exit,
    Flip(usize),
    Stick(usize),
    Unstick(usize),
    Beta,
}

/// Simulates the sticky process with the default (resume) release rule.
pub fn run_sticky_tempered(
    spec: &SpikeSlabSpec,
    alpha: f64,
    init: &ExtendedState,
    horizon: Horizon,
    rng_seed: u64,
) -> Result<Skeleton> {
    let mut rng = chain_rng(rng_seed);
    run_sticky_with_rng(spec, alpha, UnstickVelocity::Resume, init, horizon, &mut rng)
}

/// `alpha = 0` runs without the beta = 1 atom, reflecting at both ends.
pub fn run_sticky_with_rng(
    spec: &SpikeSlabSpec,
    alpha: f64,
    unstick: UnstickVelocity,
    init: &ExtendedState,
    horizon: Horizon,
    rng: &mut ChainRng,
) -> Result<Skeleton> {
    spec.validate()?;
    init.validate()?;
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::InvalidArgument(format!("alpha must lie in [0, 1], got {alpha}")));
    }
    if init.dim() != spec.d {
        return Err(Error::InvalidArgument(format!(
            "state dimension {} does not match spec dimension {}",
            init.dim(),
            spec.d
        )));
    }
    match init.mode {
        Mode::Untempered => {
            return Err(Error::InvalidArgument(
                "sticky run needs a tempering or target-mode state".into(),
            ))
        }
        Mode::Target if alpha == 0.0 => {
            return Err(Error::InvalidArgument("alpha = 0 has no point mass to start on".into()))
        }
        _ => {}
    }
    let point_mass = alpha > 0.0;
    let eta = if point_mass { exit_rate_for(alpha, 1.0)? } else { 0.0 };
    let d = spec.d;
    let c_bar = spec.unstick_bound();
    let mut state = init.clone();
    let mut rec = Recorder::new(horizon, &state)?;
    let draw_exit = |now: f64, rng: &mut ChainRng| {
        if eta > 0.0 {
            now - open01(rng).ln() / eta
        } else {
            f64::INFINITY
        }
    };
    let mut exit_at = if state.mode == Mode::Target {
        draw_exit(0.0, rng)
    } else {
        f64::INFINITY
    };

    loop {
        let mut best_t;
        let mut best;
        if state.mode == Mode::Tempering {
            best_t = state.time_to_beta_boundary();
            best = Clock::Boundary;
        } else {
            best_t = exit_at - rec.t;
            best = Clock::Exit;
        }
        for i in 0..d {
            if state.stuck[i] {
                let rate = if state.mode == Mode::Tempering {
                    c_bar
                } else {
                    unstick_rate(spec, 1.0)
                };
                let t = if rate > 0.0 { -open01(rng).ln() / rate } else { f64::INFINITY };
                if t < best_t {
                    best_t = t;
                    best = Clock::Unstick(i);
                }
                continue;
            }
            let b = active_coordinate_rate(spec, &state, i)?;
            if let Some(t) = first_event_poly(&b, open01(rng), DEFAULT_TOL)? {
                if t < best_t {
                    best_t = t;
                    best = Clock::Flip(i);
                }
            }
            let v = f64::from(state.v[i]);
            if state.x[i] * v < 0.0 {
                let t = -state.x[i] / v;
                if t < best_t {
                    best_t = t;
                    best = Clock::Stick(i);
                }
            }
        }
        if state.mode == Mode::Tempering {
            let b = beta_rate_sticky(spec, &state)?;
            if let Some(t) = first_event_poly(&b, open01(rng), DEFAULT_TOL)? {
                if t < best_t {
                    best_t = t;
                    best = Clock::Beta;
                }
            }
        }

        if let Some(rest) = rec.remaining_before(best_t)? {
            state.advance(rest)?;
            rec.tick(rest);
            // deterministic transitions due at the stopping time are applied
            // so that the final state is a valid start for a continuation
            if rest == best_t {
                match best {
                    Clock::Boundary => {
                        cross_beta_boundary(&mut state, point_mass);
                    }
                    Clock::Stick(i) => {
                        state.x[i] = 0.0;
                        state.stuck[i] = true;
                    }
                    _ => {}
                }
            }
            break;
        }
        state.advance(best_t)?;
        rec.tick(best_t);

        match best {
            Clock::Boundary => {
                let kind = cross_beta_boundary(&mut state, point_mass);
                if state.mode == Mode::Target {
                    exit_at = draw_exit(rec.t, rng);
                }
                rec.record(kind, &state);
            }
            Clock::Exit => {
                state.mode = Mode::Tempering;
                state.beta = 1.0;
                state.v_beta = -1;
                rec.record(EventKind::ExitBetaOne, &state);
            }
            Clock::Flip(i) => {
                exact_event(&mut rec);
                state.v[i] = -state.v[i];
                rec.record(EventKind::FlipX(i), &state);
            }
            Clock::Beta => {
                exact_event(&mut rec);
                state.v_beta = -state.v_beta;
                rec.record(EventKind::FlipBeta, &state);
            }
            Clock::Stick(i) => {
                state.x[i] = 0.0;
                state.stuck[i] = true;
                rec.record(EventKind::Stick(i), &state);
            }
            Clock::Unstick(i) => {
                let released = if state.mode == Mode::Tempering {
                    let bound = RateBound::constant(c_bar, f64::INFINITY);
                    accept(&bound, best_t, unstick_rate(spec, state.beta), d + 1 + i, &mut rec, rng)?
                } else {
                    exact_event(&mut rec);
                    true
                };
                if released {
                    state.stuck[i] = false;
                    if unstick == UnstickVelocity::Refresh {
                        state.v[i] = random_sign(rng);
                    }
                    rec.record(EventKind::Unstick(i), &state);
                }
            }
        }
    }
    Ok(rec.finish(&state))
}

/// Exactly simulated events count as one accepted proposal.
fn exact_event(rec: &mut Recorder) {
    rec.proposals += 1;
    rec.accepted += 1;
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::poly;

    fn spec(m: f64) -> SpikeSlabSpec {
        SpikeSlabSpec {
            d: 2,
            w: 0.5,
            m,
            sigma2: 0.5,
        }
    }

    #[test]
    fn unstick_rate_examples() {
        let s = spec(0.0);
        let c = 1.0 / std::f64::consts::PI.sqrt();
        for beta in [0.0, 0.4, 1.0] {
            assert!((unstick_rate(&s, beta) - c).abs() < 1e-15);
        }
        let s4 = spec(4.0);
        assert_eq!(unstick_rate(&s4, 0.0), s4.unstick_bound());
        let r = unstick_rate(&s4, 1.0);
        assert!((r - c * (-16.0f64).exp()).abs() < 1e-20);
        assert!((r - 6.35e-8).abs() < 1e-9);
    }

    #[test]
    fn active_rate_examples() {
        let s = spec(0.0);
        let st = ExtendedState::tempering(vec![0.7, 0.0], vec![1, -1], 0.3, 1);
        let b = active_coordinate_rate(&s, &st, 0).unwrap();
        assert!((b.coeffs[0] - 1.4).abs() < 1e-15);
        assert!((b.coeffs[1] - 2.0).abs() < 1e-15);

        let s4 = spec(4.0);
        let st = ExtendedState::tempering(vec![1.0, 0.0], vec![-1, 1], 0.25, 1);
        let b = active_coordinate_rate(&s4, &st, 0).unwrap();
        for k in 0..=10 {
            let t = 0.05 * f64::from(k);
            let direct = (-1.0 / 0.5) * ((1.0 - t) - 4.0 * (0.25 + t));
            assert!((poly::eval(&b.coeffs, t) - direct).abs() < 1e-13);
        }
        assert_eq!(b.eval(0.0), 0.0);

        let mut stuck = st.clone();
        stuck.x[0] = 0.0;
        stuck.stuck[0] = true;
        assert!(active_coordinate_rate(&s4, &stuck, 0).is_err());
    }

    #[test]
    fn beta_rate_examples() {
        let s = spec(2.0);
        let mut st = ExtendedState::tempering(vec![0.0, 0.0], vec![1, 1], 0.5, 1);
        st.stuck = vec![true, true];
        let b = beta_rate_sticky(&s, &st).unwrap();
        assert!(b.coeffs.iter().all(|&c| c == 0.0));
        let st = ExtendedState::tempering(vec![0.3, -2.0], vec![1, -1], 0.5, -1);
        assert!(beta_rate_sticky(&spec(0.0), &st)
            .unwrap()
            .coeffs
            .iter()
            .all(|&c| c == 0.0));

        // matches -v_beta d/dbeta log q along the flow
        let s = spec(2.0);
        let st = ExtendedState::tempering(vec![0.8, 1.5], vec![1, -1], 0.2, 1);
        let b = beta_rate_sticky(&s, &st).unwrap();
        for k in 0..=10 {
            let t = 0.05 * f64::from(k);
            let beta = 0.2 + t;
            let dlog: f64 = [0.8 + t, 1.5 - t]
                .iter()
                .map(|x| (2.0 / 0.5) * (x - 2.0 * beta))
                .sum();
            assert!((poly::eval(&b.coeffs, t) + dlog).abs() < 1e-12);
        }
    }

    #[test]
    fn sticks_exactly_at_zero_and_stays() {
        let s = spec(1.0);
        let init = ExtendedState::tempering(vec![0.4, -0.6], vec![-1, 1], 0.1, 1);
        let sk = run_sticky_tempered(&s, 0.5, &init, Horizon::Events(3000), 17).unwrap();
        let mut sticks = 0;
        for w in sk.events.windows(2) {
            if let EventKind::Stick(i) = w[1].kind {
                sticks += 1;
                let prev = &w[0].state;
                let tau = w[1].t - w[0].t;
                assert!((prev.x[i] + tau * f64::from(prev.v[i])).abs() < 1e-12);
            }
            for i in 0..2 {
                if w[0].state.stuck[i] && w[1].kind != EventKind::Unstick(i) {
                    assert!(w[1].state.stuck[i]);
                    assert_eq!(w[1].state.x[i], 0.0);
                }
            }
        }
        assert!(sticks > 0);
    }

    #[test]
    fn m_zero_has_no_beta_flips() {
        let s = spec(0.0);
        let init = ExtendedState::tempering(vec![0.4, -0.6], vec![-1, 1], 0.1, 1);
        let sk = run_sticky_tempered(&s, 0.5, &init, Horizon::Events(2000), 3).unwrap();
        assert!(sk.events.iter().all(|e| e.kind != EventKind::FlipBeta));
    }
}
