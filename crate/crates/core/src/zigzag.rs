//! The plain Zig-Zag process on a single target and path discretization.

use serde::{Deserialize, Serialize};

use crate::error::{ensure_all_finite, Error, Result};
use crate::event_times::{first_event_poly, linear_bound_from_gradient, RateBound, DEFAULT_TOL};
use crate::models::TargetModel;
use crate::rng::{chain_rng, open01, ChainRng};
use crate::state::{flow, EventKind, ExtendedState, Horizon, Mode, Recorder, Skeleton};
use crate::tempering::accept;

/// Flip rate of coordinate `i`, `max(0, -v_i d_i log q(x))`.
pub fn zigzag_rate(model: &dyn TargetModel, state: &ExtendedState, i: usize) -> f64 {
    let g = model.grad_log_density(&state.x);
    (-f64::from(state.v[i]) * g[i]).max(0.0)
}

/// Simulates the Zig-Zag process targeting `model` from an untempered state.
pub fn run_zigzag(
    model: &dyn TargetModel,
    init: &ExtendedState,
    horizon: Horizon,
    rng_seed: u64,
) -> Result<Skeleton> {
    let mut rng = chain_rng(rng_seed);
    run_zigzag_with_rng(model, init, horizon, &mut rng)
}

pub fn run_zigzag_with_rng(
    model: &dyn TargetModel,
    init: &ExtendedState,
    horizon: Horizon,
    rng: &mut ChainRng,
) -> Result<Skeleton> {
    init.validate()?;
    if init.mode != Mode::Untempered {
        return Err(Error::InvalidArgument(
            "run_zigzag needs an untempered initial state".into(),
        ));
    }
    if init.dim() != model.dim() {
        return Err(Error::InvalidArgument(format!(
            "state dimension {} does not match model dimension {}",
            init.dim(),
            model.dim()
        )));
    }
    if init.stuck.iter().any(|&s| s) {
        return Err(Error::InvalidArgument(
            "plain Zig-Zag does not support stuck coordinates".into(),
        ));
    }
    let d = init.dim();
    let m = model.hessian_bound();
    let mut state = init.clone();
    let mut rec = Recorder::new(horizon, &state)?;
    let mut grad = vec![0.0; d];
    model.grad_log_density_into(&state.x, &mut grad);
    ensure_all_finite(&grad, "gradient")?;

    loop {
        let mut best_t = f64::INFINITY;
        let mut best = (0usize, RateBound::unbounded(Vec::new()));
        for i in 0..d {
            let b = linear_bound_from_gradient(grad[i], state.v[i], m.row_sum(i));
            if let Some(t) = first_event_poly(&b, open01(rng), DEFAULT_TOL)? {
                if t < best_t {
                    best_t = t;
                    best = (i, b);
                }
            }
        }
        if let Some(rest) = rec.remaining_before(best_t)? {
            state.advance(rest)?;
            rec.tick(rest);
            break;
        }
        state.advance(best_t)?;
        rec.tick(best_t);
        model.grad_log_density_into(&state.x, &mut grad);
        ensure_all_finite(&grad, "gradient")?;
        let (i, bound) = best;
        let rate = (-f64::from(state.v[i]) * grad[i]).max(0.0);
        if accept(&bound, best_t, rate, i, &mut rec, rng)? {
            state.v[i] = -state.v[i];
            rec.record(EventKind::FlipX(i), &state);
        }
    }
    Ok(rec.finish(&state))
}

/// A point on the continuous path.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathSample {
    pub t: f64,
    pub x: Vec<f64>,
    pub beta: f64,
    pub mode: Mode,
}

/// Evaluates the path at `burnin, burnin + dt, ...` up to `total_time`.
pub fn discretize(skeleton: &Skeleton, dt: f64, burnin: f64) -> Result<Vec<PathSample>> {
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(Error::InvalidArgument(format!("dt must be finite and > 0, got {dt}")));
    }
    if !(burnin >= 0.0) {
        return Err(Error::InvalidArgument(format!("burn-in must be >= 0, got {burnin}")));
    }
    if burnin >= skeleton.total_time {
        return Err(Error::InvalidArgument(format!(
            "burn-in {burnin} leaves nothing of a path of length {}",
            skeleton.total_time
        )));
    }
    let events = &skeleton.events;
    let n = ((skeleton.total_time - burnin) / dt).floor() as usize;
    let mut out = Vec::with_capacity(n + 1);
    let mut k = 0;
    for step in 0..=n {
        let t = burnin + step as f64 * dt;
        if t > skeleton.total_time {
            break;
        }
        while k + 1 < events.len() && events[k + 1].t <= t {
            k += 1;
        }
        let e = &events[k];
        let s = flow(&e.state, t - e.t)?;
        out.push(PathSample {
            t,
            x: s.x,
            beta: s.beta,
            mode: s.mode,
        });
    }
    Ok(out)
}
