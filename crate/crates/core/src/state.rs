//! PDMP state, skeleton records and the deterministic flow.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Which part of the augmented space the process is in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// beta in [0, 1) and moving with velocity +-1.
    Tempering,
    /// Sitting on the point mass at beta = 1.
    Target,
    /// Plain Zig-Zag on the target; beta is ignored.
    Untempered,
}

impl Mode {
    /// True when the position is distributed according to the target,
    /// i.e. the point mass at beta = 1 or an untempered chain.
    pub fn is_target(self) -> bool {
        matches!(self, Mode::Target | Mode::Untempered)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Tempering => "tempering",
            Mode::Target => "target",
            Mode::Untempered => "untempered",
        }
    }
}

/// Full state of the (possibly tempered, possibly sticky) Zig-Zag process.
///
/// Velocities are stored as `i8` in {-1, 0, +1}. A stuck coordinate keeps
/// its last velocity so it can be resumed when the coordinate is released;
/// the flow does not apply it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtendedState {
    pub x: Vec<f64>,
    pub beta: f64,
    pub v: Vec<i8>,
    pub v_beta: i8,
    pub mode: Mode,
    pub stuck: Vec<bool>,
}

impl ExtendedState {
    pub fn untempered(x: Vec<f64>, v: Vec<i8>) -> Self {
        let d = x.len();
        Self {
            x,
            beta: 1.0,
            v,
            v_beta: 0,
            mode: Mode::Untempered,
            stuck: vec![false; d],
        }
    }

    pub fn tempering(x: Vec<f64>, v: Vec<i8>, beta: f64, v_beta: i8) -> Self {
        let d = x.len();
        Self {
            x,
            beta,
            v,
            v_beta,
            mode: Mode::Tempering,
            stuck: vec![false; d],
        }
    }

    /// State on the beta = 1 point mass.
    pub fn on_target(x: Vec<f64>, v: Vec<i8>) -> Self {
        let d = x.len();
        Self {
            x,
            beta: 1.0,
            v,
            v_beta: 0,
            mode: Mode::Target,
            stuck: vec![false; d],
        }
    }

    pub fn dim(&self) -> usize {
        self.x.len()
    }

    /// Velocity actually applied to coordinate `i` by the flow.
    #[inline]
    pub fn effective_velocity(&self, i: usize) -> f64 {
        if self.stuck[i] {
            0.0
        } else {
            f64::from(self.v[i])
        }
    }

    /// Time until beta reaches 0 or 1 under the flow; infinite outside
    /// tempering mode.
    pub fn time_to_beta_boundary(&self) -> f64 {
        match (self.mode, self.v_beta) {
            (Mode::Tempering, 1) => 1.0 - self.beta,
            (Mode::Tempering, -1) => self.beta,
            _ => f64::INFINITY,
        }
    }

    /// Checks the structural invariants of the state.
    pub fn validate(&self) -> Result<()> {
        let d = self.x.len();
        if self.v.len() != d || self.stuck.len() != d {
            return Err(Error::InvalidArgument(format!(
                "state lengths disagree: x {}, v {}, stuck {}",
                d,
                self.v.len(),
                self.stuck.len()
            )));
        }
        if self.x.iter().any(|x| !x.is_finite()) || !self.beta.is_finite() {
            return Err(Error::NonFinite("state"));
        }
        if self.v.iter().any(|&v| v != 1 && v != -1) {
            return Err(Error::InvalidArgument(
                "position velocities must be +1 or -1".into(),
            ));
        }
        for (i, &s) in self.stuck.iter().enumerate() {
            if s && self.x[i] != 0.0 {
                return Err(Error::InvalidArgument(format!(
                    "coordinate {i} is stuck away from zero"
                )));
            }
        }
        match self.mode {
            Mode::Tempering => {
                // beta = 1 is allowed only on the way out of the point mass
                let in_range = (0.0..1.0).contains(&self.beta)
                    || (self.beta == 1.0 && self.v_beta == -1);
                if !in_range || !(self.v_beta == 1 || self.v_beta == -1) {
                    return Err(Error::InvalidArgument(format!(
                        "tempering mode needs beta in [0,1) (or 1 moving down) and v_beta = +-1, got beta = {}, v_beta = {}",
                        self.beta, self.v_beta
                    )));
                }
            }
            Mode::Target => {
                if self.beta != 1.0 || self.v_beta != 0 {
                    return Err(Error::InvalidArgument(
                        "target mode needs beta = 1 and v_beta = 0".into(),
                    ));
                }
            }
            Mode::Untempered => {}
        }
        Ok(())
    }

    /// Advances the state in place by `h` along the deterministic flow.
    pub fn advance(&mut self, h: f64) -> Result<()> {
        if !(h >= 0.0) || !h.is_finite() {
            return Err(Error::InvalidArgument(format!("flow time must be finite and >= 0, got {h}")));
        }
        if h == 0.0 {
            return Ok(());
        }
        if self.mode == Mode::Tempering {
            let beta = self.beta + h * f64::from(self.v_beta);
            if !(-BETA_SLACK..=1.0 + BETA_SLACK).contains(&beta) {
                return Err(Error::InvalidArgument(format!(
                    "flow of {h} carries beta from {} to {beta}; split at the boundary",
                    self.beta
                )));
            }
            self.beta = beta.clamp(0.0, 1.0);
        }
        for i in 0..self.x.len() {
            if !self.stuck[i] {
                self.x[i] += h * f64::from(self.v[i]);
            }
        }
        Ok(())
    }
}

// Rounding slack when a flow lands exactly on a beta boundary.
const BETA_SLACK: f64 = 1e-12;

/// Deterministic flow: returns the state after time `h` with no events.
pub fn flow(state: &ExtendedState, h: f64) -> Result<ExtendedState> {
    let mut next = state.clone();
    next.advance(h)?;
    Ok(next)
}

/// What happened at a skeleton event.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EventKind {
    Initial,
    FlipX(usize),
    FlipBeta,
    HitBetaOne,
    ExitBetaOne,
    ReflectBetaZero,
    /// Reflection at beta = 1 when there is no point mass (alpha = 0).
    ReflectBetaOne,
    Stick(usize),
    Unstick(usize),
    Final,
}

impl fmt::Display for EventKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EventKind::Initial => f.write_str("initial"),
            EventKind::FlipX(i) => write!(f, "flip_x:{i}"),
            EventKind::FlipBeta => f.write_str("flip_beta"),
            EventKind::HitBetaOne => f.write_str("hit_beta_one"),
            EventKind::ExitBetaOne => f.write_str("exit_beta_one"),
            EventKind::ReflectBetaZero => f.write_str("reflect_beta_zero"),
            EventKind::ReflectBetaOne => f.write_str("reflect_beta_one"),
            EventKind::Stick(i) => write!(f, "stick:{i}"),
            EventKind::Unstick(i) => write!(f, "unstick:{i}"),
            EventKind::Final => f.write_str("final"),
        }
    }
}

/// One skeleton record; `state` is the state immediately after the event.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkeletonEvent {
    pub t: f64,
    pub state: ExtendedState,
    pub kind: EventKind,
}

/// The sampler's output: event records from which the whole path can be
/// reconstructed with [`flow`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Skeleton {
    pub events: Vec<SkeletonEvent>,
    pub total_time: f64,
    pub proposal_count: u64,
    pub accepted_count: u64,
}

impl Skeleton {
    /// Fraction of thinning proposals that became events.
    pub fn thinning_efficiency(&self) -> f64 {
        if self.proposal_count == 0 {
            f64::NAN
        } else {
            self.accepted_count as f64 / self.proposal_count as f64
        }
    }

    /// Number of jump events, excluding the initial and final records.
    pub fn jump_count(&self) -> usize {
        self.events
            .iter()
            .filter(|e| !matches!(e.kind, EventKind::Initial | EventKind::Final))
            .count()
    }

    pub fn final_state(&self) -> &ExtendedState {
        &self.events.last().expect("skeleton is never empty").state
    }

    /// Consecutive `(start event, duration)` pairs covering `[0, total_time]`.
    pub fn segments(&self) -> impl Iterator<Item = (&SkeletonEvent, f64)> + '_ {
        self.events
            .windows(2)
            .map(|w| (&w[0], w[1].t - w[0].t))
    }

    /// Position at time `t`, obtained by flowing from the preceding event.
    pub fn state_at(&self, t: f64) -> Result<ExtendedState> {
        if !(0.0..=self.total_time).contains(&t) {
            return Err(Error::InvalidArgument(format!(
                "time {t} outside [0, {}]",
                self.total_time
            )));
        }
        let k = self.events.partition_point(|e| e.t <= t).max(1) - 1;
        let event = &self.events[k];
        flow(&event.state, t - event.t)
    }
}

/// When a run stops.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Horizon {
    /// Stop after this many jump events. The path is kept up to the time
    /// the next event would have happened, which is recorded as `Final`.
    Events(usize),
    /// Stop at this path time.
    PathTime(f64),
}

impl Horizon {
    pub fn validate(&self) -> Result<()> {
        match *self {
            Horizon::Events(0) => Err(Error::InvalidArgument("event horizon must be >= 1".into())),
            Horizon::PathTime(t) if !(t > 0.0 && t.is_finite()) => Err(Error::InvalidArgument(
                format!("path-time horizon must be finite and > 0, got {t}"),
            )),
            _ => Ok(()),
        }
    }
}

/// Accumulates skeleton events and decides when the horizon is reached.
#[derive(Debug)]
pub(crate) struct Recorder {
    horizon: Horizon,
    events: Vec<SkeletonEvent>,
    jumps: usize,
    pub(crate) t: f64,
    pub(crate) proposals: u64,
    pub(crate) accepted: u64,
}

impl Recorder {
    pub(crate) fn new(horizon: Horizon, init: &ExtendedState) -> Result<Self> {
        horizon.validate()?;
        let capacity = match horizon {
            Horizon::Events(k) => k + 2,
            Horizon::PathTime(_) => 1024,
        };
        let mut events = Vec::with_capacity(capacity);
        events.push(SkeletonEvent {
            t: 0.0,
            state: init.clone(),
            kind: EventKind::Initial,
        });
        Ok(Self {
            horizon,
            events,
            jumps: 0,
            t: 0.0,
            proposals: 0,
            accepted: 0,
        })
    }

    /// If the horizon ends before an event `tau` from now, returns the time
    /// left until the end of the path.
    pub(crate) fn remaining_before(&self, tau: f64) -> Result<Option<f64>> {
        match self.horizon {
            Horizon::PathTime(end) => {
                if self.t + tau >= end {
                    Ok(Some(end - self.t))
                } else {
                    Ok(None)
                }
            }
            Horizon::Events(k) => {
                if self.jumps >= k {
                    if tau.is_finite() {
                        Ok(Some(tau))
                    } else {
                        Err(Error::InvalidArgument(
                            "process has no further events; use a path-time horizon".into(),
                        ))
                    }
                } else if tau.is_finite() {
                    Ok(None)
                } else {
                    Err(Error::InvalidArgument(
                        "process has no further events; use a path-time horizon".into(),
                    ))
                }
            }
        }
    }

    /// Moves the clock by `tau` without recording anything (rejected proposal).
    pub(crate) fn tick(&mut self, tau: f64) {
        self.t += tau;
    }

    pub(crate) fn record(&mut self, kind: EventKind, state: &ExtendedState) {
        self.jumps += 1;
        self.events.push(SkeletonEvent {
            t: self.t,
            state: state.clone(),
            kind,
        });
    }

    pub(crate) fn finish(mut self, state: &ExtendedState) -> Skeleton {
        if let Horizon::PathTime(end) = self.horizon {
            self.t = end;
        }
        self.events.push(SkeletonEvent {
            t: self.t,
            state: state.clone(),
            kind: EventKind::Final,
        });
        Skeleton {
            events: self.events,
            total_time: self.t,
            proposal_count: self.proposals,
            accepted_count: self.accepted,
        }
    }
}
