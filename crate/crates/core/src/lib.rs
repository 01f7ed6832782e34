//! Continuously-tempered Zig-Zag sampling.
//!
//! The crate simulates Zig-Zag piecewise-deterministic Markov processes,
//! optionally extended with an inverse-temperature coordinate that moves on
//! `[0, 1]` along a geometric path between a tractable base and the target,
//! with an atom at `beta = 1` where the position is an exact target draw.
//! Event times come from exact inversion of polynomial rates or thinning
//! against polynomial bounds. A sticky variant handles spike-and-slab
//! targets. Estimators turn skeletons into moments, and [`harness`] runs
//! configured studies.

pub mod calibration;
pub mod error;
pub mod estimators;
pub mod event_times;
pub mod harness;
pub mod models;
pub mod poly;
pub mod rng;
pub mod state;
pub mod sticky;
pub mod tempering;
pub mod zigzag;

pub use error::{Error, Result};
pub use event_times::{
    first_event_constant, first_event_poly, geometric_beta_bound, geometric_x_bound,
    linear_rate_bound, thinned_first_event, RateBound,
};
pub use models::{HessianBound, Moments, TargetModel};
pub use state::{flow, EventKind, ExtendedState, Horizon, Mode, Skeleton, SkeletonEvent};
pub use tempering::{
    exit_rate, run_tempered_zigzag, tempered_rates, GeometricPath, LogKappa, TemperingConfig,
};
pub use zigzag::{discretize, run_zigzag, PathSample};
