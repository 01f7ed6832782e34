//! Building problems from configs and running replicates.

use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{CalibrationMethod, KappaConfig, MachineConfig, ModelConfig, RunConfig};
use super::output::{write_json, write_skeleton_csv};
use crate::calibration::{calibrate_kappa, estimate_ubar, fixed_grid_ubar, uniform_grid, FixedGridRuns};
use crate::error::{Error, Result};
use crate::estimators::{
    beta_occupancy_after, inclusion_probability, is_moments, segment_moments, ModeFilter,
};
use crate::models::{
    boltzmann_relaxation_model, build_q, gaussian_model, mixture_model, random_machine, GaussianModel,
    GaussianSpec, Moments, TargetModel,
};
use crate::rng::{chain_rng, mix64, random_sign, replicate_seed, ChainRng};
use crate::state::{ExtendedState, Horizon, Skeleton, SkeletonEvent};
use crate::sticky::{run_sticky_with_rng, SpikeSlabSpec};
use crate::tempering::{run_tempered_with_rng, GeometricPath, LogKappa, TemperingConfig};
use crate::zigzag::{discretize, run_zigzag_with_rng};

/// A config's models, built once and shared by all replicates.
#[derive(Debug, Clone)]
pub enum Problem {
    Smooth {
        target: Arc<dyn TargetModel>,
        base: Option<Arc<GaussianModel>>,
        exact: Option<Moments>,
    },
    SpikeSlab(SpikeSlabSpec),
}

impl Problem {
    pub fn exact_moments(&self) -> Option<Moments> {
        match self {
            Problem::Smooth { exact, .. } => exact.clone(),
            Problem::SpikeSlab(s) => Some(s.exact_moments()),
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            Problem::Smooth { target, .. } => target.dim(),
            Problem::SpikeSlab(s) => s.d,
        }
    }

    fn path(&self) -> Result<GeometricPath> {
        match self {
            Problem::Smooth {
                target,
                base: Some(base),
                ..
            } => GeometricPath::new(base.clone(), target.clone()),
            _ => Err(Error::InvalidArgument("problem has no geometric path".into())),
        }
    }
}

pub fn build_problem(cfg: &RunConfig) -> Result<Problem> {
    let base = |spec: &Option<GaussianSpec>| -> Result<Option<Arc<GaussianModel>>> {
        spec.as_ref()
            .map(|s| gaussian_model(s).map(Arc::new))
            .transpose()
            .map_err(|e| config_error("/base", e))
    };
    match &cfg.model {
        ModelConfig::Gaussian(spec) => {
            let m = gaussian_model(spec).map_err(|e| config_error("/model", e))?;
            let exact = m.exact_moments();
            Ok(Problem::Smooth {
                target: Arc::new(m),
                base: base(&cfg.base)?,
                exact,
            })
        }
        ModelConfig::Mixture(spec) => {
            let m = mixture_model(spec).map_err(|e| config_error("/model", e))?;
            let exact = m.exact_moments();
            Ok(Problem::Smooth {
                target: Arc::new(m),
                base: base(&cfg.base)?,
                exact,
            })
        }
        ModelConfig::Boltzmann(bc) => {
            let (w, b) = match &bc.machine {
                MachineConfig::Explicit { w, b } => (w.clone(), b.clone()),
                MachineConfig::Random(r) => random_machine(r.d_b, r.scale, r.bias_scale, r.seed),
            };
            let spec = build_q(&w, &b, bc.jitter).map_err(|e| config_error("/model", e))?;
            let m = boltzmann_relaxation_model(&spec).map_err(|e| config_error("/model", e))?;
            let exact = m.exact_moments();
            let base = match base(&cfg.base)? {
                Some(b) => Some(b),
                None => Some(Arc::new(boltzmann_default_base(&spec.q)?)),
            };
            Ok(Problem::Smooth {
                target: Arc::new(m),
                base,
                exact,
            })
        }
        ModelConfig::Spikeslab(spec) => Ok(Problem::SpikeSlab(spec.clone())),
    }
}

/// `N(0, I + Q'Q)`: the relaxation's covariance when the signs are
/// independent and uniform.
fn boltzmann_default_base(q: &[Vec<f64>]) -> Result<GaussianModel> {
    let n = q.len();
    let dr = q.first().map_or(0, Vec::len);
    let qm = DMatrix::from_fn(n, dr, |i, j| q[i][j]);
    let cov = qm.transpose() * &qm + DMatrix::identity(dr, dr);
    gaussian_model(&GaussianSpec {
        mu: vec![0.0; dr],
        sigma: cov.row_iter().map(|r| r.iter().copied().collect()).collect(),
    })
}

fn config_error(pointer: &str, e: Error) -> Error {
    match e {
        Error::Config { .. } => e,
        other => Error::Config {
            pointer: pointer.into(),
            message: other.to_string(),
        },
    }
}

/// Importance-sampling diagnostics of the atom-free regime.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ImportanceSummary {
    pub ess: f64,
    pub samples: usize,
}

/// What one replicate reports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub replicate: usize,
    pub seed: u64,
    pub alpha: f64,
    pub psi: Vec<f64>,
    pub left_limit_ratio: f64,
    /// Jump events over the whole run, burn-in included.
    pub events: usize,
    pub total_time: f64,
    pub burnin_time: f64,
    /// Moments after burn-in, `None` when no usable path time remained.
    pub estimates: Option<Moments>,
    pub exact: Option<Moments>,
    /// Per-coordinate inclusion probabilities (spike-and-slab only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub inclusion: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exact_inclusion: Option<f64>,
    pub beta_occupancy: f64,
    pub thinning_efficiency: f64,
    pub proposal_count: u64,
    pub accepted_count: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub importance: Option<ImportanceSummary>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wall_time_seconds: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct ReplicateOutput {
    pub summary: RunSummary,
    /// Whole path, burn-in included.
    pub skeleton: Skeleton,
}

/// Result of fitting kappa.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KappaReport {
    pub psi: Vec<f64>,
    pub left_limit_ratio: f64,
    pub degree: usize,
    pub grid: Vec<f64>,
    pub ubar: Vec<f64>,
}

/// Seed of replicate `index` under `cfg`.
pub fn seed_for(cfg: &RunConfig, index: usize) -> u64 {
    replicate_seed(cfg.seed, index as u64)
}

fn standard_normal(rng: &mut ChainRng) -> f64 {
    rng.sample(StandardNormal)
}

fn initial_state(cfg: &RunConfig, problem: &Problem, rng: &mut ChainRng) -> ExtendedState {
    let d = problem.dim();
    match problem {
        Problem::Smooth { base, .. } => {
            let x = match base {
                Some(b) => b.sample(rng),
                None => vec![0.0; d],
            };
            let v = (0..d).map(|_| random_sign(rng)).collect();
            if cfg.alpha == 1.0 {
                ExtendedState::untempered(x, v)
            } else {
                ExtendedState::tempering(x, v, 0.0, 1)
            }
        }
        Problem::SpikeSlab(s) => {
            // all coordinates in the model, drawn from the slab at the
            // starting inverse temperature
            let beta = if cfg.alpha == 1.0 { 1.0 } else { 0.0 };
            let sd = s.sigma2.sqrt();
            let x = (0..d).map(|_| s.m * beta + sd * standard_normal(rng)).collect();
            let v = (0..d).map(|_| random_sign(rng)).collect();
            if cfg.alpha == 1.0 {
                ExtendedState::on_target(x, v)
            } else {
                ExtendedState::tempering(x, v, 0.0, 1)
            }
        }
    }
}

/// Runs one chain under `alpha` and `kappa` from `init`.
fn run_chain(
    cfg: &RunConfig,
    problem: &Problem,
    alpha: f64,
    kappa: &LogKappa,
    init: &ExtendedState,
    horizon: Horizon,
    rng: &mut ChainRng,
) -> Result<Skeleton> {
    match problem {
        Problem::Smooth { target, .. } if alpha == 1.0 && init.mode == crate::state::Mode::Untempered => {
            run_zigzag_with_rng(target.as_ref(), init, horizon, rng)
        }
        Problem::Smooth { .. } => {
            let tc = TemperingConfig::new(alpha, kappa.clone(), problem.path()?)?;
            run_tempered_with_rng(&tc, init, horizon, rng)
        }
        Problem::SpikeSlab(spec) => run_sticky_with_rng(spec, alpha, cfg.unstick_velocity, init, horizon, rng),
    }
}

/// Joins two consecutive runs into one skeleton.
pub fn concat_skeletons(first: Skeleton, second: Skeleton) -> Skeleton {
    let offset = first.total_time;
    let mut events: Vec<SkeletonEvent> = first.events;
    // the continuation's initial state replaces the final record, since a
    // boundary transition may have been applied at the join
    events.pop();
    events.extend(second.events.into_iter().map(|mut e| {
        e.t += offset;
        e
    }));
    Skeleton {
        events,
        total_time: offset + second.total_time,
        proposal_count: first.proposal_count + second.proposal_count,
        accepted_count: first.accepted_count + second.accepted_count,
    }
}

/// Fits kappa for `cfg`. With the pilot method the returned skeleton is
/// the pilot run, which doubles as burn-in.
fn calibrate(
    cfg: &RunConfig,
    problem: &Problem,
    init: &ExtendedState,
    burn: Horizon,
    rng: &mut ChainRng,
    seed: u64,
) -> Result<(KappaReport, Option<Skeleton>)> {
    let KappaConfig::Calibrate {
        grid_size,
        degree,
        method,
    } = cfg.kappa
    else {
        return Err(Error::InvalidArgument("kappa is not in calibrate mode".into()));
    };
    let path = problem.path()?;
    let (grid, ubar, pilot) = match method {
        CalibrationMethod::Pilot => {
            let grid = uniform_grid(0.0, 1.0, grid_size)?;
            let pilot_init = ExtendedState::tempering(init.x.clone(), init.v.clone(), 0.0, 1);
            let pilot = run_chain(cfg, problem, 0.0, &LogKappa::flat(), &pilot_init, burn, rng)?;
            let samples = discretize(&pilot, cfg.dt, 0.0)?;
            let ubar = estimate_ubar(&samples, &path, &grid)?;
            (grid, ubar, Some(pilot))
        }
        CalibrationMethod::FixedGrid { events_per_point } => {
            let grid = uniform_grid(0.01, 0.99, grid_size)?;
            let runs = FixedGridRuns {
                horizon: Horizon::Events(events_per_point),
                burnin_fraction: cfg.burnin_fraction,
                dt: cfg.dt,
            };
            let grid_seed = mix64(seed ^ 0x5ca1_ab1e);
            let ubar = fixed_grid_ubar(&path, &grid, &init.x, runs, |k| {
                replicate_seed(grid_seed, k as u64)
            })?;
            (grid, ubar, None)
        }
    };
    let kappa = calibrate_kappa(&grid, &ubar, degree)?;
    Ok((
        KappaReport {
            psi: kappa.psi,
            left_limit_ratio: kappa.left_limit_ratio,
            degree,
            grid,
            ubar,
        },
        pilot,
    ))
}

/// Runs replicate `index` of `cfg`: burn-in (or calibration pilot), then
/// the main chain, then estimates from the post-burn-in path.
pub fn run_replicate(cfg: &RunConfig, problem: &Problem, index: usize) -> Result<ReplicateOutput> {
    let seed = seed_for(cfg, index);
    let mut rng = chain_rng(seed);
    let init = initial_state(cfg, problem, &mut rng);
    let (burn, main) = cfg.split_horizon();
    let alpha = cfg.alpha;

    let (kappa, phase_one) = match &cfg.kappa {
        KappaConfig::Explicit {
            psi,
            left_limit_ratio,
        } => (
            LogKappa {
                psi: psi.clone(),
                left_limit_ratio: *left_limit_ratio,
            },
            None,
        ),
        KappaConfig::Xi { xi } => (LogKappa::from_xi(*xi)?, None),
        KappaConfig::Calibrate { .. } if alpha == 1.0 => (LogKappa::flat(), None),
        KappaConfig::Calibrate { .. } => {
            let (report, pilot) = calibrate(cfg, problem, &init, burn, &mut rng, seed)?;
            (
                LogKappa {
                    psi: report.psi,
                    left_limit_ratio: report.left_limit_ratio,
                },
                pilot,
            )
        }
    };
    let phase_one = match phase_one {
        Some(p) => p,
        None => run_chain(cfg, problem, alpha, &kappa, &init, burn, &mut rng)?,
    };
    let phase_two = run_chain(cfg, problem, alpha, &kappa, phase_one.final_state(), main, &mut rng)?;
    let burnin_time = phase_one.total_time;
    let skeleton = concat_skeletons(phase_one, phase_two);

    let mut summary = RunSummary {
        replicate: index,
        seed,
        alpha,
        psi: kappa.psi.clone(),
        left_limit_ratio: kappa.left_limit_ratio,
        events: skeleton.jump_count(),
        total_time: skeleton.total_time,
        burnin_time,
        estimates: None,
        exact: problem.exact_moments(),
        inclusion: None,
        exact_inclusion: None,
        beta_occupancy: beta_occupancy_after(&skeleton, burnin_time)?,
        thinning_efficiency: skeleton.thinning_efficiency(),
        proposal_count: skeleton.proposal_count,
        accepted_count: skeleton.accepted_count,
        importance: None,
        wall_time_seconds: None,
    };
    if alpha == 0.0 {
        let KappaConfig::Xi { xi } = cfg.kappa else {
            return Err(Error::InvalidArgument("alpha = 0 needs kappa mode xi".into()));
        };
        let samples = discretize(&skeleton, cfg.dt, burnin_time)?;
        let (m, meta) = is_moments(&samples, &problem.path()?, xi)?;
        summary.estimates = Some(m);
        summary.importance = Some(ImportanceSummary {
            ess: meta.ess,
            samples: meta.samples,
        });
    } else {
        summary.estimates = segment_moments(&skeleton, ModeFilter::Posterior, burnin_time).ok();
        if let Problem::SpikeSlab(s) = problem {
            summary.inclusion = (0..s.d)
                .map(|i| inclusion_probability(&skeleton, i, ModeFilter::Posterior, burnin_time))
                .collect::<Result<Vec<f64>>>()
                .ok();
            summary.exact_inclusion = Some(s.w);
        }
    }
    Ok(ReplicateOutput { summary, skeleton })
}

/// Runs `jobs` on a pool of `threads` workers (0 = rayon default),
/// returning results in job order.
pub fn run_parallel<T, F>(jobs: usize, threads: usize, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize) -> T + Send + Sync,
{
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?;
    Ok(pool.install(|| (0..jobs).into_par_iter().map(&f).collect()))
}

fn resolve(out_dir: &Path, configured: &Option<String>, default: &str) -> PathBuf {
    let name = configured.as_deref().unwrap_or(default);
    let p = Path::new(name);
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        out_dir.join(p)
    }
}

/// `skeleton.csv` becomes `skeleton_3.csv` for replicate 3.
fn numbered(path: &Path, index: usize) -> PathBuf {
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("skeleton");
    let name = match path.extension().and_then(|e| e.to_str()) {
        Some(ext) => format!("{stem}_{index}.{ext}"),
        None => format!("{stem}_{index}"),
    };
    path.with_file_name(name)
}

/// Replicate summaries of a multi-replicate run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub seed: u64,
    pub replicates: Vec<RunSummary>,
}

/// `run`: writes the skeleton CSV(s) and the summary JSON.
pub fn cmd_run(cfg: &RunConfig, out_dir: &Path, threads: usize) -> Result<Vec<RunSummary>> {
    let problem = build_problem(cfg)?;
    std::fs::create_dir_all(out_dir)?;
    let results = run_parallel(cfg.replicates, threads, |r| {
        let start = Instant::now();
        run_replicate(cfg, &problem, r).map(|mut out| {
            out.summary.wall_time_seconds = Some(start.elapsed().as_secs_f64());
            out
        })
    })?;
    let csv = resolve(out_dir, &cfg.outputs.skeleton_csv, "skeleton.csv");
    let mut summaries = Vec::with_capacity(results.len());
    for (r, res) in results.into_iter().enumerate() {
        let out = res?;
        let path = if cfg.replicates == 1 { csv.clone() } else { numbered(&csv, r) };
        write_skeleton_csv(&path, &out.skeleton)?;
        summaries.push(out.summary);
    }
    let json = resolve(out_dir, &cfg.outputs.summary_json, "summary.json");
    if summaries.len() == 1 {
        write_json(&json, &summaries[0])?;
    } else {
        write_json(
            &json,
            &RunReport {
                seed: cfg.seed,
                replicates: summaries.clone(),
            },
        )?;
    }
    Ok(summaries)
}

/// `calibrate`: fits kappa as replicate 0 would and writes it as JSON.
pub fn cmd_calibrate(cfg: &RunConfig, out_dir: &Path) -> Result<KappaReport> {
    if !matches!(cfg.kappa, KappaConfig::Calibrate { .. }) {
        return Err(Error::Config {
            pointer: "/kappa/mode".into(),
            message: "calibrate needs kappa mode \"calibrate\"".into(),
        });
    }
    let problem = build_problem(cfg)?;
    if matches!(problem, Problem::SpikeSlab(_)) {
        return Err(Error::Config {
            pointer: "/model".into(),
            message: "the spike-and-slab path needs no calibration".into(),
        });
    }
    let seed = seed_for(cfg, 0);
    let mut rng = chain_rng(seed);
    let mut tempered = cfg.clone();
    tempered.alpha = tempered.alpha.min(0.5);
    let init = initial_state(&tempered, &problem, &mut rng);
    let (burn, _) = cfg.split_horizon();
    let (report, _) = calibrate(cfg, &problem, &init, burn, &mut rng, seed)?;
    std::fs::create_dir_all(out_dir)?;
    write_json(&resolve(out_dir, &cfg.outputs.kappa_json, "kappa.json"), &report)?;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::state::EventKind;
    use crate::harness::config::parse_config;

    #[test]
    fn concatenation_keeps_times_increasing() {
        let cfg = parse_config(
            r#"{"model": {"type": "gaussian", "mu": [0.0], "sigma": [[1.0]]},
                "alpha": 1.0, "horizon": {"events": 100}, "seed": 4}"#,
        )
        .unwrap();
        let p = build_problem(&cfg).unwrap();
        let out = run_replicate(&cfg, &p, 0).unwrap();
        let sk = &out.skeleton;
        assert_eq!(sk.events[0].kind, EventKind::Initial);
        assert_eq!(sk.events.last().unwrap().kind, EventKind::Final);
        assert_eq!(sk.jump_count(), 100);
        assert!(sk.events.windows(2).all(|w| w[1].t > w[0].t));
        assert_eq!(out.summary.beta_occupancy, 1.0);
    }

    #[test]
    fn numbered_paths() {
        assert_eq!(numbered(Path::new("/a/skeleton.csv"), 3), PathBuf::from("/a/skeleton_3.csv"));
        assert_eq!(numbered(Path::new("out"), 0), PathBuf::from("out_0"));
    }
}
