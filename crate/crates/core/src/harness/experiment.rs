//! Replicate studies: the Gaussian-mixture, spike-and-slab and Boltzmann
//! relaxation comparisons.
//!
//! Every study expands into (row, replicate) jobs that run in parallel and
//! are collected by job index, so reports do not depend on the thread
//! count. Reports carry no timings for the same reason.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::{
    BoltzmannConfig, CalibrationMethod, KappaConfig, MachineConfig, ModelConfig, OutputsConfig,
    RandomMachine, RunConfig,
};
use super::output::{format_f64, write_json};
use super::run::{build_problem, run_parallel, run_replicate, RunSummary};
use crate::error::{Error, Result};
use crate::estimators::{mae_report, mean_sd, rmse_report};
use crate::models::{GaussianSpec, MixtureSpec, Moments};
use crate::rng::mix64;
use crate::state::Horizon;
use crate::sticky::{SpikeSlabSpec, UnstickVelocity};

/// Means of the five-component mixture, one 2-d mean per component.
pub const MIXTURE_MEANS: [[f64; 2]; 5] = [
    [2.66, 3.72],
    [5.73, 9.08],
    [2.02, 8.98],
    [9.45, 6.61],
    [6.29, 0.62],
];

pub const EXPERIMENTS: [&str; 3] = ["mixture", "spikeslab", "boltzmann"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MixtureExperiment {
    pub alphas: Vec<f64>,
    pub means: Vec<Vec<f64>>,
    pub sigma2: f64,
    pub base: GaussianSpec,
    pub events: usize,
    pub burnin_fraction: f64,
    pub replicates: usize,
    pub grid_size: usize,
    pub degree: usize,
    /// `kappa ~ xi^(1 - beta)` for the alpha = 0 row.
    pub xi: f64,
    pub dt: f64,
    pub seed: u64,
}

impl Default for MixtureExperiment {
    fn default() -> Self {
        Self {
            alphas: vec![1.0, 0.8, 0.7, 0.5, 0.3, 0.2, 0.1, 0.0],
            means: MIXTURE_MEANS.iter().map(|m| m.to_vec()).collect(),
            sigma2: 0.2,
            base: GaussianSpec::isotropic(vec![5.0, 5.0], 2.0),
            events: 50_000,
            burnin_fraction: 0.4,
            replicates: 20,
            grid_size: 15,
            degree: 4,
            // ratio of the unnormalized masses, 5 (2 pi 0.2) / (2 pi 2)
            xi: 0.5,
            dt: 0.05,
            seed: 2024,
        }
    }
}

impl MixtureExperiment {
    fn row_config(&self, row: usize) -> RunConfig {
        let alpha = self.alphas[row];
        let kappa = if alpha == 0.0 {
            KappaConfig::Xi { xi: self.xi }
        } else if alpha == 1.0 {
            KappaConfig::default()
        } else {
            KappaConfig::Calibrate {
                grid_size: self.grid_size,
                degree: self.degree,
                method: CalibrationMethod::Pilot,
            }
        };
        RunConfig {
            model: ModelConfig::Mixture(MixtureSpec {
                means: self.means.clone(),
                sigma2: self.sigma2,
            }),
            base: Some(self.base.clone()),
            alpha,
            kappa,
            horizon: Horizon::Events(self.events),
            burnin_fraction: self.burnin_fraction,
            seed: mix64(self.seed.wrapping_add(row as u64)),
            replicates: self.replicates,
            outputs: OutputsConfig::default(),
            dt: self.dt,
            unstick_velocity: UnstickVelocity::Resume,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpikeSlabExperiment {
    pub ms: Vec<f64>,
    pub alphas: Vec<f64>,
    pub d: usize,
    pub w: f64,
    pub sigma2: f64,
    pub events: usize,
    pub burnin_fraction: f64,
    pub replicates: usize,
    pub unstick_velocity: UnstickVelocity,
    pub seed: u64,
}

impl Default for SpikeSlabExperiment {
    fn default() -> Self {
        Self {
            ms: vec![0.0, 1.0, 2.0, 3.0, 4.0],
            alphas: vec![1.0, 0.5],
            d: 2,
            w: 0.5,
            sigma2: 0.5,
            events: 50_000,
            burnin_fraction: 0.4,
            replicates: 10,
            unstick_velocity: UnstickVelocity::Resume,
            seed: 2024,
        }
    }
}

impl SpikeSlabExperiment {
    fn cell_config(&self, row: usize, col: usize) -> RunConfig {
        RunConfig {
            model: ModelConfig::Spikeslab(SpikeSlabSpec {
                d: self.d,
                w: self.w,
                m: self.ms[col],
                sigma2: self.sigma2,
            }),
            base: None,
            alpha: self.alphas[row],
            kappa: KappaConfig::default(),
            horizon: Horizon::Events(self.events),
            burnin_fraction: self.burnin_fraction,
            seed: mix64(self.seed.wrapping_add((row * self.ms.len() + col) as u64)),
            replicates: self.replicates,
            outputs: OutputsConfig::default(),
            dt: 0.05,
            unstick_velocity: self.unstick_velocity,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BoltzmannExperiment {
    pub machine: RandomMachine,
    pub jitter: f64,
    pub alphas: Vec<f64>,
    pub events: usize,
    pub burnin_fraction: f64,
    pub replicates: usize,
    pub grid_size: usize,
    pub degree: usize,
    pub events_per_point: usize,
    pub dt: f64,
    pub seed: u64,
}

impl Default for BoltzmannExperiment {
    fn default() -> Self {
        Self {
            machine: RandomMachine {
                d_b: 8,
                scale: 1.5,
                bias_scale: 0.2,
                seed: 7,
            },
            jitter: 0.1,
            alphas: vec![1.0, 0.2],
            events: 50_000,
            burnin_fraction: 0.4,
            replicates: 10,
            grid_size: 15,
            degree: 4,
            events_per_point: 5000,
            dt: 0.05,
            seed: 2024,
        }
    }
}

impl BoltzmannExperiment {
    fn row_config(&self, row: usize) -> RunConfig {
        let alpha = self.alphas[row];
        let kappa = if alpha == 1.0 {
            KappaConfig::default()
        } else {
            KappaConfig::Calibrate {
                grid_size: self.grid_size,
                degree: self.degree,
                method: CalibrationMethod::FixedGrid {
                    events_per_point: self.events_per_point,
                },
            }
        };
        RunConfig {
            model: ModelConfig::Boltzmann(BoltzmannConfig {
                machine: MachineConfig::Random(self.machine),
                jitter: self.jitter,
            }),
            base: None,
            alpha,
            kappa,
            horizon: Horizon::Events(self.events),
            burnin_fraction: self.burnin_fraction,
            seed: mix64(self.seed.wrapping_add(row as u64)),
            replicates: self.replicates,
            outputs: OutputsConfig::default(),
            dt: self.dt,
            unstick_velocity: UnstickVelocity::Resume,
        }
    }
}

/// One row of a moment-error table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentRow {
    pub alpha: f64,
    /// RMSE of `E[X_i]` for each coordinate.
    pub rmse_mean: Vec<f64>,
    /// RMSE of `E[X_i^2]` for each coordinate.
    pub rmse_second: Vec<f64>,
    /// Average over all first and second moment RMSEs.
    pub rmse_average: f64,
    pub occupancy: f64,
    pub thinning_efficiency: f64,
    /// Replicates that errored or produced no estimate.
    pub failed: usize,
    pub replicates: Vec<RunSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentReport {
    pub name: String,
    pub exact: Moments,
    pub rows: Vec<MomentRow>,
    pub failures: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InclusionRow {
    pub alpha: f64,
    /// MAE of `P(|X_1| > 0)` per slab mean.
    pub mae: Vec<f64>,
    pub failed: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InclusionReport {
    pub name: String,
    pub ms: Vec<f64>,
    pub exact: f64,
    pub rows: Vec<InclusionRow>,
    pub failures: Vec<String>,
}

fn mean_of(values: impl Iterator<Item = f64>) -> f64 {
    let v: Vec<f64> = values.collect();
    mean_sd(&v).0
}

fn moment_study(name: &str, configs: Vec<RunConfig>, threads: usize) -> Result<MomentReport> {
    let problems = configs.iter().map(build_problem).collect::<Result<Vec<_>>>()?;
    let exact = problems
        .first()
        .and_then(|p| p.exact_moments())
        .ok_or_else(|| Error::InvalidArgument(format!("{name}: exact moments unavailable")))?;
    let reps: Vec<usize> = configs.iter().map(|c| c.replicates).collect();
    let jobs: Vec<(usize, usize)> = reps
        .iter()
        .enumerate()
        .flat_map(|(row, &n)| (0..n).map(move |r| (row, r)))
        .collect();
    let results = run_parallel(jobs.len(), threads, |k| {
        let (row, r) = jobs[k];
        run_replicate(&configs[row], &problems[row], r).map(|o| o.summary)
    })?;
    let mut rows = Vec::new();
    let mut failures = Vec::new();
    let mut results = results.into_iter();
    for (row, cfg) in configs.iter().enumerate() {
        let mut ok = Vec::new();
        let mut failed = 0;
        for r in 0..reps[row] {
            match results.next().expect("one result per job") {
                Ok(s) if s.estimates.is_some() => ok.push(s),
                Ok(_) => {
                    failed += 1;
                    failures.push(format!("alpha {} replicate {r}: no path time at beta = 1", cfg.alpha));
                }
                Err(e) => {
                    failed += 1;
                    failures.push(format!("alpha {} replicate {r}: {e}", cfg.alpha));
                }
            }
        }
        let (rmse_mean, rmse_second) = if ok.is_empty() {
            (vec![f64::NAN; exact.mean.len()], vec![f64::NAN; exact.mean.len()])
        } else {
            let means: Vec<Vec<f64>> = ok.iter().map(|s| s.estimates.as_ref().unwrap().mean.clone()).collect();
            let seconds: Vec<Vec<f64>> =
                ok.iter().map(|s| s.estimates.as_ref().unwrap().second.clone()).collect();
            (rmse_report(&means, &exact.mean)?, rmse_report(&seconds, &exact.second)?)
        };
        let rmse_average = mean_of(rmse_mean.iter().chain(&rmse_second).copied());
        rows.push(MomentRow {
            alpha: cfg.alpha,
            rmse_mean,
            rmse_second,
            rmse_average,
            occupancy: mean_of(ok.iter().map(|s| s.beta_occupancy)),
            thinning_efficiency: mean_of(ok.iter().map(|s| s.thinning_efficiency)),
            failed,
            replicates: ok,
        });
    }
    Ok(MomentReport {
        name: name.into(),
        exact,
        rows,
        failures,
    })
}

pub fn run_mixture(exp: &MixtureExperiment, threads: usize) -> Result<MomentReport> {
    let configs = (0..exp.alphas.len()).map(|r| exp.row_config(r)).collect();
    moment_study("mixture", configs, threads)
}

pub fn run_boltzmann(exp: &BoltzmannExperiment, threads: usize) -> Result<MomentReport> {
    let configs = (0..exp.alphas.len()).map(|r| exp.row_config(r)).collect();
    moment_study("boltzmann", configs, threads)
}

pub fn run_spikeslab(exp: &SpikeSlabExperiment, threads: usize) -> Result<InclusionReport> {
    let cells: Vec<(usize, usize)> = (0..exp.alphas.len())
        .flat_map(|row| (0..exp.ms.len()).map(move |col| (row, col)))
        .collect();
    let configs: Vec<RunConfig> = cells.iter().map(|&(r, c)| exp.cell_config(r, c)).collect();
    let problems = configs.iter().map(build_problem).collect::<Result<Vec<_>>>()?;
    let jobs: Vec<(usize, usize)> = (0..cells.len())
        .flat_map(|cell| (0..exp.replicates).map(move |r| (cell, r)))
        .collect();
    let results = run_parallel(jobs.len(), threads, |k| {
        let (cell, r) = jobs[k];
        run_replicate(&configs[cell], &problems[cell], r).map(|o| o.summary)
    })?;
    let mut rows: Vec<InclusionRow> = exp
        .alphas
        .iter()
        .map(|&alpha| InclusionRow {
            alpha,
            mae: vec![f64::NAN; exp.ms.len()],
            failed: vec![0; exp.ms.len()],
        })
        .collect();
    let mut failures = Vec::new();
    let mut results = results.into_iter();
    for &(row, col) in &cells {
        let mut est = Vec::new();
        for r in 0..exp.replicates {
            match results.next().expect("one result per job") {
                Ok(RunSummary {
                    inclusion: Some(p), ..
                }) => est.push(vec![p[0]]),
                Ok(_) => {
                    rows[row].failed[col] += 1;
                    failures.push(format!("alpha {} m {} replicate {r}: no estimate", exp.alphas[row], exp.ms[col]));
                }
                Err(e) => {
                    rows[row].failed[col] += 1;
                    failures.push(format!("alpha {} m {} replicate {r}: {e}", exp.alphas[row], exp.ms[col]));
                }
            }
        }
        if !est.is_empty() {
            rows[row].mae[col] = mae_report(&est, &[exp.w])?[0];
        }
    }
    Ok(InclusionReport {
        name: "spikeslab".into(),
        ms: exp.ms.clone(),
        exact: exp.w,
        rows,
        failures,
    })
}

fn write_moment_csv(path: &Path, report: &MomentReport) -> Result<()> {
    let d = report.exact.mean.len();
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    let mut header = vec!["alpha".to_string()];
    header.extend((1..=d).map(|i| format!("rmse_mean_{i}")));
    header.extend((1..=d).map(|i| format!("rmse_second_{i}")));
    header.extend(["rmse_average".into(), "occupancy".into(), "failed".into()]);
    writeln!(f, "{}", header.join(","))?;
    for r in &report.rows {
        let mut cols = vec![format_f64(r.alpha)];
        cols.extend(r.rmse_mean.iter().chain(&r.rmse_second).map(|v| format_f64(*v)));
        cols.push(format_f64(r.rmse_average));
        cols.push(format_f64(r.occupancy));
        cols.push(r.failed.to_string());
        writeln!(f, "{}", cols.join(","))?;
    }
    f.flush()?;
    Ok(())
}

fn write_inclusion_csv(path: &Path, report: &InclusionReport) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    let mut header = vec!["alpha".to_string()];
    header.extend(report.ms.iter().map(|m| format!("mae_m{m}")));
    writeln!(f, "{}", header.join(","))?;
    for r in &report.rows {
        let mut cols = vec![format_f64(r.alpha)];
        cols.extend(r.mae.iter().map(|v| format_f64(*v)));
        writeln!(f, "{}", cols.join(","))?;
    }
    f.flush()?;
    Ok(())
}

/// Overrides shared by all studies on the command line.
#[derive(Debug, Clone, Copy, Default)]
pub struct StudyOverrides {
    pub seed: Option<u64>,
    pub replicates: Option<usize>,
}

fn parse_overrides<T: serde::de::DeserializeOwned + Default>(text: Option<&str>) -> Result<T> {
    match text {
        None => Ok(T::default()),
        Some(t) => {
            let de = &mut serde_json::Deserializer::from_str(t);
            serde_path_to_error::deserialize(de).map_err(|e| Error::Config {
                pointer: super::config::to_pointer(&e.path().to_string()),
                message: e.inner().to_string(),
            })
        }
    }
}

/// `experiment`: runs a named study and writes `<name>_report.json` and
/// `<name>_report.csv` into `out_dir`. Returns the JSON report.
pub fn cmd_experiment(
    name: &str,
    overrides: Option<&str>,
    cli: StudyOverrides,
    out_dir: &Path,
    threads: usize,
) -> Result<serde_json::Value> {
    std::fs::create_dir_all(out_dir)?;
    let json_path = out_dir.join(format!("{name}_report.json"));
    let csv_path = out_dir.join(format!("{name}_report.csv"));
    match name {
        "mixture" => {
            let mut exp: MixtureExperiment = parse_overrides(overrides)?;
            exp.seed = cli.seed.unwrap_or(exp.seed);
            exp.replicates = cli.replicates.unwrap_or(exp.replicates);
            let report = run_mixture(&exp, threads)?;
            write_json(&json_path, &report)?;
            write_moment_csv(&csv_path, &report)?;
            Ok(serde_json::to_value(&report)?)
        }
        "boltzmann" => {
            let mut exp: BoltzmannExperiment = parse_overrides(overrides)?;
            exp.seed = cli.seed.unwrap_or(exp.seed);
            exp.replicates = cli.replicates.unwrap_or(exp.replicates);
            let report = run_boltzmann(&exp, threads)?;
            write_json(&json_path, &report)?;
            write_moment_csv(&csv_path, &report)?;
            Ok(serde_json::to_value(&report)?)
        }
        "spikeslab" => {
            let mut exp: SpikeSlabExperiment = parse_overrides(overrides)?;
            exp.seed = cli.seed.unwrap_or(exp.seed);
            exp.replicates = cli.replicates.unwrap_or(exp.replicates);
            let report = run_spikeslab(&exp, threads)?;
            write_json(&json_path, &report)?;
            write_inclusion_csv(&csv_path, &report)?;
            Ok(serde_json::to_value(&report)?)
        }
        other => Err(Error::InvalidArgument(format!(
            "unknown experiment {other:?}; expected one of {EXPERIMENTS:?}"
        ))),
    }
}
