//! Config-driven runs, calibration and replicate studies behind the `tzz`
//! binary.

pub mod config;
pub mod experiment;
pub mod output;
pub mod run;

pub use config::{load_config, parse_config, KappaConfig, ModelConfig, RunConfig};
pub use experiment::{
    cmd_experiment, run_boltzmann, run_mixture, run_spikeslab, BoltzmannExperiment, InclusionReport,
    MixtureExperiment, MomentReport, SpikeSlabExperiment, StudyOverrides,
};
pub use run::{build_problem, cmd_calibrate, cmd_run, run_replicate, KappaReport, Problem, RunSummary};
