//! JSON run configuration.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::calibration::DEFAULT_DEGREE;
use crate::error::{Error, Result};
use crate::models::{GaussianSpec, MixtureSpec};
use crate::state::Horizon;
use crate::sticky::{SpikeSlabSpec, UnstickVelocity};

/// One sampling problem and how to run it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelConfig,
    /// Gaussian base of the tempering path. Boltzmann models default to
    /// `N(0, I + Q'Q)`; the spike-and-slab path needs no base.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub base: Option<GaussianSpec>,
    /// Weight of the beta = 1 atom; 1 runs plain Zig-Zag, 0 the
    /// importance-sampling regime.
    pub alpha: f64,
    #[serde(default)]
    pub kappa: KappaConfig,
    pub horizon: Horizon,
    #[serde(default = "default_burnin")]
    pub burnin_fraction: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_replicates")]
    pub replicates: usize,
    #[serde(default)]
    pub outputs: OutputsConfig,
    /// Sampling interval used where a discretized path is needed
    /// (importance sampling and calibration bins).
    #[serde(default = "default_dt")]
    pub dt: f64,
    #[serde(default)]
    pub unstick_velocity: UnstickVelocity,
}

fn default_burnin() -> f64 {
    0.4
}

fn default_replicates() -> usize {
    1
}

fn default_dt() -> f64 {
    0.05
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ModelConfig {
    Gaussian(GaussianSpec),
    Mixture(MixtureSpec),
    Boltzmann(BoltzmannConfig),
    Spikeslab(SpikeSlabSpec),
}

/// Boltzmann machine given explicitly or drawn from a seeded generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoltzmannConfig {
    #[serde(flatten)]
    pub machine: MachineConfig,
    /// Added to `-lambda_min(W)` when choosing `D`.
    #[serde(default = "default_jitter")]
    pub jitter: f64,
}

fn default_jitter() -> f64 {
    0.1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MachineConfig {
    Explicit { w: Vec<Vec<f64>>, b: Vec<f64> },
    Random(RandomMachine),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RandomMachine {
    pub d_b: usize,
    pub scale: f64,
    pub bias_scale: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
pub enum KappaConfig {
    /// `kappa(beta) = exp(-sum_k psi_k beta^k)`.
    Explicit {
        psi: Vec<f64>,
        #[serde(default = "one")]
        left_limit_ratio: f64,
    },
    /// Fit `psi` from a pilot run before sampling.
    Calibrate {
        #[serde(default = "default_grid_size")]
        grid_size: usize,
        #[serde(default = "default_degree")]
        degree: usize,
        #[serde(default)]
        method: CalibrationMethod,
    },
    /// `kappa(beta) ~ xi^(1 - beta)`, required when `alpha = 0`.
    Xi { xi: f64 },
}

impl Default for KappaConfig {
    fn default() -> Self {
        KappaConfig::Explicit {
            psi: Vec::new(),
            left_limit_ratio: 1.0,
        }
    }
}

fn one() -> f64 {
    1.0
}

fn default_grid_size() -> usize {
    15
}

fn default_degree() -> usize {
    DEFAULT_DEGREE
}

/// Where the conditional means of `log q - log q0` come from.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum CalibrationMethod {
    /// The burn-in portion of the chain, run without the atom and with flat
    /// kappa, binned on an equally spaced grid over [0, 1].
    #[default]
    Pilot,
    /// Separate runs with beta fixed at each point of an equally spaced grid
    /// over [0.01, 0.99].
    FixedGrid {
        #[serde(default = "default_events_per_point")]
        events_per_point: usize,
    },
}

fn default_events_per_point() -> usize {
    5000
}

/// Output locations, relative to the `--out` directory unless absolute.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputsConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub skeleton_csv: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub summary_json: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kappa_json: Option<String>,
}

impl RunConfig {
    /// Checks cross-field constraints, reporting the JSON pointer of the
    /// offending field.
    pub fn validate(&self) -> Result<()> {
        let bad = |pointer: &str, message: String| {
            Err(Error::Config {
                pointer: pointer.into(),
                message,
            })
        };
        if !(0.0..=1.0).contains(&self.alpha) {
            return bad("/alpha", format!("must lie in [0, 1], got {}", self.alpha));
        }
        if !(0.0..1.0).contains(&self.burnin_fraction) {
            return bad(
                "/burnin_fraction",
                format!("must lie in [0, 1), got {}", self.burnin_fraction),
            );
        }
        if self.replicates == 0 {
            return bad("/replicates", "must be >= 1".into());
        }
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return bad("/dt", format!("must be positive, got {}", self.dt));
        }
        match self.horizon {
            Horizon::Events(k) if k < 2 => return bad("/horizon/events", "must be >= 2".into()),
            Horizon::PathTime(t) if !(t > 0.0 && t.is_finite()) => {
                return bad("/horizon/path_time", format!("must be positive, got {t}"))
            }
            _ => {}
        }
        match &self.kappa {
            KappaConfig::Explicit {
                psi,
                left_limit_ratio,
            } => {
                if psi.iter().any(|p| !p.is_finite()) {
                    return bad("/kappa/psi", "entries must be finite".into());
                }
                if !(*left_limit_ratio > 0.0) || !left_limit_ratio.is_finite() {
                    return bad("/kappa/left_limit_ratio", "must be positive".into());
                }
            }
            KappaConfig::Calibrate {
                grid_size, degree, ..
            } => {
                if *grid_size < 2 {
                    return bad("/kappa/grid_size", "must be >= 2".into());
                }
                if degree + 1 > *grid_size {
                    return bad("/kappa/degree", format!("needs grid_size >= {}", degree + 1));
                }
                if self.burnin_fraction == 0.0 {
                    return bad(
                        "/burnin_fraction",
                        "calibration uses the burn-in, so it must be > 0".into(),
                    );
                }
            }
            KappaConfig::Xi { xi } => {
                if !(*xi > 0.0) || !xi.is_finite() {
                    return bad("/kappa/xi", format!("must be positive, got {xi}"));
                }
            }
        }
        if self.alpha == 0.0 && !matches!(self.kappa, KappaConfig::Xi { .. }) {
            return bad("/kappa", "alpha = 0 needs kappa mode \"xi\"".into());
        }
        let tempered = self.alpha < 1.0;
        match &self.model {
            ModelConfig::Spikeslab(s) => {
                if let Err(e) = s.validate() {
                    return bad("/model", e.to_string());
                }
                if self.base.is_some() {
                    return bad("/base", "the spike-and-slab path has no base".into());
                }
                match &self.kappa {
                    KappaConfig::Explicit { psi, .. } if psi.iter().all(|&p| p == 0.0) => {}
                    _ => {
                        return bad(
                            "/kappa",
                            "the spike-and-slab path uses flat kappa (explicit, psi all zero)".into(),
                        )
                    }
                }
            }
            ModelConfig::Gaussian(_) | ModelConfig::Mixture(_) => {
                if tempered && self.base.is_none() {
                    return bad("/base", "a base distribution is required when alpha < 1".into());
                }
            }
            ModelConfig::Boltzmann(b) => {
                if !(b.jitter >= 0.0) {
                    return bad("/model/jitter", "must be >= 0".into());
                }
            }
        }
        Ok(())
    }

    /// Number of burn-in jumps or burn-in path time, and the rest.
    pub fn split_horizon(&self) -> (Horizon, Horizon) {
        match self.horizon {
            Horizon::Events(k) => {
                let burn = ((k as f64) * self.burnin_fraction).round() as usize;
                let burn = burn.clamp(1, k - 1);
                (Horizon::Events(burn), Horizon::Events(k - burn))
            }
            Horizon::PathTime(t) => {
                let burn = t * self.burnin_fraction;
                if burn > 0.0 {
                    (Horizon::PathTime(burn), Horizon::PathTime(t - burn))
                } else {
                    (Horizon::PathTime(t * 1e-9), Horizon::PathTime(t * (1.0 - 1e-9)))
                }
            }
        }
    }
}

/// Parses a config, reporting the JSON pointer of any error.
pub fn parse_config(text: &str) -> Result<RunConfig> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let cfg: RunConfig = serde_path_to_error::deserialize(de).map_err(|e| {
        let pointer = to_pointer(&e.path().to_string());
        if pointer == "/model" {
            if let Some(deeper) = model_error(text) {
                return deeper;
            }
        }
        Error::Config {
            pointer,
            message: e.inner().to_string(),
        }
    })?;
    cfg.validate()?;
    Ok(cfg)
}

fn variant_error<T: serde::de::DeserializeOwned>(body: serde_json::Value) -> Option<Error> {
    serde_path_to_error::deserialize::<_, T>(body).err().map(|e| Error::Config {
        pointer: format!("/model{}", to_pointer(&e.path().to_string()).trim_end_matches('/')),
        message: e.inner().to_string(),
    })
}

/// Tagged enums buffer their content and lose the path, so the model body is
/// re-read as its variant to locate the failing field.
fn model_error(text: &str) -> Option<Error> {
    let root: serde_json::Value = serde_json::from_str(text).ok()?;
    let mut body = root.get("model")?.as_object()?.clone();
    let tag = body.remove("type")?;
    let body = serde_json::Value::Object(body);
    match tag.as_str()? {
        "gaussian" => variant_error::<GaussianSpec>(body),
        "mixture" => variant_error::<MixtureSpec>(body),
        "boltzmann" => variant_error::<BoltzmannConfig>(body),
        "spikeslab" => variant_error::<SpikeSlabSpec>(body),
        _ => None,
    }
}

pub fn load_config(path: &Path) -> Result<RunConfig> {
    parse_config(&std::fs::read_to_string(path)?)
}

/// `a.b[2].c` to `/a/b/2/c`.
pub(crate) fn to_pointer(path: &str) -> String {
    if path == "." || path.is_empty() {
        return "/".into();
    }
    let mut out = String::new();
    for part in path.split('.') {
        let mut rest = part;
        if let Some(i) = rest.find('[') {
            if i > 0 {
                out.push('/');
                out.push_str(&rest[..i]);
            }
            rest = &rest[i..];
            while let Some(end) = rest.find(']') {
                out.push('/');
                out.push_str(&rest[1..end]);
                rest = &rest[end + 1..];
            }
        } else {
            out.push('/');
            out.push_str(rest);
        }
    }
    out
}
