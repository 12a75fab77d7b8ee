use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::bpcore::{log_grid, BpOptions};
use crate::contagion::Method;
use crate::ensembles::EnsembleSpec;
use crate::error::{Error, Result};
use crate::maxent::MeOptions;
use crate::sampler::DecimationOptions;
use crate::thresholdlab::default_theta_grid;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema_version: u32,
    pub output_dir: PathBuf,
    /// Master seed for every randomized stage. Required by experiment
    /// commands.
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub ensemble: Option<EnsembleSpec>,
    #[serde(default)]
    pub inputs: Inputs,
    #[serde(default = "default_theta")]
    pub theta: f64,
    /// Entries disclosed regardless of size, as `[i, j]` pairs.
    #[serde(default)]
    pub disclosed: Vec<[usize; 2]>,
    #[serde(default)]
    pub bp: BpOptions,
    #[serde(default)]
    pub me: MeOptions,
    #[serde(default)]
    pub decimation: DecimationOptions,
    #[serde(default = "default_alpha_grid")]
    pub alpha_grid: Vec<f64>,
    #[serde(default = "default_z_grid")]
    pub z_grid: Vec<f64>,
    #[serde(default = "default_thetas")]
    pub theta_grid: Vec<f64>,
    #[serde(default)]
    pub sample: SampleConfig,
    #[serde(default)]
    pub lambda_max: LambdaMaxConfig,
    #[serde(default)]
    pub compare: CompareConfig,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Inputs {
    /// Liability matrix CSV.
    pub matrix: Option<PathBuf>,
    /// Observation JSON.
    pub observation: Option<PathBuf>,
    /// Support JSON over the observation's free entries.
    pub support: Option<PathBuf>,
    /// Capital CSV (`bank,capital`).
    pub capital: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SampleConfig {
    pub z: f64,
    pub count: usize,
}

impl Default for SampleConfig {
    fn default() -> Self {
        Self { z: 1.0, count: 10 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LambdaMaxConfig {
    pub trials: usize,
}

impl Default for LambdaMaxConfig {
    fn default() -> Self {
        Self { trials: 50 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CompareConfig {
    /// Ensemble draws averaged per curve.
    pub replicas: usize,
    pub support_samples: usize,
    pub lambda_max_trials: usize,
    pub methods: Vec<Method>,
    /// Leave bank 0 out of triggers and fractions (useful with closure).
    pub exclude_closure_bank: bool,
}

impl Default for CompareConfig {
    fn default() -> Self {
        Self {
            replicas: 1,
            support_samples: 10,
            lambda_max_trials: 10,
            methods: Method::ALL.to_vec(),
            exclude_closure_bank: false,
        }
    }
}

fn default_theta() -> f64 {
    1.0
}

fn default_alpha_grid() -> Vec<f64> {
    (0..=20).map(|k| k as f64 / 20.0).collect()
}

fn default_z_grid() -> Vec<f64> {
    log_grid(1e-3, 1e3, 13)
}

fn default_thetas() -> Vec<f64> {
    default_theta_grid(9)
}

/// Reads, type-checks and range-checks a configuration file. Relative paths
/// are resolved against the file's directory. A missing output directory is
/// created.
pub fn parse_config(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path)?;
    let base = path.parent().unwrap_or(Path::new("."));
    let mut cfg = parse_config_str(&text, base)?;
    ensure_output_dir(&cfg.output_dir)?;
    cfg.output_dir = cfg.output_dir.canonicalize()?;
    Ok(cfg)
}

/// As [`parse_config`] without touching the file system beyond checking
/// that input files exist.
pub fn parse_config_str(text: &str, base: &Path) -> Result<RunConfig> {
    let value: serde_json::Value =
        serde_json::from_str(text).map_err(|e| Error::Config(vec![format!("malformed JSON: {e}")]))?;
    match value.get("schema_version") {
        Some(v) if v.as_u64() == Some(SCHEMA_VERSION as u64) => {}
        Some(v) => {
            return Err(Error::Config(vec![format!(
                "schema_version: unsupported version {v}, expected {SCHEMA_VERSION}"
            )]))
        }
        None => return Err(Error::Config(vec!["schema_version: missing".into()])),
    }
    let mut cfg: RunConfig = serde_path_to_error::deserialize(value).map_err(|e| {
        let path = e.path().to_string();
        Error::Config(vec![format!("{path}: {}", e.into_inner())])
    })?;
    cfg.resolve_paths(base);
    let errors = cfg.validate();
    if errors.is_empty() {
        Ok(cfg)
    } else {
        Err(Error::Config(errors))
    }
}

pub fn ensure_output_dir(dir: &Path) -> Result<()> {
    if !dir.exists() {
        log::warn!("output directory {} does not exist, creating it", dir.display());
        std::fs::create_dir_all(dir)?;
    }
    Ok(())
}

fn check_grid(errors: &mut Vec<String>, field: &str, grid: &[f64], ok: impl Fn(f64) -> bool, range: &str) {
    if grid.is_empty() {
        errors.push(format!("{field}: must not be empty"));
    }
    for (k, &v) in grid.iter().enumerate() {
        if !ok(v) {
            errors.push(format!("{field}[{k}]: {v} is outside {range}"));
        }
    }
    if grid.windows(2).any(|w| w[0] > w[1]) {
        errors.push(format!("{field}: must be sorted in increasing order"));
    }
}

impl RunConfig {
    fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.output_dir);
        for p in [
            &mut self.inputs.matrix,
            &mut self.inputs.observation,
            &mut self.inputs.support,
            &mut self.inputs.capital,
        ]
        .into_iter()
        .flatten()
        {
            fix(p);
        }
    }

    /// Range errors, each prefixed with the path of the offending field.
    pub fn validate(&self) -> Vec<String> {
        let mut errors = Vec::new();
        if let Some(spec) = &self.ensemble {
            if let Err(e) = spec.validate() {
                let msg = match e {
                    Error::InvalidParameter(m) => m,
                    other => other.to_string(),
                };
                errors.push(format!("ensemble.{msg}"));
            }
        }
        if !(self.theta > 0.0) || !self.theta.is_finite() {
            errors.push(format!("theta: must be > 0, got {}", self.theta));
        }
        check_grid(&mut errors, "alpha_grid", &self.alpha_grid, |a| (0.0..=1.0).contains(&a), "[0, 1]");
        check_grid(&mut errors, "z_grid", &self.z_grid, |z| z > 0.0 && z.is_finite(), "(0, inf)");
        check_grid(&mut errors, "theta_grid", &self.theta_grid, |t| t > 0.0 && t.is_finite(), "(0, inf)");
        let bp = &self.bp;
        if !(bp.tol > 0.0) {
            errors.push(format!("bp.tol: must be > 0, got {}", bp.tol));
        }
        if !(0.0..1.0).contains(&bp.damping) {
            errors.push(format!("bp.damping: must be in [0, 1), got {}", bp.damping));
        }
        if bp.max_sweeps == 0 {
            errors.push("bp.max_sweeps: must be >= 1".into());
        }
        let dec = &self.decimation;
        if !(0.0..1.0).contains(&dec.fix_fraction) {
            errors.push(format!(
                "decimation.fix_fraction: must be in [0, 1), got {}",
                dec.fix_fraction
            ));
        }
        if !(dec.bp.tol > 0.0) || !(0.0..1.0).contains(&dec.bp.damping) || dec.bp.max_sweeps == 0 {
            errors.push("decimation.bp: tol > 0, damping in [0, 1) and max_sweeps >= 1 required".into());
        }
        if !(self.me.tolerance > 0.0) {
            errors.push(format!("me.tolerance: must be > 0, got {}", self.me.tolerance));
        }
        if !(self.me.prior_value > 0.0) {
            errors.push(format!("me.prior_value: must be > 0, got {}", self.me.prior_value));
        }
        if self.me.max_iterations == 0 {
            errors.push("me.max_iterations: must be >= 1".into());
        }
        if !(self.sample.z > 0.0) || !self.sample.z.is_finite() {
            errors.push(format!("sample.z: must be > 0, got {}", self.sample.z));
        }
        if self.sample.count == 0 {
            errors.push("sample.count: must be >= 1".into());
        }
        if self.lambda_max.trials == 0 {
            errors.push("lambda_max.trials: must be >= 1".into());
        }
        if self.compare.replicas == 0 {
            errors.push("compare.replicas: must be >= 1".into());
        }
        if self.compare.support_samples == 0 {
            errors.push("compare.support_samples: must be >= 1".into());
        }
        if self.compare.lambda_max_trials == 0 {
            errors.push("compare.lambda_max_trials: must be >= 1".into());
        }
        if self.compare.methods.is_empty() {
            errors.push("compare.methods: must not be empty".into());
        }
        for (name, p) in [
            ("inputs.matrix", &self.inputs.matrix),
            ("inputs.observation", &self.inputs.observation),
            ("inputs.support", &self.inputs.support),
            ("inputs.capital", &self.inputs.capital),
        ] {
            if let Some(p) = p {
                if !p.is_file() {
                    errors.push(format!("{name}: file {} does not exist", p.display()));
                }
            }
        }
        errors
    }

    pub fn require_seed(&self, command: &str) -> Result<u64> {
        self.seed
            .ok_or_else(|| Error::Config(vec![format!("seed: required for `{command}`")]))
    }
}
