//! The `netrecon` command-line front end.

mod commands;
pub mod config;
pub mod manifest;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use serde_json::json;

pub use config::{parse_config, parse_config_str, RunConfig, SCHEMA_VERSION};
pub use manifest::Manifest;

use crate::error::{Error, Result};

#[derive(Debug, Parser)]
#[command(name = "netrecon", version, about = "Interbank network reconstruction and stress testing")]
pub struct Cli {
    /// Increase log verbosity (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct ConfigArg {
    /// Run configuration (JSON).
    #[arg(short, long)]
    pub config: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ReconMethod {
    /// Dense maximum entropy over every free entry.
    Me,
    /// Maximum entropy restricted to a given support.
    SupportMe,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Draw a synthetic network and capitals from the configured ensemble.
    Generate(ConfigArg),
    /// Apply the disclosure threshold to a matrix.
    Observe(ConfigArg),
    /// Reconstruct the undisclosed entries.
    Reconstruct {
        #[command(flatten)]
        cfg: ConfigArg,
        #[arg(long, value_enum)]
        method: ReconMethod,
    },
    /// Sample compatible supports by decimation.
    Sample {
        #[command(flatten)]
        cfg: ConfigArg,
        #[arg(long)]
        z: Option<f64>,
        #[arg(long)]
        count: Option<usize>,
    },
    /// Search for the sparsest compatible support.
    LambdaMax(ConfigArg),
    /// Entropy of compatible supports along a fugacity grid.
    Entropy {
        #[command(flatten)]
        cfg: ConfigArg,
        #[arg(long, value_delimiter = ',')]
        z_grid: Option<Vec<f64>>,
    },
    /// Furfine default curve of a matrix.
    Stress {
        #[command(flatten)]
        cfg: ConfigArg,
        #[arg(long, value_delimiter = ',')]
        alpha_grid: Option<Vec<f64>>,
    },
    /// Maximal sparsity and entropy across disclosure thresholds.
    ThresholdSweep(ConfigArg),
    /// Default curves of the true network and its reconstructions.
    Compare(ConfigArg),
    /// Re-run the command recorded in a manifest.
    Replay {
        manifest: PathBuf,
        /// Write artifacts here instead of the recorded directory.
        #[arg(long)]
        output_dir: Option<PathBuf>,
    },
}

/// A command with every override folded into its configuration; this is
/// what a manifest records.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Task {
    pub command: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub method: Option<ReconMethod>,
    pub config: RunConfig,
}

impl Task {
    fn from_command(command: Command) -> Result<Self> {
        let (name, method, cfg) = match command {
            Command::Generate(c) => ("generate", None, parse_config(&c.config)?),
            Command::Observe(c) => ("observe", None, parse_config(&c.config)?),
            Command::Reconstruct { cfg, method } => ("reconstruct", Some(method), parse_config(&cfg.config)?),
            Command::Sample { cfg, z, count } => {
                let mut c = parse_config(&cfg.config)?;
                if let Some(z) = z {
                    c.sample.z = z;
                }
                if let Some(n) = count {
                    c.sample.count = n;
                }
                ("sample", None, c)
            }
            Command::LambdaMax(c) => ("lambda-max", None, parse_config(&c.config)?),
            Command::Entropy { cfg, z_grid } => {
                let mut c = parse_config(&cfg.config)?;
                if let Some(g) = z_grid {
                    c.z_grid = g;
                }
                ("entropy", None, c)
            }
            Command::Stress { cfg, alpha_grid } => {
                let mut c = parse_config(&cfg.config)?;
                if let Some(g) = alpha_grid {
                    c.alpha_grid = g;
                }
                ("stress", None, c)
            }
            Command::ThresholdSweep(c) => ("threshold-sweep", None, parse_config(&c.config)?),
            Command::Compare(c) => ("compare", None, parse_config(&c.config)?),
            Command::Replay { manifest, output_dir } => {
                let m = Manifest::load(&manifest)?;
                let mut task = m.task;
                if let Some(dir) = output_dir {
                    config::ensure_output_dir(&dir)?;
                    task.config.output_dir = dir.canonicalize()?;
                }
                return Ok(task);
            }
        };
        Ok(Task {
            command: name.into(),
            method,
            config: cfg,
        })
    }
}

fn error_json(e: &Error) -> serde_json::Value {
    let mut body = json!({ "kind": e.kind(), "message": e.to_string() });
    if let Error::Config(list) = e {
        body["errors"] = json!(list);
    }
    json!({ "error": body })
}

/// Parses arguments, runs the command and returns the process exit code:
/// 0 on success, 1 when a stage failed, 2 for configuration errors.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).try_init();

    let outcome = Task::from_command(cli.command).and_then(|task| {
        let errors = task.config.validate();
        if !errors.is_empty() {
            return Err(Error::Config(errors));
        }
        commands::execute(&task)
    });
    match outcome {
        Ok(m) if m.failures.is_empty() => 0,
        Ok(m) => {
            let body = json!({ "error": {
                "kind": "stage_failures",
                "message": format!("{} stage(s) failed", m.failures.len()),
                "failures": m.failures,
            }});
            eprintln!("{body}");
            1
        }
        Err(e) => {
            eprintln!("{}", error_json(&e));
            if matches!(e, Error::Config(_)) {
                2
            } else {
                1
            }
        }
    }
}
