use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::Task;
use crate::error::Result;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Artifact {
    /// File name inside the output directory.
    pub path: String,
    pub bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub stage: String,
    pub seconds: f64,
}

/// Everything needed to reproduce a run: the effective task, derived seeds,
/// inputs, produced artifacts and per-stage timings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub task: Task,
    pub seeds: BTreeMap<String, u64>,
    pub inputs: Vec<PathBuf>,
    pub artifacts: Vec<Artifact>,
    pub timings: Vec<Timing>,
    #[serde(default)]
    pub failures: Vec<String>,
}

impl Manifest {
    pub fn new(task: &Task) -> Self {
        let inputs = [
            &task.config.inputs.matrix,
            &task.config.inputs.observation,
            &task.config.inputs.support,
            &task.config.inputs.capital,
        ]
        .into_iter()
        .flatten()
        .cloned()
        .collect();
        Self {
            tool: env!("CARGO_PKG_NAME").into(),
            version: env!("CARGO_PKG_VERSION").into(),
            task: task.clone(),
            seeds: BTreeMap::new(),
            inputs,
            artifacts: Vec::new(),
            timings: Vec::new(),
            failures: Vec::new(),
        }
    }

    pub fn file_name(command: &str) -> String {
        format!("{command}.manifest.json")
    }

    pub fn load(path: &Path) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }

    fn dir(&self) -> &Path {
        &self.task.config.output_dir
    }

    /// Runs `f`, recording its wall time under `stage`.
    pub fn stage<T>(&mut self, stage: &str, f: impl FnOnce() -> Result<T>) -> Result<T> {
        let start = Instant::now();
        log::info!("stage {stage}");
        let out = f();
        self.timings.push(Timing {
            stage: stage.into(),
            seconds: start.elapsed().as_secs_f64(),
        });
        out
    }

    /// Writes one artifact into the output directory.
    pub fn write(&mut self, name: &str, f: impl FnOnce(&mut dyn Write) -> Result<()>) -> Result<()> {
        let path = self.dir().join(name);
        let mut w = BufWriter::new(File::create(&path)?);
        f(&mut w)?;
        w.flush()?;
        drop(w);
        self.artifacts.push(Artifact {
            path: name.into(),
            bytes: std::fs::metadata(&path)?.len(),
        });
        Ok(())
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        self.write(name, |w| {
            serde_json::to_writer_pretty(&mut *w, value)?;
            writeln!(w)?;
            Ok(())
        })
    }

    pub fn save(&self) -> Result<PathBuf> {
        let path = self.dir().join(Self::file_name(&self.task.command));
        let mut w = BufWriter::new(File::create(&path)?);
        serde_json::to_writer_pretty(&mut w, self)?;
        writeln!(w)?;
        w.flush()?;
        Ok(path)
    }
}
