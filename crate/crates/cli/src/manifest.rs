use std::io::Write;
use std::path::Path;

use anyhow::Context;
use serde::{Deserialize, Serialize};

use crate::config::{config_error, parse_json, Job};

pub const MANIFEST: &str = "manifest.json";

/// Everything needed to reproduce a run's outputs. Carries no timestamps or
/// host details so that a replay writes the same bytes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunManifest {
    pub tool_version: String,
    pub subcommand: String,
    pub seed: u64,
    /// Resolved configuration with every default filled in.
    pub config: serde_json::Value,
    /// Paths relative to the manifest's directory.
    pub outputs: Vec<String>,
}

impl RunManifest {
    pub fn new(job: &Job, outputs: Vec<String>) -> Self {
        Self {
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            subcommand: job.subcommand().to_string(),
            seed: job.seed(),
            config: job.config_value(),
            outputs,
        }
    }

    pub fn job(&self) -> anyhow::Result<Job> {
        let job = Job::from_value(&self.subcommand, self.config.clone())?;
        if job.seed() != self.seed {
            return Err(config_error(format!(
                "manifest: seed {} disagrees with the config seed {}",
                self.seed,
                job.seed()
            )));
        }
        Ok(job)
    }

    pub fn write(&self, dir: &Path) -> anyhow::Result<()> {
        let path = dir.join(MANIFEST);
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        std::fs::File::create(&path)
            .and_then(|mut f| f.write_all(text.as_bytes()))
            .with_context(|| format!("writing {}", path.display()))
    }

    pub fn read(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| config_error(format!("{}: {e}", path.display())))?;
        parse_json(&text, &path.display().to_string())
    }
}
