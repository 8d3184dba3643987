use std::fs;
use std::path::{Path, PathBuf};
use std::time::SystemTime;

use ganvo_core::{Error, Result};
use serde::{Deserialize, Serialize};

pub const FILE_NAME: &str = "run_manifest.json";

/// Record of one invocation, written before any heavy work and rewritten
/// when the command ends.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub args: Vec<String>,
    pub config: Option<PathBuf>,
    pub seed: u64,
    pub build_id: String,
    pub started_at: String,
    pub finished_at: Option<String>,
    pub out_dir: PathBuf,
    pub complete: bool,
    pub error: Option<String>,
}

fn now() -> String {
    humantime::format_rfc3339_seconds(SystemTime::now()).to_string()
}

impl RunManifest {
    pub fn start(command: &str, out_dir: &Path, config: Option<&Path>, seed: u64) -> Result<Self> {
        fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
        let m = Self {
            command: command.into(),
            args: std::env::args().collect(),
            config: config.map(Path::to_path_buf),
            seed,
            build_id: env!("GANVO_BUILD_ID").into(),
            started_at: now(),
            finished_at: None,
            out_dir: out_dir.to_path_buf(),
            complete: false,
            error: None,
        };
        m.write()?;
        Ok(m)
    }

    pub fn path(&self) -> PathBuf {
        self.out_dir.join(FILE_NAME)
    }

    fn write(&self) -> Result<()> {
        let path = self.path();
        let json = serde_json::to_string_pretty(self).expect("manifest serializes");
        fs::write(&path, json + "\n").map_err(|e| Error::io(&path, e))
    }

    pub fn finish(mut self, outcome: &Result<()>) -> Result<()> {
        self.finished_at = Some(now());
        self.complete = outcome.is_ok();
        self.error = outcome.as_ref().err().map(ToString::to_string);
        self.write()
    }
}

/// Runs `body` between writing the manifest and marking it finished.
pub fn with_manifest(
    command: &str,
    out_dir: &Path,
    config: Option<&Path>,
    seed: u64,
    body: impl FnOnce() -> Result<()>,
) -> Result<()> {
    let manifest = RunManifest::start(command, out_dir, config, seed)?;
    log::info!("{command}: writing to {}", out_dir.display());
    let outcome = body();
    manifest.finish(&outcome)?;
    outcome
}
