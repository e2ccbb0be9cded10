//! Atomic artifact writes and the run manifest.

use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;
use tempfile::NamedTempFile;

use crate::config::RunConfig;
use crate::CliError;

pub struct Artifacts {
    dir: PathBuf,
    written: Vec<String>,
}

impl Artifacts {
    pub fn create(dir: &Path) -> Result<Self, CliError> {
        std::fs::create_dir_all(dir).map_err(|e| CliError::Runtime(format!("{}: {e}", dir.display())))?;
        Ok(Artifacts {
            dir: dir.to_path_buf(),
            written: Vec::new(),
        })
    }

    /// Writes `name` through a temporary file in the same directory, synced
    /// and then renamed over the target.
    pub fn write(&mut self, name: &str, body: impl FnOnce(&mut dyn Write) -> tse_core::Result<()>) -> Result<(), CliError> {
        let target = self.dir.join(name);
        let fail = |e: &dyn std::fmt::Display| CliError::Runtime(format!("{}: {e}", target.display()));
        let tmp = NamedTempFile::new_in(&self.dir).map_err(|e| fail(&e))?;
        {
            let mut w = BufWriter::new(tmp.as_file());
            body(&mut w).map_err(|e| fail(&e))?;
            w.flush().map_err(|e| fail(&e))?;
        }
        tmp.as_file().sync_all().map_err(|e| fail(&e))?;
        tmp.persist(&target).map_err(|e| fail(&e.error))?;
        self.written.push(name.to_string());
        Ok(())
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), CliError> {
        self.write(name, |w| {
            serde_json::to_writer_pretty(&mut *w, value)?;
            w.write_all(b"\n").map_err(|e| tse_core::Error::Io {
                path: name.into(),
                source: e,
            })
        })
    }

    pub fn names(&self) -> &[String] {
        &self.written
    }
}

/// Everything needed to replay a run: passing this file back as `--config`
/// uses the `config` echo.
#[derive(Debug, Serialize)]
pub struct Manifest<'a> {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: &'static str,
    pub config: &'a RunConfig,
    pub seeds: Vec<(String, u64)>,
    pub seed_derivation: &'static str,
    pub artifacts: Vec<String>,
    pub wall_time_s: f64,
}

pub const SEED_DERIVATION: &str =
    "h0 = splitmix64(master); h(k+1) = splitmix64(h(k) xor splitmix64(path[k] + 0x9E3779B97F4A7C15)); path = [stream, repetition] with stream 1 = penetration sampling, 2 = corruption";
