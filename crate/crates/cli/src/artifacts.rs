//! Output files. Every JSON artifact is an envelope `{meta, result}` and
//! every CSV starts with a `#` line carrying the same metadata; neither
//! contains timestamps, so reruns are byte-identical.

use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

pub const TOOL: &str = "ifcausal";
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Meta {
    pub tool: String,
    pub version: String,
    pub config_hash: String,
    pub seed: u64,
    pub command: String,
}

impl Meta {
    pub fn new(command: &str, config_hash: &str, seed: u64) -> Meta {
        Meta {
            tool: TOOL.into(),
            version: VERSION.into(),
            config_hash: config_hash.into(),
            seed,
            command: command.into(),
        }
    }

    /// Single-line rendering used as the first line of CSV artifacts.
    pub fn comment_line(&self) -> String {
        format!(
            "# tool={} version={} config_hash={} seed={} command={}\n",
            self.tool, self.version, self.config_hash, self.seed, self.command
        )
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Envelope<T> {
    pub meta: Meta,
    pub result: T,
}

/// Writes artifacts for one command into the output directory.
#[derive(Debug, Clone)]
pub struct ArtifactWriter {
    dir: PathBuf,
    meta: Meta,
    written: Vec<PathBuf>,
}

fn io_error(path: &Path, e: std::io::Error) -> CliError {
    ifcausal::Error::io(path, e).into()
}

impl ArtifactWriter {
    pub fn new(dir: &Path, meta: Meta) -> CliResult<ArtifactWriter> {
        std::fs::create_dir_all(dir).map_err(|e| io_error(dir, e))?;
        Ok(ArtifactWriter { dir: dir.to_path_buf(), meta, written: Vec::new() })
    }

    pub fn meta(&self) -> &Meta {
        &self.meta
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    /// Files written so far, in order.
    pub fn written(&self) -> &[PathBuf] {
        &self.written
    }

    fn write(&mut self, name: &str, bytes: &[u8]) -> CliResult<()> {
        let path = self.path(name);
        std::fs::write(&path, bytes).map_err(|e| io_error(&path, e))?;
        self.written.push(path);
        Ok(())
    }

    pub fn json<T: Serialize>(&mut self, name: &str, result: &T) -> CliResult<()> {
        let envelope = Envelope { meta: self.meta.clone(), result };
        let mut text = serde_json::to_string_pretty(&envelope).map_err(ifcausal::Error::from)?;
        text.push('\n');
        self.write(name, text.as_bytes())
    }

    /// CSV body (header and rows) preceded by the metadata comment line.
    pub fn csv(&mut self, name: &str, body: &str) -> CliResult<()> {
        let text = format!("{}{body}", self.meta.comment_line());
        self.write(name, text.as_bytes())
    }

    pub fn text(&mut self, name: &str, body: &str) -> CliResult<()> {
        self.write(name, body.as_bytes())
    }
}

/// Read the `result` of a JSON artifact.
pub fn read_json<T: DeserializeOwned>(path: &Path) -> CliResult<Envelope<T>> {
    let text = std::fs::read_to_string(path).map_err(|e| io_error(path, e))?;
    serde_json::from_str(&text).map_err(|e| CliError::Config(format!("cannot parse {}: {e}", path.display())))
}
