//! Run directory with a manifest of everything written into it.

use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::RunConfig;
use crate::error::{CliError, CliResult};

/// Environment variable naming the default output root.
pub const OUTPUT_ROOT_ENV: &str = "CHANCE_DESIGN_OUTPUT_ROOT";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FileEntry {
    pub path: String,
    pub bytes: u64,
    pub sha256: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub config_hash: String,
    pub code_version: String,
    pub parallel: bool,
    pub started_unix: u64,
    pub finished_unix: u64,
    pub pde_solves: usize,
    pub files: Vec<FileEntry>,
}

pub struct RunDir {
    dir: PathBuf,
    command: String,
    config_hash: String,
    started: u64,
    files: Vec<FileEntry>,
}

fn now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs())
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io { path: path.display().to_string(), source }
}

/// Output root: explicit flag, then the environment, then `./runs`.
pub fn output_root(flag: Option<&Path>) -> PathBuf {
    flag.map(Path::to_path_buf)
        .or_else(|| std::env::var_os(OUTPUT_ROOT_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("runs"))
}

fn remove_previous(dir: &Path) -> CliResult<()> {
    let path = dir.join("manifest.json");
    let Ok(text) = std::fs::read_to_string(&path) else { return Ok(()) };
    let old: RunManifest = serde_json::from_str(&text)
        .map_err(|e| CliError::Config(format!("{} is not a run manifest: {e}", path.display())))?;
    for f in &old.files {
        // manifests only ever list bare names written by `RunDir::write`
        if !f.path.contains(['/', '\\']) && !f.path.starts_with('.') {
            let p = dir.join(&f.path);
            if p.is_file() {
                std::fs::remove_file(&p).map_err(io_err(&p))?;
            }
        }
    }
    std::fs::remove_file(&path).map_err(io_err(&path))
}

impl RunDir {
    /// Creates `<root>/<config.name>/<command>` and echoes the resolved
    /// config into it. Files listed by an earlier manifest there are removed
    /// so a rerun never mixes outputs; anything else is left alone.
    pub fn create(root: &Path, command: &str, cfg: &RunConfig) -> CliResult<Self> {
        let dir = root.join(&cfg.name).join(command);
        std::fs::create_dir_all(&dir).map_err(io_err(&dir))?;
        remove_previous(&dir)?;
        let mut run = Self { dir, command: command.into(), config_hash: cfg.hash(), started: now(), files: Vec::new() };
        run.write_json("config.json", cfg)?;
        Ok(run)
    }

    pub fn path(&self) -> &Path {
        &self.dir
    }

    /// Writes `name` (a bare file name) and records it in the manifest.
    pub fn write(&mut self, name: &str, bytes: &[u8]) -> CliResult<()> {
        if name.is_empty() || name.contains(['/', '\\']) || name.starts_with('.') || name == "manifest.json" {
            return Err(CliError::Config(format!("refusing to write `{name}` in the run directory")));
        }
        let path = self.dir.join(name);
        std::fs::write(&path, bytes).map_err(io_err(&path))?;
        self.files.retain(|f| f.path != name);
        self.files.push(FileEntry {
            path: name.into(),
            bytes: bytes.len() as u64,
            sha256: hex::encode(Sha256::digest(bytes)),
        });
        Ok(())
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> CliResult<()> {
        let mut text = serde_json::to_string_pretty(value).expect("serializable output");
        text.push('\n');
        self.write(name, text.as_bytes())
    }

    /// One JSON document per line.
    pub fn write_jsonl<T: Serialize>(&mut self, name: &str, rows: &[T]) -> CliResult<()> {
        let mut text = String::new();
        for r in rows {
            text.push_str(&serde_json::to_string(r).expect("serializable row"));
            text.push('\n');
        }
        self.write(name, text.as_bytes())
    }

    pub fn write_csv(&mut self, name: &str, header: &[&str], rows: &[Vec<f64>]) -> CliResult<()> {
        let mut text = header.join(",");
        text.push('\n');
        for r in rows {
            text.push_str(&r.iter().map(|v| format!("{v:e}")).collect::<Vec<_>>().join(","));
            text.push('\n');
        }
        self.write(name, text.as_bytes())
    }

    pub fn finish(self, pde_solves: usize) -> CliResult<RunManifest> {
        let manifest = RunManifest {
            command: self.command,
            config_hash: self.config_hash,
            code_version: env!("CARGO_PKG_VERSION").into(),
            parallel: chance_design::par::is_parallel(),
            started_unix: self.started,
            finished_unix: now(),
            pde_solves,
            files: self.files,
        };
        let path = self.dir.join("manifest.json");
        let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes") + "\n";
        std::fs::write(&path, text).map_err(io_err(&path))?;
        Ok(manifest)
    }
}
