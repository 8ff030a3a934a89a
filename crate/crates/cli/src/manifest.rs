use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::CliError;

pub const MANIFEST_FILE: &str = "run.json";

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileHash {
    pub path: String,
    pub sha256: String,
}

impl FileHash {
    pub fn of_bytes(path: impl Into<String>, bytes: &[u8]) -> Self {
        FileHash { path: path.into(), sha256: hex::encode(Sha256::digest(bytes)) }
    }

    pub fn of_file(path: &Path) -> Result<Self, CliError> {
        let bytes = fs::read(path).map_err(|e| CliError::io(path, e))?;
        Ok(Self::of_bytes(path.display().to_string(), &bytes))
    }
}

/// Completion record of one command.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageRecord {
    pub stage: String,
    pub inputs: Vec<FileHash>,
    /// Output paths relative to the stage directory.
    pub outputs: Vec<FileHash>,
}

/// Provenance of every command run against one output directory.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunManifest {
    pub config: Option<String>,
    pub seed: Option<u64>,
    pub out_dir: String,
    pub stages: Vec<StageRecord>,
    /// Persisted winning model, relative to the output directory.
    pub winner: Option<String>,
}

impl RunManifest {
    pub fn path(out: &Path) -> PathBuf {
        out.join(MANIFEST_FILE)
    }

    /// The manifest in `out`, or a fresh one when none exists yet.
    pub fn load_or_new(out: &Path) -> Result<Self, CliError> {
        let path = Self::path(out);
        if !path.exists() {
            return Ok(RunManifest { out_dir: out.display().to_string(), ..Default::default() });
        }
        Self::load(out)
    }

    pub fn load(out: &Path) -> Result<Self, CliError> {
        let path = Self::path(out);
        let text = fs::read_to_string(&path).map_err(|e| CliError::io(&path, e))?;
        serde_json::from_str(&text).map_err(|e| CliError::Manifest(format!("{}: {e}", path.display())))
    }

    pub fn save(&self, out: &Path) -> Result<(), CliError> {
        let path = Self::path(out);
        let text = serde_json::to_string_pretty(self).expect("manifest serialises") + "\n";
        fs::write(&path, text).map_err(|e| CliError::io(&path, e))
    }

    pub fn stage(&self, name: &str) -> Option<&StageRecord> {
        self.stages.iter().find(|s| s.stage == name)
    }

    /// Replace the record for `record.stage`, keeping its position.
    pub fn record(&mut self, record: StageRecord) {
        match self.stages.iter_mut().find(|s| s.stage == record.stage) {
            Some(existing) => *existing = record,
            None => self.stages.push(record),
        }
    }
}

/// Writes stage outputs and remembers their hashes.
#[derive(Debug)]
pub struct StageWriter {
    dir: PathBuf,
    written: Vec<FileHash>,
}

impl StageWriter {
    pub fn new(dir: &Path) -> Result<Self, CliError> {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        Ok(StageWriter { dir: dir.to_path_buf(), written: Vec::new() })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn write(&mut self, relative: &str, contents: &str) -> Result<PathBuf, CliError> {
        let path = self.dir.join(relative);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(|e| CliError::io(parent, e))?;
        }
        fs::write(&path, contents).map_err(|e| CliError::io(&path, e))?;
        self.written.retain(|f| f.path != relative);
        self.written.push(FileHash::of_bytes(relative, contents.as_bytes()));
        Ok(path)
    }

    pub fn finish(self) -> Vec<FileHash> {
        self.written
    }
}
