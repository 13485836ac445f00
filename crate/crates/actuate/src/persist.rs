//! Model files and atomic file output.

use std::io::Write;
use std::path::Path;

use actuate_core::{DeviceLocalModel, Registry};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub const FORMAT: &str = "actuate-models/1";

/// Writes `bytes` to a temporary file next to `path` and renames it into
/// place, so a failed run never leaves a partial file behind.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    std::fs::create_dir_all(dir).map_err(Error::io(dir))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(Error::io(dir))?;
    tmp.write_all(bytes).map_err(Error::io(tmp.path()))?;
    tmp.as_file().sync_all().map_err(Error::io(tmp.path()))?;
    tmp.persist(path).map_err(|e| Error::Io { path: path.to_path_buf(), source: e.error })?;
    Ok(())
}

/// Trained models together with the registry they belong to.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelStore {
    pub format: String,
    pub registry: Registry,
    pub models: Vec<DeviceLocalModel>,
}

impl ModelStore {
    pub fn new(registry: Registry, models: Vec<DeviceLocalModel>) -> Self {
        Self { format: FORMAT.into(), registry, models }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("models serialize")
    }

    /// Parses a store; errors carry the line and column of the fault.
    pub fn from_json(text: &str) -> Result<Self> {
        let store: ModelStore = serde_json::from_str(text)
            .map_err(|e| Error::Parse { line: e.line(), message: format!("column {}: {e}", e.column()) })?;
        if store.format != FORMAT {
            return Err(Error::Parse { line: 1, message: format!("unsupported format `{}`", store.format) });
        }
        for m in &store.models {
            m.validate()?;
        }
        Ok(store)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path).map_err(Error::io(path))?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_atomic(path, self.to_json().as_bytes())
    }
}
