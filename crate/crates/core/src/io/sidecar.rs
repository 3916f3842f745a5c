use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::binary::{DatasetHeader, FORMAT_VERSION};
use crate::error::{Error, Result};
use crate::generator::Provenance;

/// JSON written next to every dataset file as `<stem>.meta.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetadataSidecar {
    pub format_version: u32,
    pub library_version: String,
    pub created_unix: u64,
    pub samples: u64,
    pub channels: u64,
    pub length: u64,
    pub flags: u32,
    pub payload_sha256: String,
    /// Absent for datasets not produced by the generator.
    pub provenance: Option<Provenance>,
}

impl MetadataSidecar {
    pub fn new(header: DatasetHeader, payload_sha256: String, provenance: Option<Provenance>) -> Self {
        let created_unix = std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        Self {
            format_version: FORMAT_VERSION,
            library_version: env!("CARGO_PKG_VERSION").to_string(),
            created_unix,
            samples: header.samples,
            channels: header.channels,
            length: header.len,
            flags: header.flags,
            payload_sha256,
            provenance,
        }
    }

    /// Master seed of the generating config, if known.
    pub fn seed(&self) -> Option<u64> {
        self.provenance.as_ref().map(|p| p.config.dataset.seed)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(self).map_err(|e| Error::format(path, e.to_string()))?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::format(path, e.to_string()))
    }
}

/// `dir/data.dlmc` -> `dir/data.meta.json`.
pub fn sidecar_path(data: impl AsRef<Path>) -> PathBuf {
    let data = data.as_ref();
    let stem = data.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    data.with_file_name(format!("{stem}.meta.json"))
}
