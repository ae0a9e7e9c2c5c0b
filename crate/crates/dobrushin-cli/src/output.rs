//! Output directories: atomic file writes, provenance headers and the run
//! manifest.
//!
//! Every CSV table starts with one `#` comment line and every NDJSON file
//! with one header record, both carrying the tool version, the config hash
//! and the seed. The manifest lists every output with its size and SHA-256.

use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::hex;
use crate::error::CliError;

pub const TOOL: &str = "dobrushin";
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
pub const MANIFEST_VERSION: u32 = 1;
pub const MANIFEST_NAME: &str = "manifest.json";

/// Who produced an output.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub config_hash: String,
    pub seed: u64,
}

impl Provenance {
    pub fn new(command: &str, config_hash: String, seed: u64) -> Self {
        Provenance {
            tool: TOOL.into(),
            version: VERSION.into(),
            command: command.into(),
            config_hash,
            seed,
        }
    }

    /// The `#` line heading every CSV table.
    pub fn csv_comment(&self) -> String {
        format!(
            "# tool={} version={} command={} config_hash={} seed={}\n",
            self.tool, self.version, self.command, self.config_hash, self.seed
        )
    }

    /// The first record of every NDJSON file.
    pub fn ndjson_header(&self, schema: &str) -> serde_json::Value {
        serde_json::json!({
            "schema": schema,
            "tool": self.tool,
            "version": self.version,
            "command": self.command,
            "config_hash": self.config_hash,
            "seed": self.seed,
        })
    }
}

/// One written file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutputEntry {
    /// Path relative to the output directory.
    pub path: String,
    pub bytes: u64,
    pub sha256: String,
}

/// The record of one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub manifest_version: u32,
    pub tool: String,
    pub version: String,
    pub command: String,
    /// The fully expanded config; `--config manifest.json` re-runs it.
    pub config: serde_json::Value,
    pub config_hash: String,
    pub seed: u64,
    pub outputs: Vec<OutputEntry>,
}

impl Manifest {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| CliError::Config {
            path: path.to_path_buf(),
            message: e.to_string(),
        })
    }
}

/// Write `bytes` to `path` through a temporary file in the same directory
/// and an atomic rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| CliError::io(dir, e))?;
    tmp.write_all(bytes).map_err(|e| CliError::io(path, e))?;
    tmp.as_file().sync_all().map_err(|e| CliError::io(path, e))?;
    tmp.persist(path).map_err(|e| CliError::io(path, e.error))?;
    Ok(())
}

/// An output directory collecting the files of one run.
pub struct OutputDir {
    root: PathBuf,
    pub provenance: Provenance,
    written: Vec<OutputEntry>,
}

impl OutputDir {
    pub fn create(root: &Path, provenance: Provenance) -> Result<Self, CliError> {
        std::fs::create_dir_all(root).map_err(|e| CliError::io(root, e))?;
        Ok(OutputDir {
            root: root.to_path_buf(),
            provenance,
            written: Vec::new(),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    /// Write one file atomically and record it.
    pub fn write(&mut self, name: &str, bytes: &[u8]) -> Result<(), CliError> {
        write_atomic(&self.root.join(name), bytes)?;
        self.written.retain(|e| e.path != name);
        self.written.push(OutputEntry {
            path: name.into(),
            bytes: bytes.len() as u64,
            sha256: hex(&Sha256::digest(bytes)),
        });
        Ok(())
    }

    /// Write a CSV table with the provenance comment line.
    pub fn write_csv(&mut self, name: &str, header: &[&str], rows: &[Vec<String>]) -> Result<(), CliError> {
        let mut out = self.provenance.csv_comment().into_bytes();
        {
            let mut w = csv::Writer::from_writer(&mut out);
            let io = |e: csv::Error| CliError::Invalid(e.to_string());
            w.write_record(header).map_err(io)?;
            for r in rows {
                w.write_record(r).map_err(io)?;
            }
            w.flush().map_err(|e| CliError::io(self.root.join(name), e))?;
        }
        self.write(name, &out)
    }

    /// Write NDJSON records after the provenance header record.
    pub fn write_ndjson(&mut self, name: &str, schema: &str, records: &[serde_json::Value]) -> Result<(), CliError> {
        let mut out = String::new();
        for r in std::iter::once(&self.provenance.ndjson_header(schema)).chain(records) {
            out.push_str(&serde_json::to_string(r).expect("json values serialize"));
            out.push('\n');
        }
        self.write(name, out.as_bytes())
    }

    /// Write a human-readable summary headed by the provenance line.
    pub fn write_summary(&mut self, name: &str, body: &str) -> Result<(), CliError> {
        let text = format!("{}{}", self.provenance.csv_comment(), body);
        self.write(name, text.as_bytes())
    }

    /// Write the manifest and return it.
    pub fn finish(self, config: serde_json::Value) -> Result<Manifest, CliError> {
        let p = self.provenance;
        let manifest = Manifest {
            manifest_version: MANIFEST_VERSION,
            tool: p.tool,
            version: p.version,
            command: p.command,
            config,
            config_hash: p.config_hash,
            seed: p.seed,
            outputs: self.written,
        };
        let mut text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
        text.push('\n');
        write_atomic(&self.root.join(MANIFEST_NAME), text.as_bytes())?;
        Ok(manifest)
    }
}

/// Format a float for tables (shortest round-trip representation).
pub fn num(v: f64) -> String {
    format!("{v}")
}

/// Format an optional float; empty when absent.
pub fn opt(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}
