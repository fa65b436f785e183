//! The run directory: a verbatim config snapshot plus CSV and JSON files,
//! each stamped with the config hash and library version.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde_json::{Map, Value};

use crate::config::Format;
use crate::error::CliError;

/// Version of the CSV column layouts.
pub const SCHEMA_VERSION: u32 = 1;

pub struct RunWriter {
    dir: PathBuf,
    sha256: String,
    written: Vec<PathBuf>,
}

impl RunWriter {
    /// Create `dir` and write the config snapshot into it.
    pub fn create(dir: &Path, config_text: &str, sha256: &str, format: Format) -> Result<Self, CliError> {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        let mut w = RunWriter {
            dir: dir.to_path_buf(),
            sha256: sha256.to_string(),
            written: Vec::new(),
        };
        w.write_bytes(&format!("config.{}", format.extension()), config_text.as_bytes())?;
        Ok(w)
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn sha256(&self) -> &str {
        &self.sha256
    }

    pub fn into_files(self) -> Vec<PathBuf> {
        self.written
    }

    pub fn stamp(&self) -> String {
        format!(
            "# ipsplice {} config_sha256={} schema={}\n",
            ipsplice_core::VERSION,
            self.sha256,
            SCHEMA_VERSION
        )
    }

    fn write_bytes(&mut self, name: &str, bytes: &[u8]) -> Result<(), CliError> {
        let path = self.dir.join(name);
        fs::write(&path, bytes).map_err(|e| CliError::io(&path, e))?;
        self.written.push(path);
        Ok(())
    }

    /// Stamp line, then whatever `body` writes.
    pub fn csv(
        &mut self,
        name: &str,
        body: impl FnOnce(&mut Vec<u8>) -> Result<(), CliError>,
    ) -> Result<(), CliError> {
        let mut buf = self.stamp().into_bytes();
        body(&mut buf)?;
        self.write_bytes(name, &buf)
    }

    /// Pretty JSON object with `version` and `config_sha256` prepended.
    pub fn json(&mut self, name: &str, body: Value) -> Result<(), CliError> {
        let mut obj = Map::new();
        obj.insert("version".into(), Value::from(ipsplice_core::VERSION));
        obj.insert("config_sha256".into(), Value::from(self.sha256.clone()));
        match body {
            Value::Object(m) => obj.extend(m),
            other => {
                obj.insert("data".into(), other);
            }
        }
        let mut text = serde_json::to_string_pretty(&Value::Object(obj)).expect("JSON values serialize");
        text.push('\n');
        self.write_bytes(name, text.as_bytes())
    }
}

/// `writeln!` into a CSV buffer.
pub fn row(buf: &mut Vec<u8>, line: std::fmt::Arguments) -> Result<(), CliError> {
    buf.write_fmt(line).and_then(|_| buf.write_all(b"\n")).map_err(|e| CliError::io("<buffer>", e))
}
