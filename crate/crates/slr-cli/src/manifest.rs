//! Flat key=value run manifests.
//!
//! Every command writes one next to its outputs with all resolved
//! configuration values, the seed where one applies, and the tool version.
//! `slr rerun --manifest <path>` re-executes the recorded run; results are
//! independent of thread count, so `--threads` is execution environment, not
//! configuration, and is deliberately not recorded.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use slr_core::{Error, Result};

#[derive(Debug, Clone, Default)]
pub struct Manifest {
    entries: BTreeMap<String, String>,
}

impl Manifest {
    pub fn new(command: &str) -> Self {
        let mut m = Manifest::default();
        m.set("command", command);
        m.set("version", env!("CARGO_PKG_VERSION"));
        m
    }

    pub fn set(&mut self, key: &str, value: impl ToString) {
        self.entries.insert(key.to_string(), value.to_string());
    }

    pub fn set_opt(&mut self, key: &str, value: Option<impl ToString>) {
        if let Some(v) = value {
            self.set(key, v);
        }
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    pub fn require(&self, key: &str) -> Result<&str> {
        self.get(key)
            .ok_or_else(|| Error::InvalidInput(format!("manifest is missing '{key}'")))
    }

    pub fn parse<T: std::str::FromStr>(&self, key: &str) -> Result<T> {
        self.require(key)?
            .parse()
            .map_err(|_| Error::InvalidInput(format!("manifest value for '{key}' is malformed")))
    }

    pub fn parse_opt<T: std::str::FromStr>(&self, key: &str) -> Result<Option<T>> {
        match self.get(key) {
            None => Ok(None),
            Some(raw) => raw
                .parse()
                .map(Some)
                .map_err(|_| Error::InvalidInput(format!("manifest value for '{key}' is malformed"))),
        }
    }

    /// Serializes sorted by key, one `key=value` per line.
    pub fn write(&self, path: &Path) -> Result<()> {
        let mut out = String::new();
        for (k, v) in &self.entries {
            out.push_str(k);
            out.push('=');
            out.push_str(v);
            out.push('\n');
        }
        fs::write(path, out)?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        let content = fs::read_to_string(path)?;
        let mut entries = BTreeMap::new();
        for (idx, line) in content.lines().enumerate() {
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| {
                Error::InvalidInput(format!(
                    "{}:{}: manifest line has no '='",
                    path.display(),
                    idx + 1
                ))
            })?;
            entries.insert(k.to_string(), v.to_string());
        }
        Ok(Manifest { entries })
    }
}
