//! Header lines recorded at the top of every text artefact.

use std::fs;
use std::path::Path;

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Tool version, subcommand, seed and input digests of one run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Provenance {
    pub tool_version: String,
    pub subcommand: String,
    pub seed: Option<u64>,
    /// (file name, sha256 hex)
    pub inputs: Vec<(String, String)>,
}

impl Provenance {
    pub fn new(subcommand: &str, seed: Option<u64>) -> Self {
        Self {
            tool_version: TOOL_VERSION.to_string(),
            subcommand: subcommand.to_string(),
            seed,
            inputs: Vec::new(),
        }
    }

    /// Records the digest of an input file under its file name.
    pub fn with_input(mut self, path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        let name = path
            .file_name()
            .map_or_else(|| path.display().to_string(), |n| n.to_string_lossy().into_owned());
        self.inputs.push((name, sha256_hex(&bytes)));
        Ok(self)
    }

    /// `# ga <version> subcommand=<s> seed=<n> inputs=<name>:<sha256>,...`
    pub fn header_line(&self) -> String {
        let seed = self.seed.map_or_else(|| "none".to_string(), |s| s.to_string());
        let inputs = if self.inputs.is_empty() {
            "none".to_string()
        } else {
            self.inputs
                .iter()
                .map(|(n, d)| format!("{n}:{d}"))
                .collect::<Vec<_>>()
                .join(",")
        };
        format!(
            "# ga {} subcommand={} seed={} inputs={}",
            self.tool_version, self.subcommand, seed, inputs
        )
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("provenance serialises")
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_format() {
        let p = Provenance::new("synth", Some(7));
        assert_eq!(
            p.header_line(),
            format!("# ga {TOOL_VERSION} subcommand=synth seed=7 inputs=none")
        );
        assert_eq!(
            sha256_hex(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }
}
