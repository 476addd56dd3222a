use std::path::{Path, PathBuf};

use rewardnet_core::fsutil::write_atomic;
use serde::{Deserialize, Serialize};

use crate::CliError;

pub const MANIFEST_FILE: &str = "manifest.json";

/// Written before a subcommand starts (`complete: false`) and again when it
/// finishes, so an interrupted run is recognizable.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunManifest {
    pub subcommand: String,
    pub config: Option<PathBuf>,
    pub seed: u64,
    pub out_dir: PathBuf,
    pub version: String,
    pub complete: bool,
    pub outputs: Vec<String>,
}

impl RunManifest {
    pub fn start(subcommand: &str, config: Option<&Path>, seed: u64, out_dir: &Path) -> Result<Self, CliError> {
        let m = RunManifest {
            subcommand: subcommand.to_string(),
            config: config.map(Path::to_path_buf),
            seed,
            out_dir: out_dir.to_path_buf(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            complete: false,
            outputs: Vec::new(),
        };
        m.write()?;
        Ok(m)
    }

    /// Writes `bytes` under the output directory and records the file.
    pub fn output(&mut self, name: &str, bytes: &[u8]) -> Result<PathBuf, CliError> {
        let path = self.out_dir.join(name);
        write_atomic(&path, bytes).map_err(CliError::runtime)?;
        if !self.outputs.iter().any(|o| o == name) {
            self.outputs.push(name.to_string());
        }
        Ok(path)
    }

    fn write(&self) -> Result<(), CliError> {
        let mut text = serde_json::to_string_pretty(self).map_err(CliError::runtime)?;
        text.push('\n');
        write_atomic(&self.out_dir.join(MANIFEST_FILE), text.as_bytes()).map_err(CliError::runtime)
    }

    pub fn finish(mut self) -> Result<Self, CliError> {
        self.complete = true;
        self.write()?;
        Ok(self)
    }

    pub fn read(dir: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(dir.join(MANIFEST_FILE)).map_err(CliError::runtime)?;
        serde_json::from_str(&text).map_err(CliError::runtime)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flagged_until_finished() {
        let dir = tempfile::tempdir().unwrap();
        let mut m = RunManifest::start("gen", None, 7, dir.path()).unwrap();
        assert!(!RunManifest::read(dir.path()).unwrap().complete);
        m.output("a.txt", b"x").unwrap();
        m.output("a.txt", b"y").unwrap();
        let m = m.finish().unwrap();
        let back = RunManifest::read(dir.path()).unwrap();
        assert_eq!(back, m);
        assert_eq!(back.outputs, vec!["a.txt"]);
        assert!(back.complete);
    }
}
