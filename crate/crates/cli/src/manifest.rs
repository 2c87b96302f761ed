//! Run manifests: resolved config, tool version and a digest of every output.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::config::RunConfig;
use crate::error::CliError;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Collects the files a command writes and records them in
/// `<run_dir>/<command>.manifest`.
pub struct Outputs {
    root: PathBuf,
    files: Vec<PathBuf>,
}

impl Outputs {
    pub fn new(root: &Path) -> Self {
        Outputs { root: root.to_path_buf(), files: Vec::new() }
    }

    pub fn write(&mut self, path: &Path, contents: impl AsRef<[u8]>) -> Result<(), CliError> {
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        fs::write(path, contents)?;
        self.files.push(path.to_path_buf());
        Ok(())
    }

    pub fn record(&mut self, path: &Path) {
        self.files.push(path.to_path_buf());
    }

    pub fn finish(mut self, command: &str, config: &RunConfig) -> Result<PathBuf, CliError> {
        self.files.sort();
        self.files.dedup();
        let mut text = format!("pointexplainer {VERSION}\ncommand = {command}\n\n[config]\n");
        text.push_str(&config.render());
        text.push_str("\n[outputs]\n");
        for f in &self.files {
            let digest = Sha256::digest(fs::read(f)?);
            let shown = f.strip_prefix(&self.root).unwrap_or(f);
            let hex: String = digest.iter().map(|b| format!("{b:02x}")).collect();
            let _ = writeln!(text, "{hex}  {}", shown.display());
        }
        fs::create_dir_all(&self.root)?;
        let path = self.root.join(format!("{command}.manifest"));
        fs::write(&path, text)?;
        Ok(path)
    }
}
