//! Output directory bookkeeping: every file a command writes is hashed and
//! listed in `manifest.json`.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::{json, Value};

use phmadv::container::sha256_hex;
use phmadv::Error;

use crate::CliError;

pub const MANIFEST: &str = "manifest.json";

/// Hash of the effective settings, as recorded in manifests and reports.
pub fn config_hash(config: &impl Serialize) -> Result<(Value, String), CliError> {
    let value = serde_json::to_value(config).map_err(Error::from)?;
    let text = serde_json::to_string(&value).map_err(Error::from)?;
    Ok((value, sha256_hex(text.as_bytes())))
}

pub struct Outputs {
    root: PathBuf,
    files: BTreeMap<String, String>,
}

impl Outputs {
    pub fn create(root: &Path) -> Result<Self, CliError> {
        std::fs::create_dir_all(root).map_err(|e| Error::io(root, e))?;
        Ok(Self {
            root: root.to_path_buf(),
            files: BTreeMap::new(),
        })
    }

    fn target(&self, relative: &str) -> Result<PathBuf, CliError> {
        let path = self.root.join(relative);
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        Ok(path)
    }

    pub fn write(&mut self, relative: &str, contents: impl AsRef<[u8]>) -> Result<(), CliError> {
        let path = self.target(relative)?;
        let bytes = contents.as_ref();
        std::fs::write(&path, bytes).map_err(|e| Error::io(&path, e))?;
        self.files.insert(relative.to_string(), sha256_hex(bytes));
        Ok(())
    }

    /// Lets a library writer produce the file, then records its hash.
    pub fn write_with(
        &mut self,
        relative: &str,
        writer: impl FnOnce(&Path) -> phmadv::Result<()>,
    ) -> Result<(), CliError> {
        let path = self.target(relative)?;
        writer(&path)?;
        let bytes = std::fs::read(&path).map_err(|e| Error::io(&path, e))?;
        self.files.insert(relative.to_string(), sha256_hex(&bytes));
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.files.len()
    }

    /// Writes the manifest. It carries no timestamps, so identical runs
    /// produce identical directories.
    pub fn finish(
        self,
        command: &str,
        seed: u64,
        config: Value,
        config_hash: &str,
        extra: Value,
    ) -> Result<PathBuf, CliError> {
        let manifest = json!({
            "tool": "phmadv",
            "version": env!("CARGO_PKG_VERSION"),
            "format_version": phmadv::FORMAT_VERSION,
            "command": command,
            "seed": seed,
            "config_hash": config_hash,
            "config": config,
            "details": extra,
            "files": self.files,
        });
        let mut text = serde_json::to_string_pretty(&manifest).map_err(Error::from)?;
        text.push('\n');
        let path = self.root.join(MANIFEST);
        std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
        Ok(self.root)
    }
}
