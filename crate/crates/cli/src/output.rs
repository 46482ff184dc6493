use std::path::Path;

use anyhow::{anyhow, Context, Result};
use serde::de::DeserializeOwned;

use lue_core::simulation::config_hash;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// `#` lines carrying the version, config hash and seed.
pub fn metadata_lines(hash: &str, seed: Option<u64>) -> Vec<String> {
    vec![
        format!("# lue {VERSION}"),
        format!("# config_hash {hash}"),
        format!("# seed {}", seed.map_or_else(|| "none".to_string(), |s| s.to_string())),
    ]
}

/// Parses JSON into `T`, reporting schema errors with their field path.
/// Also returns the hash of the parsed document.
pub fn parse_json<T: DeserializeOwned>(text: &str) -> Result<(T, String)> {
    let value: serde_json::Value = serde_json::from_str(text).context("malformed JSON")?;
    let hash = config_hash(&value);
    let parsed = serde_path_to_error::deserialize(&value).map_err(|e| {
        let path = e.path().to_string();
        let at = if path == "." { "document root".to_string() } else { path };
        anyhow!("schema error at {at}: {}", e.into_inner())
    })?;
    Ok((parsed, hash))
}

/// Writes every `(path, contents)` pair, or none if any parent directory is
/// missing.
pub fn write_all(files: &[(&Path, &str)]) -> Result<()> {
    for (path, _) in files {
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            if !parent.is_dir() {
                return Err(anyhow!("output directory {} does not exist", parent.display()));
            }
        }
    }
    for (path, contents) in files {
        std::fs::write(path, contents).with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(())
}
