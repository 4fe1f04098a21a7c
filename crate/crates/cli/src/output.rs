use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::exit::{CliError, CliResult, Status};

pub const CONFIG_FORMAT_VERSION: u32 = 1;

pub fn ensure_dir(dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir)?;
    Ok(())
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> CliResult<()> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    fs::write(path, s)?;
    Ok(())
}

pub fn write_csv<R: Serialize>(path: &Path, rows: &[R]) -> CliResult<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a run config, or returns the default when no file is given.
pub fn load_config<T: DeserializeOwned + Default>(path: Option<&PathBuf>) -> CliResult<T> {
    let Some(path) = path else {
        return Ok(T::default());
    };
    let text = fs::read_to_string(path).map_err(|e| {
        let status = if e.kind() == std::io::ErrorKind::NotFound {
            Status::MissingArtifact
        } else {
            Status::Config
        };
        CliError::new(status, anyhow::anyhow!("reading config {}: {e}", path.display()))
    })?;
    serde_json::from_str(&text)
        .map_err(|e| CliError::config(anyhow::anyhow!("parsing config {}: {e}", path.display())))
}

/// Writes `config.json` next to a run's outputs.
pub fn write_resolved_config<T: Serialize>(dir: &Path, config: &T) -> CliResult<()> {
    write_json(&dir.join("config.json"), config)
}
