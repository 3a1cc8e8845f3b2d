use std::io::Write;
use std::path::Path;

use crate::error::{BtmError, Result};

/// Writes `bytes` to a temporary file next to `path` and renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    std::fs::create_dir_all(dir).map_err(|e| BtmError::io(dir, e))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| BtmError::io(dir, e))?;
    tmp.write_all(bytes).map_err(|e| BtmError::io(path, e))?;
    tmp.as_file().sync_all().map_err(|e| BtmError::io(path, e))?;
    tmp.persist(path).map_err(|e| BtmError::io(path, e.error))?;
    Ok(())
}

pub fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| BtmError::format(path, e.to_string()))?;
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| BtmError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| BtmError::format(path, e.to_string()))
}
