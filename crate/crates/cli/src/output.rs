use std::io::Write;
use std::path::Path;

use serde::Serialize;

use crate::CliError;

/// Version tag written as the first line of every CSV.
pub const SCHEMA_LINE: &str = "# schema v1";

/// Writes `bytes` to a temp file beside `path`, then renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| CliError::io(dir, e))?;
    tmp.write_all(bytes).map_err(|e| CliError::io(path, e))?;
    tmp.as_file().sync_all().map_err(|e| CliError::io(path, e))?;
    tmp.persist(path).map_err(|e| CliError::io(path, e.error))?;
    Ok(())
}

pub fn write_csv<R: Serialize>(path: &Path, name: &str, rows: &[R]) -> Result<(), CliError> {
    let mut buf = format!("{SCHEMA_LINE} {name}\n").into_bytes();
    {
        let mut w = csv::Writer::from_writer(&mut buf);
        for r in rows {
            w.serialize(r).map_err(|e| CliError::Run(format!("csv {name}: {e}")))?;
        }
        w.flush().map_err(|e| CliError::io(path, e))?;
    }
    write_atomic(path, &buf)
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::Run(e.to_string()))?;
    text.push('\n');
    write_atomic(path, text.as_bytes())
}
