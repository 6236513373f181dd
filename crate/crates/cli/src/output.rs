//! Atomic per-scenario artifact directories.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use crate::ConfigError;

/// Writes `files` into `out/name`, replacing any previous contents. The
/// files are assembled in a temporary sibling directory that is renamed
/// into place, so readers never see a half-written set.
pub fn write_artifacts(out: &Path, name: &str, files: &[(String, String)]) -> Result<PathBuf, ConfigError> {
    let io = |e: std::io::Error| ConfigError::Io(format!("{}: {e}", out.display()));
    fs::create_dir_all(out).map_err(io)?;
    let staging = tempfile::Builder::new()
        .prefix(&format!(".{name}."))
        .tempdir_in(out)
        .map_err(io)?;
    for (file, contents) in files {
        let mut f = fs::File::create(staging.path().join(file)).map_err(io)?;
        f.write_all(contents.as_bytes()).map_err(io)?;
        f.sync_all().map_err(io)?;
    }
    let target = out.join(name);
    if target.exists() {
        fs::remove_dir_all(&target).map_err(io)?;
    }
    let staged = staging.keep();
    fs::rename(&staged, &target).map_err(io)?;
    Ok(target)
}
