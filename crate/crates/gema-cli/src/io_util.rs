use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::Context;

/// Writes output atomically: content goes to a temp file in the target
/// directory which is then renamed over the destination, so an interrupted
/// or failed run never leaves a partial file behind.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> anyhow::Result<()> {
    let dir = match path.parent() {
        Some(parent) if !parent.as_os_str().is_empty() => parent,
        _ => Path::new("."),
    };
    std::fs::create_dir_all(dir)
        .with_context(|| format!("creating output directory {}", dir.display()))?;
    let mut temp = tempfile::NamedTempFile::new_in(dir)
        .with_context(|| format!("creating temp file in {}", dir.display()))?;
    temp.write_all(bytes)
        .with_context(|| format!("writing {}", path.display()))?;
    temp.persist(path)
        .with_context(|| format!("replacing {}", path.display()))?;
    Ok(())
}

/// Writes to the given path atomically, or to stdout when no path is set.
pub fn emit(out: &Option<PathBuf>, bytes: &[u8]) -> anyhow::Result<()> {
    match out {
        Some(path) => atomic_write(path, bytes),
        None => {
            std::io::stdout()
                .write_all(bytes)
                .context("writing to stdout")?;
            Ok(())
        }
    }
}
