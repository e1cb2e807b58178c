//! Atomic writes: files go through a sibling temp file, directories through a
//! staging directory that is renamed into place.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};

fn sibling(path: &Path, tag: &str) -> PathBuf {
    let name = path.file_name().map_or_else(|| "out".into(), |n| n.to_string_lossy().into_owned());
    path.with_file_name(format!(".{name}.{tag}-{}", std::process::id()))
}

fn ensure_parent(path: &Path) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
    }
    Ok(())
}

pub fn write_file(path: &Path, bytes: impl AsRef<[u8]>) -> Result<()> {
    ensure_parent(path)?;
    let tmp = sibling(path, "tmp");
    fs::write(&tmp, bytes).with_context(|| format!("writing {}", tmp.display()))?;
    fs::rename(&tmp, path).with_context(|| format!("writing {}", path.display()))
}

/// Output directory that only appears under its final name once complete.
pub struct StagedDir {
    target: PathBuf,
    staging: PathBuf,
}

impl StagedDir {
    pub fn new(target: &Path) -> Result<Self> {
        let target = target.components().collect::<PathBuf>();
        ensure_parent(&target)?;
        let staging = sibling(&target, "partial");
        if staging.exists() {
            fs::remove_dir_all(&staging).with_context(|| format!("clearing {}", staging.display()))?;
        }
        fs::create_dir(&staging).with_context(|| format!("creating {}", staging.display()))?;
        Ok(Self { target, staging })
    }

    pub fn path(&self) -> &Path {
        &self.staging
    }

    /// Replaces any previous directory of the same name.
    pub fn commit(self) -> Result<PathBuf> {
        let old = sibling(&self.target, "old");
        let had_old = self.target.exists();
        if had_old {
            fs::rename(&self.target, &old).with_context(|| format!("replacing {}", self.target.display()))?;
        }
        fs::rename(&self.staging, &self.target).with_context(|| format!("creating {}", self.target.display()))?;
        if had_old {
            fs::remove_dir_all(&old).with_context(|| format!("removing {}", old.display()))?;
        }
        Ok(self.target.clone())
    }
}

impl Drop for StagedDir {
    fn drop(&mut self) {
        // only reached with a live staging dir when the command failed
        let _ = fs::remove_dir_all(&self.staging);
    }
}
