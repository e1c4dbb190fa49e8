//! All-or-nothing output staging.
//!
//! Every artifact of a run is rendered to a temporary file in the directory of
//! its final path and only renamed into place once all of them are ready. If
//! anything fails along the way the temporaries are dropped (and deleted), and
//! already-committed files of the same run are removed again.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use tempfile::NamedTempFile;

#[derive(Default)]
pub struct Outputs {
    staged: Vec<(PathBuf, NamedTempFile)>,
}

impl Outputs {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn stage_with<F>(&mut self, path: &Path, render: F) -> Result<()>
    where
        F: FnOnce(&mut dyn Write) -> std::io::Result<()>,
    {
        let dir = match path.parent() {
            Some(p) if !p.as_os_str().is_empty() => p,
            _ => Path::new("."),
        };
        let mut tmp = NamedTempFile::new_in(dir)
            .with_context(|| format!("cannot create a temporary file in {}", dir.display()))?;
        {
            let mut w = std::io::BufWriter::new(tmp.as_file_mut());
            render(&mut w).with_context(|| format!("failed writing {}", path.display()))?;
            w.flush()?;
        }
        self.staged.push((path.to_path_buf(), tmp));
        Ok(())
    }

    pub fn stage_json<T: serde::Serialize>(&mut self, path: &Path, value: &T) -> Result<()> {
        let text = serde_json::to_string_pretty(value)?;
        self.stage_with(path, |w| writeln!(w, "{text}"))
    }

    /// Move every staged file into place.
    pub fn commit(self) -> Result<Vec<PathBuf>> {
        let mut done: Vec<PathBuf> = Vec::new();
        for (path, tmp) in self.staged {
            if let Err(e) = tmp.persist(&path) {
                for p in &done {
                    let _ = fs::remove_file(p);
                }
                return Err(e.error).with_context(|| format!("cannot write {}", path.display()));
            }
            done.push(path);
        }
        Ok(done)
    }
}

/// `<out>.run.json` next to a CSV artifact.
pub fn sidecar_path(out: &Path) -> PathBuf {
    let mut name = out.file_name().unwrap_or_default().to_os_string();
    name.push(".run.json");
    out.with_file_name(name)
}
