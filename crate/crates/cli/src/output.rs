//! Staged output files: everything is written to temporaries next to the
//! target and renamed into place only when the whole command succeeds.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use tempfile::{NamedTempFile, TempPath};

use crate::error::CliError;

#[derive(Default)]
pub struct Outputs {
    staged: Vec<(TempPath, PathBuf)>,
}

impl Outputs {
    pub fn new() -> Self {
        Self::default()
    }

    /// Stages `path`; `fill` writes its content.
    pub fn write(
        &mut self,
        path: &Path,
        fill: impl FnOnce(&mut BufWriter<File>) -> Result<(), CliError>,
    ) -> Result<(), CliError> {
        let dir = match path.parent() {
            Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
            _ => PathBuf::from("."),
        };
        std::fs::create_dir_all(&dir)
            .map_err(|e| CliError::config(format!("cannot create {}: {e}", dir.display())))?;
        let tmp = NamedTempFile::new_in(&dir)?;
        let (file, tmp_path) = tmp.into_parts();
        let mut w = BufWriter::new(file);
        fill(&mut w)?;
        w.flush()?;
        self.staged.push((tmp_path, path.to_path_buf()));
        Ok(())
    }

    pub fn write_str(&mut self, path: &Path, text: &str) -> Result<(), CliError> {
        self.write(path, |w| Ok(w.write_all(text.as_bytes())?))
    }

    pub fn paths(&self) -> Vec<&Path> {
        self.staged.iter().map(|(_, p)| p.as_path()).collect()
    }

    /// Moves every staged file into place. Dropping without committing
    /// deletes the temporaries; a failed rename removes the files already
    /// moved by this commit.
    pub fn commit(self) -> Result<Vec<PathBuf>, CliError> {
        let mut done: Vec<PathBuf> = Vec::with_capacity(self.staged.len());
        for (tmp, target) in self.staged {
            if let Err(e) = tmp.persist(&target) {
                for p in &done {
                    let _ = std::fs::remove_file(p);
                }
                return Err(CliError::data(format!("cannot write {}: {e}", target.display())));
            }
            done.push(target);
        }
        Ok(done)
    }
}

/// Fails with a config error unless `path` exists.
pub fn require_file(path: &Path) -> Result<(), CliError> {
    if path.is_file() {
        Ok(())
    } else {
        Err(CliError::config(format!("input file {} does not exist", path.display())))
    }
}

pub fn require_dir(path: &Path) -> Result<(), CliError> {
    if path.is_dir() {
        Ok(())
    } else {
        Err(CliError::config(format!("input directory {} does not exist", path.display())))
    }
}
