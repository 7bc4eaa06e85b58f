//! Standard project layout.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Directory tree of one project: `root/{data/raw, data/segmented, data/spectrograms, output}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProjectDirs {
    pub root: PathBuf,
    pub raw_data: PathBuf,
    pub segmented: PathBuf,
    pub spectrograms: PathBuf,
    pub output: PathBuf,
}

impl ProjectDirs {
    /// Paths for a project rooted at `root`; nothing is created.
    pub fn at(root: impl Into<PathBuf>) -> Self {
        let root = root.into();
        ProjectDirs {
            raw_data: root.join("data").join("raw"),
            segmented: root.join("data").join("segmented"),
            spectrograms: root.join("data").join("spectrograms"),
            output: root.join("output"),
            root,
        }
    }

    pub fn all(&self) -> [&Path; 4] {
        [
            &self.raw_data,
            &self.segmented,
            &self.spectrograms,
            &self.output,
        ]
    }

    /// Where the dataset manifest and records table live.
    pub fn dataset_dir(&self) -> &Path {
        &self.segmented
    }

    pub fn journal_path(&self) -> PathBuf {
        self.segmented.join("edits.jsonl")
    }

    pub fn embeddings_dir(&self) -> PathBuf {
        self.segmented.join("embeddings")
    }
}

/// Creates the standard sub-directories under `root`. Idempotent.
pub fn init_project(root: &Path) -> Result<ProjectDirs> {
    let dirs = ProjectDirs::at(root);
    for dir in dirs.all() {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    Ok(dirs)
}
