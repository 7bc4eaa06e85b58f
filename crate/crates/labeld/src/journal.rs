//! Append-only edit journal (JSON Lines). An edit is on disk and synced
//! before it is applied or acknowledged.

use std::fs::{self, File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use vocalis::{Error, Result};

use crate::edit::LabelEdit;

fn io(path: &Path, source: std::io::Error) -> Error {
    Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug)]
pub struct Journal {
    path: PathBuf,
    file: File,
    len: usize,
}

impl Journal {
    /// Opens (or creates) the journal and returns its entries in order.
    ///
    /// A final line without a newline is a write torn by a crash; it was
    /// never acknowledged, so it is dropped and the file truncated.
    pub fn open(path: &Path) -> Result<(Journal, Vec<LabelEdit>)> {
        let text = match fs::read_to_string(path) {
            Ok(t) => t,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => String::new(),
            Err(e) => return Err(io(path, e)),
        };
        let complete = text.rfind('\n').map_or(0, |i| i + 1);
        let mut entries = Vec::new();
        for (n, line) in text[..complete].lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let edit: LabelEdit = serde_json::from_str(line).map_err(|e| Error::Parse {
                path: path.to_path_buf(),
                message: format!("line {}: {e}", n + 1),
            })?;
            entries.push(edit);
        }
        if complete < text.len() {
            let f = OpenOptions::new().write(true).open(path).map_err(|e| io(path, e))?;
            f.set_len(complete as u64).map_err(|e| io(path, e))?;
            f.sync_all().map_err(|e| io(path, e))?;
        }
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir).map_err(|e| io(dir, e))?;
        }
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|e| io(path, e))?;
        Ok((
            Journal {
                path: path.to_path_buf(),
                file,
                len: entries.len(),
            },
            entries,
        ))
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    /// Writes and syncs one entry; returns its zero-based index.
    pub fn append(&mut self, edit: &LabelEdit) -> Result<usize> {
        let mut line = serde_json::to_string(edit).expect("edit serialises");
        line.push('\n');
        self.file
            .write_all(line.as_bytes())
            .and_then(|_| self.file.sync_data())
            .map_err(|e| io(&self.path, e))?;
        self.len += 1;
        Ok(self.len - 1)
    }
}
