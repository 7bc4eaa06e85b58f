use vocalis::{load, Dataset, ProjectDirs, Result, Stage};

use crate::edit::LabelEdit;
use crate::journal::Journal;

/// A clustered dataset plus its edit journal.
///
/// The manifest's `journal_compacted` counts the journal entries already
/// folded into the saved records; later entries are replayed on open.
#[derive(Debug)]
pub struct Review {
    ds: Dataset,
    journal: Journal,
    dirty: bool,
}

impl Review {
    pub fn open(dirs: &ProjectDirs) -> Result<Review> {
        let mut ds = load(dirs)?;
        ds.require(Stage::Clustered)?;
        let (journal, entries) = Journal::open(&dirs.journal_path())?;
        let done = ds.manifest.journal_compacted.min(entries.len());
        for e in &entries[done..] {
            e.apply(&mut ds)?;
        }
        Ok(Review {
            dirty: done < entries.len(),
            ds,
            journal,
        })
    }

    pub fn dataset(&self) -> &Dataset {
        &self.ds
    }

    pub fn journal_len(&self) -> usize {
        self.journal.len()
    }

    /// Validates `edit`, makes it durable in the journal, then applies it.
    /// Returns the journal index. Invalid edits leave the journal untouched.
    pub fn apply(&mut self, mut edit: LabelEdit) -> Result<usize> {
        edit.resolve(&self.ds)?;
        if edit.timestamp.is_none() {
            edit.timestamp = Some(chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true));
        }
        let index = self.journal.append(&edit)?;
        edit.apply(&mut self.ds)?;
        self.dirty = true;
        Ok(index)
    }

    /// Writes the reviewed labels as a new dataset snapshot and returns its
    /// version. Without new edits the current snapshot is returned unchanged.
    pub fn export(&mut self) -> Result<u64> {
        if self.dirty || self.ds.manifest.journal_compacted != self.journal.len() {
            self.ds.manifest.journal_compacted = self.journal.len();
            self.ds.save()?;
            self.dirty = false;
        }
        Ok(self.ds.manifest.snapshot_version)
    }
}
