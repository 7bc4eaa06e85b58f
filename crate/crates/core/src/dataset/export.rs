use std::collections::BTreeMap;
use std::fs;

use rand::seq::SliceRandom;
use serde::Serialize;

use super::{Dataset, RecordStatus, Stage};
use crate::error::{Error, Result};
use crate::synth::rng;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ExportSummary {
    /// Written files, relative to the project root.
    pub train: Vec<String>,
    pub test: Vec<String>,
    /// `<individual>_<label>` classes, sorted.
    pub classes: Vec<String>,
}

/// FNV-1a, used to give every class its own shuffle stream.
fn class_seed(seed: u64, class: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325 ^ seed;
    for b in class.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Copies labelled song spectrograms into
/// `output/{train,test}/<individual>_<label>/<id>.kspec`.
///
/// Each `(individual, label)` class is split on its own: ids are sorted,
/// shuffled with a stream derived from `seed` and the class name, and the
/// first `round(n * split_fraction)` go to train. Noise (`-1`) is skipped;
/// songs without units are never labelled and are skipped too.
pub fn export_training_set(ds: &Dataset, split_fraction: f64, seed: u64) -> Result<ExportSummary> {
    if !(split_fraction > 0.0 && split_fraction < 1.0) {
        return Err(Error::Validation(format!(
            "split fraction must be in (0, 1), got {split_fraction}"
        )));
    }
    ds.require(Stage::Segmented)?;
    let labelled = ds.records.iter().filter(|r| r.status == RecordStatus::Segmented);
    let unlabelled: Vec<&str> = labelled
        .clone()
        .filter(|r| r.cluster_label.is_none())
        .map(|r| r.id())
        .collect();
    if !unlabelled.is_empty() {
        return Err(Error::State(format!(
            "{} unlabelled record(s): {}; run `cluster` first",
            unlabelled.len(),
            unlabelled.join(", ")
        )));
    }

    let mut classes: BTreeMap<String, Vec<&str>> = BTreeMap::new();
    for r in labelled {
        let label = r.cluster_label.expect("checked above");
        if label >= 0 {
            classes
                .entry(format!("{}_{label}", r.meta.individual_id))
                .or_default()
                .push(r.id());
        }
    }

    let out = &ds.dirs.output;
    for split in ["train", "test"] {
        let dir = out.join(split);
        if dir.exists() {
            fs::remove_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        }
    }
    let mut summary = ExportSummary {
        train: Vec::new(),
        test: Vec::new(),
        classes: classes.keys().cloned().collect(),
    };
    for (class, mut ids) in classes {
        ids.sort_unstable();
        ids.shuffle(&mut rng(class_seed(seed, &class)));
        let n_train = (ids.len() as f64 * split_fraction).round() as usize;
        for (i, id) in ids.iter().enumerate() {
            let split = if i < n_train { "train" } else { "test" };
            let src = ds.resolve(
                ds.record(id)
                    .and_then(|r| r.spectrogram_ref.as_deref())
                    .ok_or_else(|| Error::State(format!("song `{id}` has no spectrogram")))?,
            );
            let dest = out.join(split).join(&class).join(format!("{id}.kspec"));
            fs::create_dir_all(dest.parent().expect("has parent")).map_err(|e| Error::io(&dest, e))?;
            fs::copy(&src, &dest).map_err(|e| Error::io(&src, e))?;
            let rel = super::rel_path(&ds.dirs, &dest);
            if split == "train" {
                summary.train.push(rel);
            } else {
                summary.test.push(rel);
            }
        }
    }
    summary.train.sort();
    summary.test.sort();
    Ok(summary)
}
