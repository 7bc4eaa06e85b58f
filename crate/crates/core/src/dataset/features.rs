use std::collections::BTreeMap;

use super::{kspec, Dataset, Stage, VocalisationRecord};
use crate::embed::{pad_and_flatten, FeatureRow, RowOwner};
use crate::error::{Error, Result};
use crate::parallel::{par_map, partition, FailureKind, JobSpec};
use crate::params::Parameters;

/// How long unit rows are padded.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Padding {
    /// To the longest unit of the same individual.
    PerIndividual,
    /// To the longest unit in the dataset, so all rows share one length.
    Global,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTable {
    /// Grouped by individual (sorted), then song id, then unit index.
    pub rows: Vec<FeatureRow>,
    /// Padding length used for each individual.
    pub pad_frames: BTreeMap<String, usize>,
}

impl FeatureTable {
    /// Rows split by individual, preserving order.
    pub fn groups(&self) -> BTreeMap<String, Vec<FeatureRow>> {
        let mut out: BTreeMap<String, Vec<FeatureRow>> = BTreeMap::new();
        for r in &self.rows {
            out.entry(r.owner.individual_id.clone()).or_default().push(r.clone());
        }
        out
    }
}

fn load_units(ds: &Dataset, rec: &VocalisationRecord) -> Result<Vec<kspec::Matrix>> {
    rec.unit_spectrogram_refs
        .iter()
        .map(|r| kspec::read(&ds.resolve(r)))
        .collect()
}

/// Feature rows for clustering.
///
/// With `p.song_level` each song with at least one unit yields one row: the
/// elementwise mean of its padded unit vectors. Otherwise each unit yields
/// one row. Songs without units contribute nothing.
pub fn get_units(ds: &Dataset, p: &Parameters, padding: Padding, workers: usize) -> Result<FeatureTable> {
    ds.require(Stage::Segmented)?;
    let floor = -(p.top_db as f32);

    let mut by_individual: BTreeMap<&str, Vec<&VocalisationRecord>> = BTreeMap::new();
    for r in ds.records.iter().filter(|r| !r.unit_spectrogram_refs.is_empty()) {
        by_individual.entry(r.meta.individual_id.as_str()).or_default().push(r);
    }

    let mut widths: BTreeMap<String, usize> = BTreeMap::new();
    for (ind, recs) in &by_individual {
        let mut w = 0;
        for r in recs {
            for u in &r.unit_spectrogram_refs {
                w = w.max(kspec::read_shape(&ds.resolve(u))?.1);
            }
        }
        widths.insert((*ind).to_string(), w);
    }
    if padding == Padding::Global {
        let w = widths.values().copied().max().unwrap_or(0);
        widths.values_mut().for_each(|v| *v = w);
    }

    let mut rows = Vec::new();
    for (ind, recs) in &by_individual {
        let pad = widths[*ind];
        let job = JobSpec::new(recs.clone(), workers);
        let results = par_map(&job, |_, rec: &&VocalisationRecord| -> Result<Vec<FeatureRow>> {
            let units = load_units(ds, rec)?;
            let vectors = pad_and_flatten(&units, pad, floor)?;
            let owner = |unit_index| RowOwner {
                song_id: rec.meta.id.clone(),
                unit_index,
                individual_id: rec.meta.individual_id.clone(),
                year: rec.meta.year,
            };
            if p.song_level {
                let mut acc = vec![0f64; vectors[0].len()];
                for v in &vectors {
                    for (a, x) in acc.iter_mut().zip(v) {
                        *a += f64::from(*x);
                    }
                }
                let n = vectors.len() as f64;
                Ok(vec![FeatureRow {
                    owner: owner(None),
                    vector: acc.into_iter().map(|a| (a / n) as f32).collect(),
                }])
            } else {
                Ok(vectors
                    .into_iter()
                    .enumerate()
                    .map(|(i, vector)| FeatureRow {
                        owner: owner(Some(i)),
                        vector,
                    })
                    .collect())
            }
        });
        let (ok, failed) = partition(results);
        if let Some(f) = failed.into_iter().next() {
            return Err(match f.kind {
                FailureKind::Error(e) => e,
                FailureKind::Panic(m) => Error::State(format!("loading units panicked: {m}")),
            });
        }
        rows.extend(ok.into_iter().flat_map(|(_, r)| r));
    }
    Ok(FeatureTable {
        rows,
        pad_frames: widths,
    })
}
