use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use vocalis::{Dataset, Error, LabelSource, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EditKind {
    Relabel,
    MergeClusters,
    MarkNoise,
    /// Moves selected songs of a cluster to another (usually new) label.
    SplitAssign,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Target {
    Song(String),
    Cluster { individual: String, label: i32 },
}

/// One review decision. Journal entries always carry a timestamp; clients
/// may omit it and the service stamps the edit on arrival.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelEdit {
    pub kind: EditKind,
    pub targets: Vec<Target>,
    pub new_label: i32,
    pub editor: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timestamp: Option<String>,
}

impl LabelEdit {
    /// Song ids this edit rewrites, checked against `ds` without changing it.
    pub fn resolve(&self, ds: &Dataset) -> Result<BTreeSet<String>> {
        if self.targets.is_empty() {
            return Err(Error::Validation("edit has no targets".into()));
        }
        if self.new_label < -1 {
            return Err(Error::Validation(format!("label {} is below -1", self.new_label)));
        }
        match self.kind {
            EditKind::MergeClusters if self.new_label < 0 => {
                return Err(Error::Validation("merge destination must be a cluster label".into()))
            }
            EditKind::SplitAssign if self.new_label < 0 => {
                return Err(Error::Validation("split destination must be a cluster label".into()))
            }
            _ => {}
        }
        let mut songs = BTreeSet::new();
        for t in &self.targets {
            match t {
                Target::Song(id) => {
                    if self.kind == EditKind::MergeClusters {
                        return Err(Error::Validation("merge targets must be clusters".into()));
                    }
                    if ds.record(id).is_none() {
                        return Err(Error::NotFound(format!("song `{id}`")));
                    }
                    songs.insert(id.clone());
                }
                Target::Cluster { individual, label } => {
                    if self.kind == EditKind::SplitAssign {
                        return Err(Error::Validation("split targets must be songs".into()));
                    }
                    if self.kind == EditKind::MergeClusters && *label == self.new_label {
                        return Err(Error::Validation(format!(
                            "cannot merge cluster {label} of {individual} into itself"
                        )));
                    }
                    let before = songs.len();
                    songs.extend(
                        ds.records
                            .iter()
                            .filter(|r| r.meta.individual_id == *individual && r.cluster_label == Some(*label))
                            .map(|r| r.id().to_string()),
                    );
                    if songs.len() == before {
                        return Err(Error::NotFound(format!("cluster {label} of individual `{individual}`")));
                    }
                }
            }
        }
        Ok(songs)
    }

    /// Applies the edit; every rewritten song becomes human-labelled.
    /// Nothing changes if the edit is invalid.
    pub fn apply(&self, ds: &mut Dataset) -> Result<usize> {
        let songs = self.resolve(ds)?;
        let label = match self.kind {
            EditKind::MarkNoise => -1,
            _ => self.new_label,
        };
        for id in &songs {
            let r = ds.record_mut(id).expect("resolved above");
            r.cluster_label = Some(label);
            r.label_source = LabelSource::Human;
            for u in &mut r.unit_labels {
                *u = label;
            }
        }
        Ok(songs.len())
    }
}
