//! Per-individual density clustering of embedded songs or units.

mod hdbscan;

pub use hdbscan::{core_distances, hdbscan, hdbscan_cluster, mutual_reachability_mst, ClusterAssignment, HdbscanOptions};

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::dataset::{mark_clustered, Dataset, LabelSource, RecordStatus, Stage};
use crate::embed::{Embedding, RowOwner};
use crate::error::{Error, Result};
use crate::parallel::{par_map, FailureKind, JobSpec};
use crate::params::Parameters;

/// Adjusted Rand index between two labellings of the same rows. Every label
/// value, including `-1`, is its own class.
pub fn adjusted_rand_index(a: &[i32], b: &[i32]) -> f64 {
    assert_eq!(a.len(), b.len(), "labellings differ in length");
    let n = a.len();
    if n < 2 {
        return 1.0;
    }
    let mut table: HashMap<(i32, i32), u64> = HashMap::new();
    let mut rows: HashMap<i32, u64> = HashMap::new();
    let mut cols: HashMap<i32, u64> = HashMap::new();
    for (&x, &y) in a.iter().zip(b) {
        *table.entry((x, y)).or_default() += 1;
        *rows.entry(x).or_default() += 1;
        *cols.entry(y).or_default() += 1;
    }
    let pairs = |c: u64| (c * c.saturating_sub(1) / 2) as f64;
    let index: f64 = table.values().map(|&c| pairs(c)).sum();
    let sum_a: f64 = rows.values().map(|&c| pairs(c)).sum();
    let sum_b: f64 = cols.values().map(|&c| pairs(c)).sum();
    let expected = sum_a * sum_b / pairs(n as u64);
    let max = (sum_a + sum_b) / 2.0;
    if max == expected {
        // both labellings are all-one-class or all-singletons
        return if rows.len() == cols.len() { 1.0 } else { 0.0 };
    }
    (index - expected) / (max - expected)
}

/// Outcome for one clustered group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupSummary {
    /// Individual id, or `*` for a global run.
    pub individual: String,
    pub rows: usize,
    pub min_cluster_size: usize,
    pub clusters: usize,
    pub noise: usize,
    pub warning: Option<String>,
}

impl GroupSummary {
    pub fn noise_fraction(&self) -> f64 {
        if self.rows == 0 {
            0.0
        } else {
            self.noise as f64 / self.rows as f64
        }
    }
}

/// Label for a song from its unit labels: the most frequent, smallest on ties.
fn majority(labels: &[i32]) -> i32 {
    let mut counts: BTreeMap<i32, usize> = BTreeMap::new();
    for &l in labels {
        *counts.entry(l).or_default() += 1;
    }
    counts
        .into_iter()
        .max_by(|a, b| a.1.cmp(&b.1).then(b.0.cmp(&a.0)))
        .map_or(-1, |(l, _)| l)
}

struct Group {
    name: String,
    owners: Vec<RowOwner>,
    points: Vec<Vec<f64>>,
}

fn group_from(name: &str, e: &Embedding, human: &dyn Fn(&str) -> bool) -> Group {
    let keep: Vec<usize> = (0..e.len()).filter(|&i| !human(&e.owners[i].song_id)).collect();
    Group {
        name: name.to_string(),
        owners: keep.iter().map(|&i| e.owners[i].clone()).collect(),
        points: keep
            .iter()
            .map(|&i| e.row(i).iter().map(|&v| f64::from(v)).collect())
            .collect(),
    }
}

/// Clusters one group's embedded rows as [`cluster_ids`] does: minimum
/// cluster size from `p`, and a group without separable structure may form a
/// single cluster.
pub fn cluster_points<R: AsRef<[f64]>>(points: &[R], p: &Parameters) -> Result<ClusterAssignment> {
    let opts = HdbscanOptions {
        min_cluster_size: p.min_cluster_size_for(points.len()),
        allow_single_cluster: true,
    };
    hdbscan(points, opts)
}

fn cluster_group(g: &Group, p: &Parameters) -> Result<(ClusterAssignment, usize)> {
    Ok((cluster_points(&g.points, p)?, p.min_cluster_size_for(g.points.len())))
}

/// Clusters each individual's embedded rows (or all rows together when
/// `global`) and writes automatic labels.
///
/// Records labelled by a human keep their labels and are left out of the
/// clustering input. Songs that have units but no embedded row are noise. With unit-level embeddings every unit is clustered and
/// the song takes its majority unit label.
pub fn cluster_ids(ds: &Dataset, p: &Parameters, global: bool, workers: usize) -> Result<(Dataset, Vec<GroupSummary>)> {
    ds.require(Stage::Embedded)?;
    let set = ds
        .embeddings
        .as_ref()
        .ok_or_else(|| Error::State("dataset has no embeddings; run `embed` first".into()))?;
    let human = |id: &str| ds.record(id).is_some_and(|r| r.label_source == LabelSource::Human);

    let groups: Vec<Group> = if global {
        let e = set
            .global
            .as_ref()
            .ok_or_else(|| Error::State("dataset has no global embedding; run `embed` first".into()))?;
        vec![group_from("*", e, &human)]
    } else {
        set.groups.iter().map(|(ind, e)| group_from(ind, e, &human)).collect()
    };

    let job = JobSpec::new(groups, workers);
    let results = par_map(&job, |_, g| cluster_group(g, p));

    let mut out = ds.clone();
    for r in out.records.iter_mut().filter(|r| r.label_source == LabelSource::Auto) {
        r.cluster_label = None;
        r.unit_labels.clear();
    }
    let mut summaries = Vec::with_capacity(job.items.len());
    for (g, res) in job.items.iter().zip(results) {
        let (assignment, m) = res.map_err(|f| match f.kind {
            FailureKind::Error(e) => e,
            FailureKind::Panic(msg) => Error::State(format!("clustering {} panicked: {msg}", g.name)),
        })?;
        let mut per_song: BTreeMap<&str, Vec<(usize, i32)>> = BTreeMap::new();
        for (o, &l) in g.owners.iter().zip(&assignment.labels) {
            per_song
                .entry(o.song_id.as_str())
                .or_default()
                .push((o.unit_index.unwrap_or(0), l));
        }
        for (id, mut labels) in per_song {
            let rec = out
                .record_mut(id)
                .ok_or_else(|| Error::State(format!("embedding refers to unknown song {id}")))?;
            labels.sort_by_key(|&(u, _)| u);
            let labels: Vec<i32> = labels.into_iter().map(|(_, l)| l).collect();
            if set.song_level {
                rec.cluster_label = Some(labels[0]);
            } else {
                rec.cluster_label = Some(majority(&labels));
                rec.unit_labels = labels;
            }
        }
        summaries.push(GroupSummary {
            individual: g.name.clone(),
            rows: g.points.len(),
            min_cluster_size: m,
            clusters: assignment.cluster_count(),
            noise: assignment.noise_count(),
            warning: assignment.warning,
        });
    }
    // songs with units but no embedding row (individuals too small to embed)
    for r in out.records.iter_mut() {
        if r.label_source == LabelSource::Auto && r.cluster_label.is_none() && r.status == RecordStatus::Segmented {
            r.cluster_label = Some(-1);
        }
    }
    mark_clustered(&mut out);
    Ok((out, summaries))
}
