//! Low-dimensional vectors for units and songs.
//!
//! Feature rows are padded, flattened spectrograms. PCA is the deterministic
//! default; the neighbour-graph method is optional.

mod flatten;
mod neighbor;
mod pca;

pub use flatten::{pad_and_flatten, BandFrames, FeatureRow, RowOwner};
pub use neighbor::{embed_neighbor, knn, NeighborOptions};
pub use pca::{fit_pca, Pca};

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::dataset::{attach_embeddings, get_units, Dataset, EmbeddingSet, Padding};
use crate::error::{Error, Result};
use crate::parallel::{par_map, FailureKind, JobSpec};
use crate::params::Parameters;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Pca,
    Neighbor,
}

impl std::str::FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pca" => Ok(Method::Pca),
            "neighbor" => Ok(Method::Neighbor),
            other => Err(Error::Validation(format!(
                "unknown embedding method `{other}` (expected pca or neighbor)"
            ))),
        }
    }
}

/// Embedded rows, aligned 1:1 with the feature rows they came from.
/// Values are stored as `f32` so in-memory and persisted embeddings agree bit for bit.
#[derive(Debug, Clone, PartialEq)]
pub struct Embedding {
    pub method: Method,
    pub dim: usize,
    pub owners: Vec<RowOwner>,
    pub values: Vec<f32>,
}

impl Embedding {
    pub fn len(&self) -> usize {
        self.owners.len()
    }

    pub fn is_empty(&self) -> bool {
        self.owners.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.values[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows_f64(&self) -> Vec<Vec<f64>> {
        (0..self.len())
            .map(|i| self.row(i).iter().map(|&v| f64::from(v)).collect())
            .collect()
    }

    fn from_coords(method: Method, dim: usize, owners: Vec<RowOwner>, coords: &[Vec<f64>]) -> Result<Self> {
        let values: Vec<f32> = coords.iter().flatten().map(|&v| v as f32).collect();
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::State("embedding produced non-finite values".into()));
        }
        Ok(Embedding {
            method,
            dim,
            owners,
            values,
        })
    }
}

/// Settings shared by both embedding methods.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EmbedOptions {
    pub method: Method,
    pub dim: usize,
    pub n_neighbors: usize,
    pub seed: u64,
}

impl EmbedOptions {
    pub fn pca(dim: usize) -> Self {
        EmbedOptions {
            method: Method::Pca,
            dim,
            n_neighbors: 15,
            seed: 0,
        }
    }
}

/// Embeds one group of feature rows.
///
/// `dim` is reduced to what the group supports (`min(rows, vector length)`);
/// for the neighbour method `n_neighbors` is reduced to `rows - 1`.
pub fn embed_rows(rows: &[FeatureRow], opts: &EmbedOptions) -> Result<Embedding> {
    let owners: Vec<RowOwner> = rows.iter().map(|r| r.owner.clone()).collect();
    let data: Vec<Vec<f64>> = rows
        .iter()
        .map(|r| r.vector.iter().map(|&v| f64::from(v)).collect())
        .collect();
    if data.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "embedding needs at least 2 rows, got {}",
            data.len()
        )));
    }
    let width = data[0].len();
    let dim = opts.dim.min(data.len()).min(width);
    let coords = match opts.method {
        Method::Pca => fit_pca(&data, dim)?.scores,
        Method::Neighbor => embed_neighbor(
            &data,
            dim,
            NeighborOptions::new(opts.n_neighbors.min(data.len() - 1), opts.seed),
        )?,
    };
    Embedding::from_coords(opts.method, dim, owners, &coords)
}

/// Embeds every individual's rows separately (in parallel) and all rows
/// together in one shared space. Individuals with fewer than two rows get no
/// group embedding and are listed in the second return value.
pub fn embed_dataset(ds: &Dataset, p: &Parameters, opts: &EmbedOptions, workers: usize) -> Result<(Dataset, Vec<String>)> {
    let table = get_units(ds, p, Padding::PerIndividual, workers)?;
    let groups: Vec<(String, Vec<FeatureRow>)> = table.groups().into_iter().collect();
    let (ready, skipped): (Vec<_>, Vec<_>) = groups.into_iter().partition(|(_, rows)| rows.len() >= 2);

    let job = JobSpec::new(ready, workers);
    let results = par_map(&job, |_, (_, rows)| embed_rows(rows, opts));
    let mut embedded = BTreeMap::new();
    for ((individual, _), r) in job.items.iter().zip(results) {
        match r {
            Ok(e) => {
                embedded.insert(individual.clone(), e);
            }
            Err(f) => {
                return Err(match f.kind {
                    FailureKind::Error(e) => e,
                    FailureKind::Panic(m) => Error::State(format!("embedding {individual} panicked: {m}")),
                })
            }
        }
    }

    let all = get_units(ds, p, Padding::Global, workers)?;
    let global = if all.rows.len() >= 2 {
        Some(embed_rows(&all.rows, opts)?)
    } else {
        None
    };
    let set = EmbeddingSet {
        method: opts.method,
        song_level: p.song_level,
        groups: embedded,
        global,
    };
    let out = attach_embeddings(ds, set)?;
    Ok((out, skipped.into_iter().map(|(i, _)| i).collect()))
}
