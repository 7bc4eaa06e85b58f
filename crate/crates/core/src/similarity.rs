//! Song-to-song cosine similarity and cross-year re-identification.
//!
//! Song features are the shared-space (global) embeddings produced by
//! `embed`, not features from a trained classifier.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, RecordStatus, Stage};
use crate::error::{Error, Result};
use crate::parallel::{par_map_infallible, JobSpec};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SongMeta {
    pub song_id: String,
    pub individual: String,
    pub year: i32,
    pub label: Option<i32>,
    pub song_type: Option<String>,
}

impl SongMeta {
    /// Song-type key used for chance levels: the annotated type, else the
    /// cluster label, scoped to the individual. Noise has no type.
    fn type_key(&self) -> Option<String> {
        match (&self.song_type, self.label) {
            (Some(t), _) => Some(format!("{}/{t}", self.individual)),
            (None, Some(l)) if l >= 0 => Some(format!("{}/{l}", self.individual)),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SongVector {
    pub meta: SongMeta,
    pub vector: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Exclusion {
    pub song_id: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SongVectors {
    pub songs: Vec<SongVector>,
    pub excluded: Vec<Exclusion>,
    /// Describes where the vectors came from.
    pub feature_source: String,
}

/// One vector per song from the global embedding: the song-level row, or
/// the mean of the song's unit rows. Songs without units or without an
/// embedded row are excluded and reported.
pub fn song_vectors(ds: &Dataset) -> Result<SongVectors> {
    ds.require(Stage::Embedded)?;
    let set = ds
        .embeddings
        .as_ref()
        .ok_or_else(|| Error::State("dataset has no embeddings; run `embed` first".into()))?;
    let global = set
        .global
        .as_ref()
        .ok_or_else(|| Error::State("dataset has no global embedding; run `embed` first".into()))?;

    let mut rows: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, o) in global.owners.iter().enumerate() {
        rows.entry(o.song_id.as_str()).or_default().push(i);
    }
    let mut songs = Vec::new();
    let mut excluded = Vec::new();
    for r in &ds.records {
        let Some(idx) = rows.get(r.id()) else {
            let reason = match r.status {
                RecordStatus::NoUnits => "no units",
                RecordStatus::Failed => "processing failed",
                _ => "not embedded",
            };
            excluded.push(Exclusion {
                song_id: r.id().to_string(),
                reason: reason.into(),
            });
            continue;
        };
        let mut vector = vec![0f64; global.dim];
        for &i in idx {
            for (v, &x) in vector.iter_mut().zip(global.row(i)) {
                *v += f64::from(x);
            }
        }
        for v in &mut vector {
            *v /= idx.len() as f64;
        }
        songs.push(SongVector {
            meta: SongMeta {
                song_id: r.id().to_string(),
                individual: r.meta.individual_id.clone(),
                year: r.meta.year,
                label: r.cluster_label,
                song_type: r.song_type.clone(),
            },
            vector,
        });
    }
    let method = serde_json::to_value(global.method).expect("method serialises");
    Ok(SongVectors {
        songs,
        excluded,
        feature_source: format!(
            "{}-dimensional {} embedding of {} spectrograms (shared space across individuals)",
            global.dim,
            method.as_str().unwrap_or("unknown"),
            if set.song_level { "song" } else { "unit" }
        ),
    })
}

/// Symmetric cosine similarity over the songs that have non-zero vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityMatrix {
    pub songs: Vec<SongMeta>,
    /// Upper triangle without the diagonal, row by row.
    upper: Vec<f64>,
    pub excluded: Vec<Exclusion>,
}

impl SimilarityMatrix {
    pub fn len(&self) -> usize {
        self.songs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.songs.is_empty()
    }

    fn offset(&self, i: usize, j: usize) -> usize {
        let n = self.songs.len();
        i * (2 * n - i - 1) / 2 + (j - i - 1)
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        match i.cmp(&j) {
            std::cmp::Ordering::Equal => 1.0,
            std::cmp::Ordering::Less => self.upper[self.offset(i, j)],
            std::cmp::Ordering::Greater => self.upper[self.offset(j, i)],
        }
    }

    /// Applies `f` to every off-diagonal value.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> SimilarityMatrix {
        SimilarityMatrix {
            songs: self.songs.clone(),
            upper: self.upper.iter().map(|&v| f(v)).collect(),
            excluded: self.excluded.clone(),
        }
    }
}

/// Cosine similarity between every pair of songs. Zero vectors are excluded
/// and reported; rows are computed in parallel.
pub fn pairwise_similarity(vectors: &[SongVector], workers: usize) -> Result<SimilarityMatrix> {
    let mut kept = Vec::new();
    let mut excluded = Vec::new();
    for v in vectors {
        let norm = v.vector.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 0.0 && norm.is_finite() {
            kept.push((v, norm));
        } else {
            excluded.push(Exclusion {
                song_id: v.meta.song_id.clone(),
                reason: "zero vector".into(),
            });
        }
    }
    if kept.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "similarity needs at least 2 non-zero song vectors, got {}",
            kept.len()
        )));
    }
    let n = kept.len();
    let job = JobSpec::new((0..n).collect(), workers);
    let rows = par_map_infallible(&job, |_, &i| {
        let (a, na) = kept[i];
        ((i + 1)..n)
            .map(|j| {
                let (b, nb) = kept[j];
                let dot: f64 = a.vector.iter().zip(&b.vector).map(|(x, y)| x * y).sum();
                (dot / (na * nb)).clamp(-1.0, 1.0)
            })
            .collect::<Vec<f64>>()
    });
    Ok(SimilarityMatrix {
        songs: kept.iter().map(|(v, _)| v.meta.clone()).collect(),
        upper: rows.into_iter().flatten().collect(),
        excluded,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReIdTrial {
    pub individual: String,
    pub year: i32,
    pub next_year: i32,
    pub query_song: String,
    pub match_song: String,
    pub predicted: String,
    pub score: f64,
    pub correct: bool,
    /// `1 / distinct song types` among the candidate songs.
    pub chance_types: f64,
    /// `1 / distinct individuals` among the candidate songs.
    pub chance_individuals: f64,
}

/// Off-diagonal pairs split by identity and year. Every unordered pair is
/// in exactly one partition.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Partitions {
    pub within_bird_within_year: Vec<f64>,
    pub within_bird_across_year: Vec<f64>,
    pub across_birds: Vec<f64>,
}

impl Partitions {
    pub fn named(&self) -> [(&'static str, &[f64]); 3] {
        [
            ("within_bird_within_year", &self.within_bird_within_year),
            ("within_bird_across_year", &self.within_bird_across_year),
            ("across_birds", &self.across_birds),
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartitionSummary {
    pub name: String,
    pub pairs: usize,
    pub mean: Option<f64>,
    pub min: Option<f64>,
    pub max: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReIdReport {
    pub feature_source: String,
    pub songs: usize,
    pub trials: Vec<ReIdTrial>,
    /// Fraction of trials whose best cross-year match belongs to the query bird.
    pub accuracy: f64,
    /// Mean of the per-trial `1 / song types` chance levels.
    pub chance_level: f64,
    /// Mean of the per-trial `1 / individuals` chance levels.
    pub chance_level_individuals: f64,
    /// Individuals with songs in only one year, or absent from the next year.
    pub excluded_individuals: Vec<String>,
    pub excluded_songs: Vec<Exclusion>,
    pub partition_summary: Vec<PartitionSummary>,
    #[serde(skip)]
    pub partitions: Partitions,
}

/// Cross-year re-identification.
///
/// For each individual and each year `Y` it sang in, the most similar pair
/// between its year-`Y` songs and all songs of the next recorded year
/// predicts its identity as the owner of the later song. Ties keep the
/// first pair in song order.
pub fn cross_year_reid(m: &SimilarityMatrix, feature_source: &str) -> Result<ReIdReport> {
    let years: BTreeSet<i32> = m.songs.iter().map(|s| s.year).collect();
    if years.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "re-identification needs songs from at least 2 years, got {}",
            years.len()
        )));
    }
    let years: Vec<i32> = years.into_iter().collect();
    let mut by_year: BTreeMap<i32, Vec<usize>> = BTreeMap::new();
    for (i, s) in m.songs.iter().enumerate() {
        by_year.entry(s.year).or_default().push(i);
    }
    let individuals: BTreeSet<&str> = m.songs.iter().map(|s| s.individual.as_str()).collect();

    let mut trials = Vec::new();
    let mut evaluated: BTreeSet<&str> = BTreeSet::new();
    for pair in years.windows(2) {
        let (year, next) = (pair[0], pair[1]);
        let candidates = &by_year[&next];
        let types: BTreeSet<String> = candidates.iter().filter_map(|&j| m.songs[j].type_key()).collect();
        let owners: BTreeSet<&str> = candidates.iter().map(|&j| m.songs[j].individual.as_str()).collect();
        for &ind in &individuals {
            let queries: Vec<usize> = by_year[&year]
                .iter()
                .copied()
                .filter(|&i| m.songs[i].individual == ind)
                .collect();
            if queries.is_empty() || !owners.contains(ind) {
                continue;
            }
            let mut best: Option<(usize, usize, f64)> = None;
            for &q in &queries {
                for &c in candidates {
                    let s = m.get(q, c);
                    if best.is_none_or(|b| s > b.2) {
                        best = Some((q, c, s));
                    }
                }
            }
            let (q, c, score) = best.expect("queries and candidates are non-empty");
            let predicted = m.songs[c].individual.clone();
            evaluated.insert(ind);
            trials.push(ReIdTrial {
                individual: ind.to_string(),
                year,
                next_year: next,
                query_song: m.songs[q].song_id.clone(),
                match_song: m.songs[c].song_id.clone(),
                correct: predicted == ind,
                predicted,
                score,
                chance_types: 1.0 / types.len().max(1) as f64,
                chance_individuals: 1.0 / owners.len() as f64,
            });
        }
    }

    let mut partitions = Partitions::default();
    for i in 0..m.len() {
        for j in i + 1..m.len() {
            let (a, b) = (&m.songs[i], &m.songs[j]);
            let v = m.get(i, j);
            match (a.individual == b.individual, a.year == b.year) {
                (true, true) => partitions.within_bird_within_year.push(v),
                (true, false) => partitions.within_bird_across_year.push(v),
                (false, _) => partitions.across_birds.push(v),
            }
        }
    }

    let mean = |xs: &mut dyn Iterator<Item = f64>| -> f64 {
        let (s, n) = xs.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
        if n == 0 {
            0.0
        } else {
            s / n as f64
        }
    };
    let accuracy = mean(&mut trials.iter().map(|t| f64::from(u8::from(t.correct))));
    let chance_level = mean(&mut trials.iter().map(|t| t.chance_types));
    let chance_level_individuals = mean(&mut trials.iter().map(|t| t.chance_individuals));
    let partition_summary = partitions
        .named()
        .iter()
        .map(|(name, xs)| PartitionSummary {
            name: name.to_string(),
            pairs: xs.len(),
            mean: (!xs.is_empty()).then(|| xs.iter().sum::<f64>() / xs.len() as f64),
            min: xs.iter().copied().reduce(f64::min),
            max: xs.iter().copied().reduce(f64::max),
        })
        .collect();

    Ok(ReIdReport {
        feature_source: feature_source.to_string(),
        songs: m.len(),
        accuracy,
        chance_level,
        chance_level_individuals,
        excluded_individuals: individuals
            .iter()
            .filter(|i| !evaluated.contains(*i))
            .map(|i| i.to_string())
            .collect(),
        excluded_songs: m.excluded.clone(),
        trials,
        partition_summary,
        partitions,
    })
}

const HIST_BINS: usize = 200;
const DENSITY_POINTS: usize = 201;

fn histogram(values: &[f64]) -> Vec<usize> {
    let mut counts = vec![0usize; HIST_BINS];
    for &v in values {
        let b = (((v + 1.0) / 2.0) * HIST_BINS as f64).floor() as usize;
        counts[b.min(HIST_BINS - 1)] += 1;
    }
    counts
}

/// Gaussian kernel density of `values` on `DENSITY_POINTS` evenly spaced
/// points over `[-1, 1]`, computed from the binned values with Silverman's
/// bandwidth. Empty input gives zero density.
pub fn density(values: &[f64]) -> Vec<(f64, f64)> {
    let xs = (0..DENSITY_POINTS).map(|k| -1.0 + 2.0 * k as f64 / (DENSITY_POINTS - 1) as f64);
    let n = values.len();
    if n == 0 {
        return xs.map(|x| (x, 0.0)).collect();
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let sd = (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64).sqrt();
    let width = 2.0 / HIST_BINS as f64;
    let h = (1.06 * sd * (n as f64).powf(-0.2)).max(width);
    let counts = histogram(values);
    let norm = 1.0 / (n as f64 * h * (2.0 * std::f64::consts::PI).sqrt());
    xs.map(|x| {
        let d: f64 = counts
            .iter()
            .enumerate()
            .filter(|(_, &c)| c > 0)
            .map(|(b, &c)| {
                let centre = -1.0 + (b as f64 + 0.5) * width;
                c as f64 * (-0.5 * ((x - centre) / h).powi(2)).exp()
            })
            .sum();
        (x, d * norm)
    })
    .collect()
}

/// Writes `report.json`, `partitions.csv` (histogram counts per partition)
/// and `density.csv` into `dir`, returning the written paths.
pub fn write_report(report: &ReIdReport, dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let parts = report.partitions.named();

    let json_path = dir.join("report.json");
    let json = serde_json::to_string_pretty(report).expect("report serialises");
    fs::write(&json_path, json + "\n").map_err(|e| Error::io(&json_path, e))?;

    let hists: Vec<Vec<usize>> = parts.iter().map(|(_, v)| histogram(v)).collect();
    let mut csv = String::from("bin_low,bin_high");
    for (name, _) in &parts {
        csv.push(',');
        csv.push_str(name);
    }
    csv.push('\n');
    let width = 2.0 / HIST_BINS as f64;
    for b in 0..HIST_BINS {
        let lo = -1.0 + b as f64 * width;
        let _ = write!(csv, "{lo:.3},{:.3}", lo + width);
        for h in &hists {
            let _ = write!(csv, ",{}", h[b]);
        }
        csv.push('\n');
    }
    let csv_path = dir.join("partitions.csv");
    fs::write(&csv_path, csv).map_err(|e| Error::io(&csv_path, e))?;

    let curves: Vec<Vec<(f64, f64)>> = parts.iter().map(|(_, v)| density(v)).collect();
    let mut dens = String::from("x");
    for (name, _) in &parts {
        dens.push(',');
        dens.push_str(name);
    }
    dens.push('\n');
    for k in 0..DENSITY_POINTS {
        let _ = write!(dens, "{:.3}", curves[0][k].0);
        for c in &curves {
            let _ = write!(dens, ",{:.6}", c[k].1);
        }
        dens.push('\n');
    }
    let dens_path = dir.join("density.csv");
    fs::write(&dens_path, dens).map_err(|e| Error::io(&dens_path, e))?;
    Ok(vec![json_path, csv_path, dens_path])
}
