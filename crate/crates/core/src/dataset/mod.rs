//! The vocalisation database: records, spectrogram payloads, embeddings and
//! labels, persisted under `data/segmented` and `data/spectrograms`.
//!
//! Every pipeline step returns a new [`Dataset`]; [`Dataset::save`] writes a
//! new snapshot whose manifest records the previous snapshot's version.

mod export;
mod features;
pub mod kspec;
mod store;

pub use export::{export_training_set, ExportSummary};
pub use features::{get_units, FeatureTable, Padding};
pub use store::{load, sha256_file};

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::embed::{Embedding, Method};
use crate::error::{Error, Result};
use crate::ingest::{AnnotationMeta, Catalogue};
use crate::parallel::{par_map, FailureKind, ItemFailure, JobSpec};
use crate::params::Parameters;
use crate::project::ProjectDirs;
use crate::signal::{extract_unit_spectrograms, prepare_spectrogram, segment_into_units, SpectrogramPlan, UnitSegmentation};
use crate::wav;

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Built,
    Segmented,
    Embedded,
    Clustered,
}

impl Stage {
    /// The command that produces this stage.
    pub fn command(self) -> &'static str {
        match self {
            Stage::Built => "ingest",
            Stage::Segmented => "segment",
            Stage::Embedded => "embed",
            Stage::Clustered => "cluster",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LabelSource {
    Auto,
    Human,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecordStatus {
    Pending,
    Segmented,
    /// Segmented successfully but no units were found.
    NoUnits,
    Failed,
}

/// One song.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VocalisationRecord {
    pub meta: AnnotationMeta,
    pub status: RecordStatus,
    pub segmentation: Option<UnitSegmentation>,
    /// Relative to the project root.
    pub spectrogram_ref: Option<String>,
    pub unit_spectrogram_refs: Vec<String>,
    /// `-1` is noise.
    pub cluster_label: Option<i32>,
    pub label_source: LabelSource,
    pub song_type: Option<String>,
    /// Per-unit labels when clustering ran on units.
    pub unit_labels: Vec<i32>,
}

impl VocalisationRecord {
    pub fn new(meta: AnnotationMeta) -> Self {
        let song_type = meta.extra.get("song_type").cloned();
        VocalisationRecord {
            meta,
            status: RecordStatus::Pending,
            segmentation: None,
            spectrogram_ref: None,
            unit_spectrogram_refs: Vec::new(),
            cluster_label: None,
            label_source: LabelSource::Auto,
            song_type,
            unit_labels: Vec::new(),
        }
    }

    pub fn id(&self) -> &str {
        &self.meta.id
    }

    pub fn unit_count(&self) -> usize {
        self.segmentation.as_ref().map_or(0, UnitSegmentation::len)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecordFailure {
    pub id: String,
    pub stage: Stage,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format_version: u32,
    pub snapshot_version: u64,
    pub parent_version: Option<u64>,
    pub stage: Stage,
    pub parameters: Parameters,
    pub record_count: usize,
    pub individuals: Vec<String>,
    /// SHA-256 of every artefact, keyed by path relative to the project root.
    pub checksums: BTreeMap<String, String>,
    pub failures: Vec<RecordFailure>,
    /// Number of edit-journal entries already folded into the records.
    pub journal_compacted: usize,
}

/// Embeddings of one dataset: one group per individual plus an optional
/// shared space over all rows.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingSet {
    pub method: Method,
    pub song_level: bool,
    pub groups: BTreeMap<String, Embedding>,
    pub global: Option<Embedding>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub dirs: ProjectDirs,
    pub manifest: Manifest,
    pub records: Vec<VocalisationRecord>,
    pub embeddings: Option<EmbeddingSet>,
}

impl Dataset {
    pub fn stage(&self) -> Stage {
        self.manifest.stage
    }

    /// Errors unless the dataset has reached `stage`.
    pub fn require(&self, stage: Stage) -> Result<()> {
        if self.manifest.stage < stage {
            return Err(Error::State(format!(
                "dataset is at stage `{}`; run `{}` first",
                serde_json::to_value(self.manifest.stage).expect("stage").as_str().unwrap_or("?"),
                stage.command()
            )));
        }
        Ok(())
    }

    pub fn record(&self, id: &str) -> Option<&VocalisationRecord> {
        self.records
            .binary_search_by(|r| r.meta.id.as_str().cmp(id))
            .ok()
            .map(|i| &self.records[i])
    }

    pub fn record_mut(&mut self, id: &str) -> Option<&mut VocalisationRecord> {
        self.records
            .binary_search_by(|r| r.meta.id.as_str().cmp(id))
            .ok()
            .map(|i| &mut self.records[i])
    }

    pub fn individuals(&self) -> Vec<String> {
        individuals_of(&self.records)
    }

    pub fn resolve(&self, rel: &str) -> PathBuf {
        self.dirs.root.join(rel)
    }

    /// Song spectrogram payload of `id`.
    pub fn song_spectrogram(&self, id: &str) -> Result<kspec::Matrix> {
        let rec = self
            .record(id)
            .ok_or_else(|| Error::NotFound(format!("song `{id}`")))?;
        let rel = rec
            .spectrogram_ref
            .as_deref()
            .ok_or_else(|| Error::State(format!("song `{id}` has no spectrogram")))?;
        kspec::read(&self.resolve(rel))
    }

    fn advance(&mut self, stage: Stage) {
        self.manifest.stage = stage;
        self.manifest.record_count = self.records.len();
        self.manifest.individuals = self.individuals();
    }
}

fn individuals_of(records: &[VocalisationRecord]) -> Vec<String> {
    let mut ids: Vec<String> = records.iter().map(|r| r.meta.individual_id.clone()).collect();
    ids.sort();
    ids.dedup();
    ids
}

fn failure_message<E: std::fmt::Display>(f: &ItemFailure<E>) -> String {
    match &f.kind {
        FailureKind::Error(e) => e.to_string(),
        FailureKind::Panic(msg) => format!("panicked: {msg}"),
    }
}

/// One record per catalogue entry whose WAV decodes; unreadable WAVs are
/// reported in the manifest and left out.
pub fn build_dataset(dirs: &ProjectDirs, catalogue: &Catalogue, p: &Parameters, workers: usize) -> Result<Dataset> {
    p.ensure_valid()?;
    let job = JobSpec::new(catalogue.entries().to_vec(), workers);
    let results = par_map(&job, |_, meta: &AnnotationMeta| {
        wav::read_wav(&dirs.root.join(&meta.wav_path)).map(|_| ())
    });
    let mut records = Vec::with_capacity(job.items.len());
    let mut failures = Vec::new();
    for (meta, result) in job.items.iter().zip(results) {
        match result {
            Ok(()) => records.push(VocalisationRecord::new(meta.clone())),
            Err(f) => failures.push(RecordFailure {
                id: meta.id.clone(),
                stage: Stage::Built,
                message: failure_message(&f),
            }),
        }
    }
    let manifest = Manifest {
        format_version: FORMAT_VERSION,
        snapshot_version: 0,
        parent_version: None,
        stage: Stage::Built,
        parameters: p.clone(),
        record_count: records.len(),
        individuals: individuals_of(&records),
        checksums: BTreeMap::new(),
        failures,
        journal_compacted: 0,
    };
    Ok(Dataset {
        dirs: dirs.clone(),
        manifest,
        records,
        embeddings: None,
    })
}

pub(crate) fn rel_path(dirs: &ProjectDirs, path: &Path) -> String {
    let rel = path.strip_prefix(&dirs.root).unwrap_or(path);
    rel.components()
        .map(|c| c.as_os_str().to_string_lossy().into_owned())
        .collect::<Vec<_>>()
        .join("/")
}

struct Segmented {
    segmentation: UnitSegmentation,
    song_ref: String,
    unit_refs: Vec<String>,
}

fn segment_one(dirs: &ProjectDirs, plan: &SpectrogramPlan, p: &Parameters, meta: &AnnotationMeta) -> Result<Segmented> {
    let audio = wav::read_wav(&dirs.root.join(&meta.wav_path))?;
    if audio.sample_rate_hz != p.sample_rate_hz {
        return Err(Error::Validation(format!(
            "{}: recorded at {} Hz, parameters expect {} Hz",
            meta.id, audio.sample_rate_hz, p.sample_rate_hz
        )));
    }
    let spec = prepare_spectrogram(plan, &audio.samples, p)?;
    let segmentation = segment_into_units(&spec, p);
    let units = extract_unit_spectrograms(&spec, &segmentation)?;

    let song_path = dirs.spectrograms.join(format!("{}.kspec", meta.id));
    kspec::write(&song_path, &kspec::Matrix::new(spec.rows, spec.cols, spec.values)?)?;
    let mut unit_refs = Vec::with_capacity(units.len());
    for (i, u) in units.into_iter().enumerate() {
        let path = dirs.spectrograms.join("units").join(format!("{}_{i:03}.kspec", meta.id));
        kspec::write(&path, &kspec::Matrix::new(u.rows, u.cols, u.values)?)?;
        unit_refs.push(rel_path(dirs, &path));
    }
    Ok(Segmented {
        segmentation,
        song_ref: rel_path(dirs, &song_path),
        unit_refs,
    })
}

/// Computes spectrograms and unit segmentations for every record, in
/// parallel, writing song and unit payloads under `data/spectrograms`.
///
/// Records where no unit is found are kept with status `no_units`; records
/// that fail are kept with status `failed` and reported in the manifest.
/// Output is identical for any worker count.
pub fn segment_all(ds: &Dataset, p: &Parameters, workers: usize) -> Result<Dataset> {
    ds.require(Stage::Built)?;
    p.ensure_valid()?;
    let plan = SpectrogramPlan::new(p)?;
    let dirs = &ds.dirs;
    if dirs.spectrograms.exists() {
        fs::remove_dir_all(&dirs.spectrograms).map_err(|e| Error::io(&dirs.spectrograms, e))?;
    }
    fs::create_dir_all(dirs.spectrograms.join("units")).map_err(|e| Error::io(&dirs.spectrograms, e))?;

    let metas: Vec<AnnotationMeta> = ds.records.iter().map(|r| r.meta.clone()).collect();
    let job = JobSpec::new(metas, workers);
    let results = par_map(&job, |_, meta| segment_one(dirs, &plan, p, meta));

    let mut out = ds.clone();
    out.embeddings = None;
    out.manifest.parameters = p.clone();
    out.manifest.failures.retain(|f| f.stage == Stage::Built);
    for (rec, result) in out.records.iter_mut().zip(results) {
        rec.cluster_label = None;
        rec.unit_labels.clear();
        rec.label_source = LabelSource::Auto;
        match result {
            Ok(s) => {
                rec.status = if s.segmentation.is_empty() {
                    RecordStatus::NoUnits
                } else {
                    RecordStatus::Segmented
                };
                rec.segmentation = Some(s.segmentation);
                rec.spectrogram_ref = Some(s.song_ref);
                rec.unit_spectrogram_refs = s.unit_refs;
            }
            Err(f) => {
                rec.status = RecordStatus::Failed;
                rec.segmentation = None;
                rec.spectrogram_ref = None;
                rec.unit_spectrogram_refs.clear();
                out.manifest.failures.push(RecordFailure {
                    id: rec.meta.id.clone(),
                    stage: Stage::Segmented,
                    message: failure_message(&f),
                });
            }
        }
    }
    out.advance(Stage::Segmented);
    Ok(out)
}

/// Replaces the dataset's embeddings and moves it to the embedded stage.
pub fn attach_embeddings(ds: &Dataset, set: EmbeddingSet) -> Result<Dataset> {
    ds.require(Stage::Segmented)?;
    let mut out = ds.clone();
    out.embeddings = Some(set);
    out.advance(Stage::Embedded);
    Ok(out)
}

/// Marks the dataset as clustered after labels were written.
pub(crate) fn mark_clustered(ds: &mut Dataset) {
    ds.advance(Stage::Clustered);
}
