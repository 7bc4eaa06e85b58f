//! Building, segmenting, clustering and reviewing animal vocalisation datasets.
//!
//! The pipeline runs WAV + JSON ingestion, mel spectrograms, amplitude-threshold
//! unit segmentation, embedding, per-individual density clustering, and
//! cross-year similarity analysis. Shared types are re-exported at the crate
//! root.

pub mod cluster;
pub mod dataset;
pub mod embed;
pub mod error;
pub mod ingest;
pub mod parallel;
pub mod params;
pub mod project;
pub mod signal;
pub mod similarity;
pub mod synth;
pub mod wav;

pub use cluster::{cluster_ids, hdbscan_cluster, ClusterAssignment};
pub use dataset::{build_dataset, get_units, load, segment_all, Dataset, LabelSource, Stage, VocalisationRecord};
pub use embed::{Embedding, FeatureRow};
pub use error::{Error, ErrorKind, Result};
pub use ingest::{ingest, AnnotationMeta, Catalogue, IngestReport};
pub use parallel::{par_map, JobSpec};
pub use params::{Parameters, Violation};
pub use project::{init_project, ProjectDirs};
pub use signal::{Spectrogram, UnitSegmentation};
