//! Ingestion of `<name>.wav` + `<name>.json` annotated recordings.
//!
//! Sidecar schema: a JSON object with required keys `ID`, `individual`,
//! `datetime` (ISO-8601), `sample_rate` and `length_s`; optional `year`
//! (derived from `datetime` when absent). Any other key is kept verbatim in
//! [`AnnotationMeta::extra`].

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use chrono::{DateTime, Datelike, NaiveDate, NaiveDateTime};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::parallel::{par_map, FailureKind, JobSpec};
use crate::project::ProjectDirs;
use crate::wav;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotationMeta {
    pub id: String,
    /// Relative to the project root.
    pub wav_path: PathBuf,
    pub individual_id: String,
    pub year: i32,
    pub recorded_at: String,
    pub sample_rate_hz: u32,
    pub length_s: f64,
    pub extra: BTreeMap<String, String>,
}

/// Annotation records sorted by id; ids are unique.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Catalogue(Vec<AnnotationMeta>);

impl Catalogue {
    /// Sorts by id and rejects duplicates.
    pub fn new(mut entries: Vec<AnnotationMeta>) -> Result<Self> {
        entries.sort_by(|a, b| a.id.cmp(&b.id));
        for pair in entries.windows(2) {
            if pair[0].id == pair[1].id {
                return Err(Error::Conflict {
                    id: pair[0].id.clone(),
                    first: pair[0].wav_path.clone(),
                    second: pair[1].wav_path.clone(),
                });
            }
        }
        Ok(Catalogue(entries))
    }

    pub fn entries(&self) -> &[AnnotationMeta] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn to_json_lines(&self) -> String {
        let mut out = String::new();
        for meta in &self.0 {
            out.push_str(&serde_json::to_string(meta).expect("metadata serializes"));
            out.push('\n');
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IngestReport {
    pub catalogue: Catalogue,
    /// WAV files without a `<name>.json` sidecar; excluded from the catalogue.
    pub missing_sidecars: Vec<PathBuf>,
}

/// Parses the `datetime` field and returns its calendar year.
pub fn parse_year(datetime: &str) -> Option<i32> {
    let s = datetime.trim();
    if let Ok(dt) = DateTime::parse_from_rfc3339(s) {
        return Some(dt.year());
    }
    for fmt in ["%Y-%m-%dT%H:%M:%S%.f", "%Y-%m-%d %H:%M:%S%.f", "%Y-%m-%dT%H:%M"] {
        if let Ok(dt) = NaiveDateTime::parse_from_str(s, fmt) {
            return Some(dt.year());
        }
    }
    NaiveDate::parse_from_str(s, "%Y-%m-%d")
        .ok()
        .map(|d| d.year())
}

fn collect_wavs(dir: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
    let entries = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    for entry in entries {
        let entry = entry.map_err(|e| Error::io(dir, e))?;
        let path = entry.path();
        if path.is_dir() {
            collect_wavs(&path, out)?;
        } else if path
            .extension()
            .is_some_and(|ext| ext.eq_ignore_ascii_case("wav"))
        {
            out.push(path);
        }
    }
    Ok(())
}

fn required<'a>(obj: &'a serde_json::Map<String, Value>, key: &str, path: &Path) -> Result<&'a Value> {
    obj.get(key)
        .ok_or_else(|| Error::parse(path, format!("missing required key `{key}`")))
}

fn as_text(v: &Value) -> String {
    match v {
        Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

/// Parses one sidecar and checks it against the WAV header.
pub fn read_sidecar(json_path: &Path, wav_path: &Path, root: &Path) -> Result<AnnotationMeta> {
    let text = fs::read_to_string(json_path).map_err(|e| Error::io(json_path, e))?;
    let value: Value = serde_json::from_str(&text).map_err(|e| Error::parse(json_path, e))?;
    let Value::Object(obj) = value else {
        return Err(Error::parse(json_path, "top level must be an object"));
    };

    let id = required(&obj, "ID", json_path)?
        .as_str()
        .filter(|s| !s.is_empty())
        .ok_or_else(|| Error::parse(json_path, "`ID` must be a non-empty string"))?
        .to_string();
    let individual_id = as_text(required(&obj, "individual", json_path)?);
    let recorded_at = required(&obj, "datetime", json_path)?
        .as_str()
        .ok_or_else(|| Error::parse(json_path, "`datetime` must be a string"))?
        .to_string();
    let sample_rate_hz = required(&obj, "sample_rate", json_path)?
        .as_u64()
        .and_then(|v| u32::try_from(v).ok())
        .ok_or_else(|| Error::parse(json_path, "`sample_rate` must be a positive integer"))?;
    let length_s = required(&obj, "length_s", json_path)?
        .as_f64()
        .ok_or_else(|| Error::parse(json_path, "`length_s` must be a number"))?;
    if !(length_s > 0.0) {
        return Err(Error::Validation(format!(
            "{}: length_s must be positive, got {length_s}",
            json_path.display()
        )));
    }
    let year = match obj.get("year") {
        Some(v) => v
            .as_i64()
            .and_then(|y| i32::try_from(y).ok())
            .ok_or_else(|| Error::parse(json_path, "`year` must be an integer"))?,
        None => parse_year(&recorded_at).ok_or_else(|| {
            Error::parse(json_path, format!("unparseable datetime `{recorded_at}`"))
        })?,
    };

    let header_rate = wav::read_sample_rate(wav_path)?;
    if header_rate != sample_rate_hz {
        return Err(Error::Validation(format!(
            "{}: sample_rate {} does not match WAV header ({header_rate})",
            json_path.display(),
            sample_rate_hz
        )));
    }

    const KNOWN: [&str; 6] = ["ID", "individual", "datetime", "sample_rate", "length_s", "year"];
    let extra = obj
        .iter()
        .filter(|(k, _)| !KNOWN.contains(&k.as_str()))
        .map(|(k, v)| (k.clone(), as_text(v)))
        .collect();

    let rel = wav_path.strip_prefix(root).unwrap_or(wav_path).to_path_buf();
    Ok(AnnotationMeta {
        id,
        wav_path: rel,
        individual_id,
        year,
        recorded_at,
        sample_rate_hz,
        length_s,
        extra,
    })
}

/// Reads every WAV under `raw_data` that has a sidecar. WAVs without a
/// sidecar are listed in the report rather than dropped silently.
pub fn ingest(dirs: &ProjectDirs, workers: usize) -> Result<IngestReport> {
    let mut wavs = Vec::new();
    collect_wavs(&dirs.raw_data, &mut wavs)?;
    wavs.sort();

    let mut missing = Vec::new();
    let mut pairs = Vec::new();
    for wav_path in wavs {
        let json_path = wav_path.with_extension("json");
        if json_path.is_file() {
            pairs.push((wav_path, json_path));
        } else {
            missing.push(wav_path);
        }
    }

    let job = JobSpec::new(pairs, workers);
    let mut metas = Vec::with_capacity(job.items.len());
    for result in par_map(&job, |_, (wav_path, json_path)| {
        read_sidecar(json_path, wav_path, &dirs.root)
    }) {
        match result {
            Ok(meta) => metas.push(meta),
            Err(failure) => {
                return Err(match failure.kind {
                    FailureKind::Error(e) => e,
                    FailureKind::Panic(msg) => Error::State(format!(
                        "reading {} panicked: {msg}",
                        job.items[failure.index].1.display()
                    )),
                })
            }
        }
    }

    Ok(IngestReport {
        catalogue: Catalogue::new(metas)?,
        missing_sidecars: missing,
    })
}
