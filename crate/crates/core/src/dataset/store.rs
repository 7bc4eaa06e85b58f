use std::collections::BTreeMap;
use std::fs;
use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{kspec, rel_path, Dataset, EmbeddingSet, Manifest, VocalisationRecord, FORMAT_VERSION};
use crate::embed::{Embedding, Method, RowOwner};
use crate::error::{Error, Result};
use crate::project::ProjectDirs;

const MANIFEST: &str = "manifest.json";
const RECORDS: &str = "records.jsonl";
const EMBED_INDEX: &str = "index.json";

pub fn sha256_file(path: &Path) -> Result<String> {
    let mut file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut hasher = Sha256::new();
    let mut buf = vec![0u8; 1 << 16];
    loop {
        let n = file.read(&mut buf).map_err(|e| Error::io(path, e))?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
    }
    Ok(hex::encode(hasher.finalize()))
}

/// Writes via a sibling temporary file and a rename.
pub(crate) fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

#[derive(Serialize, Deserialize)]
struct EmbeddingIndex {
    method: Method,
    song_level: bool,
    groups: Vec<GroupEntry>,
    global: Option<GroupEntry>,
}

#[derive(Serialize, Deserialize)]
struct GroupEntry {
    individual: Option<String>,
    file: String,
    method: Method,
    dim: usize,
    owners: Vec<RowOwner>,
}

fn write_group(dirs: &ProjectDirs, name: &str, individual: Option<&str>, e: &Embedding) -> Result<GroupEntry> {
    let path = dirs.embeddings_dir().join(name);
    kspec::write(&path, &kspec::Matrix::new(e.len(), e.dim, e.values.clone())?)?;
    Ok(GroupEntry {
        individual: individual.map(str::to_string),
        file: rel_path(dirs, &path),
        method: e.method,
        dim: e.dim,
        owners: e.owners.clone(),
    })
}

fn read_group(dirs: &ProjectDirs, g: GroupEntry) -> Result<Embedding> {
    let path = dirs.root.join(&g.file);
    let m = kspec::read(&path)?;
    if m.rows != g.owners.len() || m.cols != g.dim {
        return Err(Error::parse(
            &path,
            format!("expected {}x{} embedding, found {}x{}", g.owners.len(), g.dim, m.rows, m.cols),
        ));
    }
    Ok(Embedding {
        method: g.method,
        dim: g.dim,
        owners: g.owners,
        values: m.values,
    })
}

fn write_embeddings(dirs: &ProjectDirs, set: &EmbeddingSet) -> Result<()> {
    let mut groups = Vec::new();
    for (i, (individual, e)) in set.groups.iter().enumerate() {
        groups.push(write_group(dirs, &format!("group_{i:04}.kspec"), Some(individual), e)?);
    }
    let global = match &set.global {
        Some(e) => Some(write_group(dirs, "global.kspec", None, e)?),
        None => None,
    };
    let index = EmbeddingIndex {
        method: set.method,
        song_level: set.song_level,
        groups,
        global,
    };
    let bytes = serde_json::to_vec_pretty(&index).expect("index serializes");
    write_atomic(&dirs.embeddings_dir().join(EMBED_INDEX), &bytes)
}

fn read_embeddings(dirs: &ProjectDirs) -> Result<Option<EmbeddingSet>> {
    let path = dirs.embeddings_dir().join(EMBED_INDEX);
    if !path.exists() {
        return Ok(None);
    }
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let index: EmbeddingIndex = serde_json::from_str(&text).map_err(|e| Error::parse(&path, e))?;
    let mut groups = BTreeMap::new();
    for g in index.groups {
        let individual = g
            .individual
            .clone()
            .ok_or_else(|| Error::parse(&path, "embedding group without individual"))?;
        groups.insert(individual, read_group(dirs, g)?);
    }
    let global = index.global.map(|g| read_group(dirs, g)).transpose()?;
    Ok(Some(EmbeddingSet {
        method: index.method,
        song_level: index.song_level,
        groups,
        global,
    }))
}

pub(crate) fn records_to_jsonl(records: &[VocalisationRecord]) -> String {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(r).expect("record serializes"));
        out.push('\n');
    }
    out
}

impl Dataset {
    /// Persists records, embeddings and a new manifest snapshot.
    ///
    /// The manifest lists the SHA-256 of every artefact (records table, song
    /// and unit spectrograms, embeddings) and chains to the previous
    /// snapshot's version.
    pub fn save(&mut self) -> Result<()> {
        let dirs = self.dirs.clone();
        let seg = dirs.dataset_dir();
        fs::create_dir_all(seg).map_err(|e| Error::io(seg, e))?;

        let emb_dir = dirs.embeddings_dir();
        if emb_dir.exists() {
            fs::remove_dir_all(&emb_dir).map_err(|e| Error::io(&emb_dir, e))?;
        }
        if let Some(set) = &self.embeddings {
            write_embeddings(&dirs, set)?;
        }
        let records_path = seg.join(RECORDS);
        write_atomic(&records_path, records_to_jsonl(&self.records).as_bytes())?;

        let mut files = vec![records_path];
        for r in &self.records {
            files.extend(r.spectrogram_ref.iter().map(|p| dirs.root.join(p)));
            files.extend(r.unit_spectrogram_refs.iter().map(|p| dirs.root.join(p)));
        }
        if emb_dir.exists() {
            let mut emb: Vec<_> = fs::read_dir(&emb_dir)
                .map_err(|e| Error::io(&emb_dir, e))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .collect();
            emb.sort();
            files.extend(emb);
        }
        let mut checksums = BTreeMap::new();
        for f in &files {
            checksums.insert(rel_path(&dirs, f), sha256_file(f)?);
        }

        self.manifest.parent_version = Some(self.manifest.snapshot_version);
        self.manifest.snapshot_version += 1;
        self.manifest.checksums = checksums;
        self.manifest.record_count = self.records.len();
        self.manifest.individuals = self.individuals();
        let bytes = serde_json::to_vec_pretty(&self.manifest).expect("manifest serializes");
        write_atomic(&seg.join(MANIFEST), &bytes)
    }
}

/// Loads the latest snapshot and verifies every checksum in its manifest.
pub fn load(dirs: &ProjectDirs) -> Result<Dataset> {
    let seg = dirs.dataset_dir();
    let manifest_path = seg.join(MANIFEST);
    if !manifest_path.exists() {
        return Err(Error::State(format!(
            "no dataset at {}; run `ingest` first",
            seg.display()
        )));
    }
    let text = fs::read_to_string(&manifest_path).map_err(|e| Error::io(&manifest_path, e))?;
    let raw: serde_json::Value = serde_json::from_str(&text).map_err(|e| Error::parse(&manifest_path, e))?;
    let found = raw
        .get("format_version")
        .and_then(serde_json::Value::as_u64)
        .ok_or_else(|| Error::parse(&manifest_path, "missing format_version"))?;
    if found != u64::from(FORMAT_VERSION) {
        return Err(Error::UnsupportedVersion {
            found: u32::try_from(found).unwrap_or(u32::MAX),
            expected: FORMAT_VERSION,
        });
    }
    let manifest: Manifest = serde_json::from_value(raw).map_err(|e| Error::parse(&manifest_path, e))?;

    for (rel, want) in &manifest.checksums {
        let path = dirs.root.join(rel);
        if !path.exists() {
            return Err(Error::Checksum { path });
        }
        if &sha256_file(&path)? != want {
            return Err(Error::Checksum { path });
        }
    }

    let records_path = seg.join(RECORDS);
    let text = fs::read_to_string(&records_path).map_err(|e| Error::io(&records_path, e))?;
    let mut records = Vec::with_capacity(manifest.record_count);
    for (i, line) in text.lines().enumerate() {
        let r: VocalisationRecord = serde_json::from_str(line)
            .map_err(|e| Error::parse(&records_path, format!("line {}: {e}", i + 1)))?;
        if let Some(s) = &r.segmentation {
            s.check_invariants(&manifest.parameters).map_err(|e| {
                Error::parse(&records_path, format!("line {}: {e}", i + 1))
            })?;
        }
        records.push(r);
    }
    if records.len() != manifest.record_count {
        return Err(Error::parse(
            &records_path,
            format!("{} records, manifest says {}", records.len(), manifest.record_count),
        ));
    }
    let embeddings = read_embeddings(dirs)?;
    Ok(Dataset {
        dirs: dirs.clone(),
        manifest,
        records,
        embeddings,
    })
}
