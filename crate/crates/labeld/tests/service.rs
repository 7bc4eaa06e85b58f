use std::collections::{BTreeMap, BTreeSet};
use std::net::SocketAddr;
use std::time::Duration;

use serde_json::{json, Value};
use tempfile::TempDir;
use vocalis::cluster::cluster_ids;
use vocalis::embed::{embed_dataset, EmbedOptions};
use vocalis::synth::write_corpus;
use vocalis::{build_dataset, ingest, init_project, load, segment_all, Dataset, LabelSource, Parameters, ProjectDirs};
use vocalis_labeld::{bind, open, serve, EditKind, Journal, LabelEdit, Review, Target};

/// Two birds, three song types each, clustered and saved.
fn project(seed: u64) -> (TempDir, ProjectDirs) {
    let p = Parameters::default();
    let tmp = tempfile::tempdir().unwrap();
    let dirs = init_project(tmp.path()).unwrap();
    write_corpus(&dirs, 2, 3, 10, &[2020, 2021], p.sample_rate_hz, seed).unwrap();
    let cat = ingest(&dirs, 1).unwrap().catalogue;
    let ds = build_dataset(&dirs, &cat, &p, 1).unwrap();
    let ds = segment_all(&ds, &p, 1).unwrap();
    let (ds, _) = embed_dataset(&ds, &p, &EmbedOptions::pca(10), 1).unwrap();
    let (mut ds, _) = cluster_ids(&ds, &p, false, 1).unwrap();
    ds.save().unwrap();
    (tmp, dirs)
}

fn labels(ds: &Dataset) -> BTreeMap<String, Option<i32>> {
    ds.records.iter().map(|r| (r.id().to_string(), r.cluster_label)).collect()
}

fn song_ids(ds: &Dataset) -> Vec<String> {
    ds.records.iter().map(|r| r.id().to_string()).collect()
}

fn relabel(ids: &[&str], label: i32) -> LabelEdit {
    LabelEdit {
        kind: EditKind::Relabel,
        targets: ids.iter().map(|s| Target::Song(s.to_string())).collect(),
        new_label: label,
        editor: "test".into(),
        timestamp: None,
    }
}

/// Independent replay: last write wins per song.
fn oracle(start: &BTreeMap<String, Option<i32>>, ds: &Dataset, edits: &[LabelEdit]) -> BTreeMap<String, Option<i32>> {
    let mut out = start.clone();
    for e in edits {
        let mut hit = Vec::new();
        for t in &e.targets {
            match t {
                Target::Song(id) => hit.push(id.clone()),
                Target::Cluster { individual, label } => hit.extend(
                    ds.records
                        .iter()
                        .filter(|r| &r.meta.individual_id == individual && out[r.id()] == Some(*label))
                        .map(|r| r.id().to_string()),
                ),
            }
        }
        let l = if e.kind == EditKind::MarkNoise { -1 } else { e.new_label };
        for id in hit {
            out.insert(id, Some(l));
        }
    }
    out
}

struct Server {
    base: String,
    stop: Option<tokio::sync::oneshot::Sender<()>>,
    thread: Option<std::thread::JoinHandle<()>>,
}

impl Server {
    fn start(dirs: &ProjectDirs) -> Server {
        let state = open(dirs).unwrap();
        let (tx, rx) = tokio::sync::oneshot::channel::<()>();
        let (addr_tx, addr_rx) = std::sync::mpsc::channel();
        let thread = std::thread::spawn(move || {
            let rt = tokio::runtime::Builder::new_multi_thread().enable_all().build().unwrap();
            rt.block_on(async move {
                let listener = bind("127.0.0.1:0".parse().unwrap()).await.unwrap();
                addr_tx.send(listener.local_addr().unwrap()).unwrap();
                serve(listener, state, async {
                    let _ = rx.await;
                })
                .await
                .unwrap();
            });
        });
        let addr: SocketAddr = addr_rx.recv_timeout(Duration::from_secs(10)).unwrap();
        Server {
            base: format!("http://{addr}"),
            stop: Some(tx),
            thread: Some(thread),
        }
    }

    fn agent() -> ureq::Agent {
        ureq::Agent::config_builder().http_status_as_error(false).build().into()
    }

    fn get(&self, path: &str) -> (u16, Value) {
        let mut resp = Self::agent().get(&format!("{}{path}", self.base)).call().unwrap();
        let status = resp.status().as_u16();
        (status, serde_json::from_str(&resp.body_mut().read_to_string().unwrap()).unwrap())
    }

    fn post(&self, path: &str, body: &Value) -> (u16, Value) {
        let mut resp = Self::agent()
            .post(&format!("{}{path}", self.base))
            .header("content-type", "application/json")
            .send(body.to_string())
            .unwrap();
        let status = resp.status().as_u16();
        (status, serde_json::from_str(&resp.body_mut().read_to_string().unwrap()).unwrap())
    }
}

impl Drop for Server {
    fn drop(&mut self) {
        if let Some(tx) = self.stop.take() {
            let _ = tx.send(());
        }
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}

#[test]
fn health_reports_version() {
    let (_tmp, dirs) = project(1);
    let s = Server::start(&dirs);
    let (status, body) = s.get("/api/health");
    assert_eq!(status, 200);
    assert_eq!(body["version"], env!("CARGO_PKG_VERSION"));
}

#[test]
fn busy_port_is_a_clean_error() {
    let rt = tokio::runtime::Builder::new_current_thread().enable_all().build().unwrap();
    rt.block_on(async {
        let first = bind("127.0.0.1:0".parse().unwrap()).await.unwrap();
        let addr = first.local_addr().unwrap();
        let err = bind(addr).await.unwrap_err();
        assert!(err.to_string().contains(&addr.port().to_string()), "{err}");
        assert!(err.to_string().contains("in use"), "{err}");
    });
}

#[test]
fn listing_endpoints_agree_with_dataset() {
    let (_tmp, dirs) = project(2);
    let ds = load(&dirs).unwrap();
    let s = Server::start(&dirs);
    let (status, inds) = s.get("/api/individuals");
    assert_eq!(status, 200);
    let inds = inds.as_array().unwrap();
    assert_eq!(inds.len(), 2);
    let total: u64 = inds.iter().map(|i| i["song_count"].as_u64().unwrap()).sum();
    assert_eq!(total as usize, ds.records.len());

    let id = inds[0]["id"].as_str().unwrap();
    let (status, clusters) = s.get(&format!("/api/individuals/{id}/clusters"));
    assert_eq!(status, 200);
    let clusters = clusters.as_array().unwrap();
    let sizes: u64 = clusters.iter().map(|c| c["size"].as_u64().unwrap()).sum();
    assert_eq!(sizes, inds[0]["song_count"].as_u64().unwrap());
    for c in clusters {
        let ex = c["exemplar_song_ids"].as_array().unwrap();
        assert!(!ex.is_empty() && ex.len() <= 5);
    }
    let (status, body) = s.get("/api/individuals/nobody/clusters");
    assert_eq!(status, 404);
    assert_eq!(body["error"]["code"], "not_found");
}

#[test]
fn pagination_walks_every_item_once() {
    let (_tmp, dirs) = project(3);
    let ds = load(&dirs).unwrap();
    let s = Server::start(&dirs);
    let r = &ds.records[0];
    let (ind, label) = (r.meta.individual_id.clone(), r.cluster_label.unwrap());
    let expected: Vec<String> = ds
        .records
        .iter()
        .filter(|x| x.meta.individual_id == ind && x.cluster_label == Some(label))
        .map(|x| x.id().to_string())
        .collect();
    let mut seen = Vec::new();
    let mut page = 1;
    loop {
        let (status, body) = s.get(&format!("/api/clusters/{ind}/{label}/items?page={page}&page_size=2"));
        assert_eq!(status, 200);
        assert_eq!(body["total"].as_u64().unwrap() as usize, expected.len());
        let items = body["items"].as_array().unwrap();
        if items.is_empty() {
            break;
        }
        assert!(items.len() <= 2);
        for it in items {
            assert!(it["unit_count"].as_u64().unwrap() > 0);
            seen.push(it["song_id"].as_str().unwrap().to_string());
        }
        page += 1;
    }
    assert_eq!(seen, expected);
    let (_, body) = s.get(&format!("/api/clusters/{ind}/{label}/items"));
    assert_eq!(body["page_size"], 50);
    for bad in ["page=0", "page_size=501", "page=x"] {
        let (status, body) = s.get(&format!("/api/clusters/{ind}/{label}/items?{bad}"));
        assert_eq!(status, 400, "{bad}");
        assert!(body["error"]["message"].is_string());
    }
}

#[test]
fn spectrogram_endpoint_serves_png() {
    let (_tmp, dirs) = project(4);
    let ds = load(&dirs).unwrap();
    let s = Server::start(&dirs);
    let id = ds.records[0].id();
    let mut resp = Server::agent()
        .get(&format!("{}/api/spectrogram/{id}.png", s.base))
        .call()
        .unwrap();
    assert_eq!(resp.status().as_u16(), 200);
    assert_eq!(resp.headers()["content-type"], "image/png");
    let bytes = resp.body_mut().read_to_vec().unwrap();
    assert_eq!(&bytes[..8], b"\x89PNG\r\n\x1a\n");
    let (status, _) = s.get("/api/spectrogram/missing.png");
    assert_eq!(status, 404);
}

#[test]
fn relabel_over_http_is_journalled_and_visible() {
    let (_tmp, dirs) = project(5);
    let ds = load(&dirs).unwrap();
    let ids = song_ids(&ds);
    let s = Server::start(&dirs);
    let (status, body) = s.post(
        "/api/edits",
        &json!({"kind": "relabel", "targets": [ids[0], ids[1], ids[2]], "new_label": 5, "editor": "ana"}),
    );
    assert_eq!(status, 200, "{body}");
    assert_eq!(body, json!({"applied": true, "journal_index": 0}));
    let (_, body) = s.post("/api/export", &json!({}));
    let version = body["snapshot_version"].as_u64().unwrap();
    drop(s);
    let back = load(&dirs).unwrap();
    assert_eq!(back.manifest.snapshot_version, version);
    for id in &ids[..3] {
        let r = back.record(id).unwrap();
        assert_eq!(r.cluster_label, Some(5));
        assert_eq!(r.label_source, LabelSource::Human);
        assert!(r.unit_labels.iter().all(|&l| l == 5));
    }
    let (_, entries) = Journal::open(&dirs.journal_path()).unwrap();
    assert_eq!(entries.len(), 1);
    assert!(entries[0].timestamp.is_some());
}

#[test]
fn merge_reduces_distinct_labels_by_one() {
    let (_tmp, dirs) = project(6);
    let mut review = Review::open(&dirs).unwrap();
    let ind = review.dataset().records[0].meta.individual_id.clone();
    let distinct = |ds: &Dataset| -> BTreeSet<i32> {
        ds.records
            .iter()
            .filter(|r| r.meta.individual_id == ind)
            .filter_map(|r| r.cluster_label)
            .filter(|&l| l >= 0)
            .collect()
    };
    let before = distinct(review.dataset());
    assert!(before.len() >= 2, "{before:?}");
    let mut it = before.iter();
    let (into, from) = (*it.next().unwrap(), *it.next().unwrap());
    review
        .apply(LabelEdit {
            kind: EditKind::MergeClusters,
            targets: vec![Target::Cluster {
                individual: ind.clone(),
                label: from,
            }],
            new_label: into,
            editor: "test".into(),
            timestamp: None,
        })
        .unwrap();
    assert_eq!(distinct(review.dataset()).len(), before.len() - 1);
}

#[test]
fn unknown_target_is_404_and_journal_untouched() {
    let (_tmp, dirs) = project(7);
    let s = Server::start(&dirs);
    let (status, body) = s.post(
        "/api/edits",
        &json!({"kind": "relabel", "targets": ["no-such-song"], "new_label": 1, "editor": "ana"}),
    );
    assert_eq!(status, 404);
    assert_eq!(body["error"]["code"], "not_found");
    let (status, body) = s.post("/api/edits", &json!({"kind": "relabel"}));
    assert_eq!(status, 400);
    assert!(body["error"]["message"].is_string());
    drop(s);
    let (j, _) = Journal::open(&dirs.journal_path()).unwrap();
    assert!(j.is_empty());
}

#[test]
fn journal_replays_after_restart() {
    let (_tmp, dirs) = project(8);
    let ds = load(&dirs).unwrap();
    let start = labels(&ds);
    let ids = song_ids(&ds);
    let edits = vec![
        relabel(&[&ids[0], &ids[1]], 7),
        relabel(&[&ids[1]], 2),
        LabelEdit {
            kind: EditKind::MarkNoise,
            targets: vec![Target::Song(ids[3].clone())],
            new_label: -1,
            editor: "test".into(),
            timestamp: None,
        },
    ];
    {
        let mut review = Review::open(&dirs).unwrap();
        for e in &edits {
            review.apply(e.clone()).unwrap();
        }
        // dropped without export
    }
    let review = Review::open(&dirs).unwrap();
    assert_eq!(review.journal_len(), 3);
    assert_eq!(labels(review.dataset()), oracle(&start, &ds, &edits));
}

#[test]
fn edit_written_before_crash_is_recovered() {
    let (_tmp, dirs) = project(9);
    let ds = load(&dirs).unwrap();
    let ids = song_ids(&ds);
    let (mut journal, _) = Journal::open(&dirs.journal_path()).unwrap();
    let mut e = relabel(&[&ids[4]], 5);
    e.timestamp = Some("2024-05-01T10:00:00.000Z".into());
    journal.append(&e).unwrap();
    drop(journal);
    let review = Review::open(&dirs).unwrap();
    assert_eq!(review.dataset().record(&ids[4]).unwrap().cluster_label, Some(5));
}

#[test]
fn export_after_ten_edits_matches_replay() {
    let (_tmp, dirs) = project(10);
    let ds = load(&dirs).unwrap();
    let start = labels(&ds);
    let ids = song_ids(&ds);
    let ind = ds.records[0].meta.individual_id.clone();
    let mut edits = Vec::new();
    for k in 0..9 {
        let a = &ids[(k * 5) % ids.len()];
        let b = &ids[(k * 7 + 3) % ids.len()];
        edits.push(relabel(&[a, b], (k % 4) as i32));
    }
    edits.push(LabelEdit {
        kind: EditKind::MarkNoise,
        targets: vec![Target::Cluster { individual: ind, label: 0 }],
        new_label: -1,
        editor: "test".into(),
        timestamp: None,
    });
    let s = Server::start(&dirs);
    for (i, e) in edits.iter().enumerate() {
        let (status, body) = s.post("/api/edits", &serde_json::to_value(e).unwrap());
        assert_eq!(status, 200, "{body}");
        assert_eq!(body["journal_index"], i);
    }
    let (status, _) = s.post("/api/export", &json!({}));
    assert_eq!(status, 200);
    drop(s);
    let back = load(&dirs).unwrap();
    assert_eq!(labels(&back), oracle(&start, &ds, &edits));
    assert_eq!(back.manifest.journal_compacted, 10);
    // compacted entries are not replayed a second time
    let review = Review::open(&dirs).unwrap();
    assert_eq!(labels(review.dataset()), labels(&back));
}

#[test]
fn export_is_idempotent() {
    let (_tmp, dirs) = project(11);
    let ids = song_ids(&load(&dirs).unwrap());
    let mut review = Review::open(&dirs).unwrap();
    review.apply(relabel(&[&ids[0]], 3)).unwrap();
    let v1 = review.export().unwrap();
    let v2 = review.export().unwrap();
    assert_eq!(v1, v2);
    let after = load(&dirs).unwrap();
    assert_eq!(after.manifest.snapshot_version, v1);
}

#[test]
fn export_without_edits_keeps_labels() {
    let (_tmp, dirs) = project(12);
    let before = load(&dirs).unwrap();
    let mut review = Review::open(&dirs).unwrap();
    let v = review.export().unwrap();
    assert_eq!(v, before.manifest.snapshot_version);
    assert_eq!(labels(&load(&dirs).unwrap()), labels(&before));
}
