//! Command-line driver for the vocalis pipeline.
//!
//! Every subcommand loads the project, validates its inputs and the pipeline
//! stage before writing anything, then saves a new dataset snapshot.

use std::net::{IpAddr, SocketAddr};
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};
use vocalis::cluster::cluster_ids;
use vocalis::dataset::{export_training_set, RecordStatus};
use vocalis::embed::{embed_dataset, EmbedOptions, Method};
use vocalis::parallel::resolve_threads;
use vocalis::similarity::{cross_year_reid, pairwise_similarity, song_vectors, write_report};
use vocalis::synth::write_sample_corpus;
use vocalis::{build_dataset, ingest, init_project, load, segment_all, Error, ErrorKind, Parameters, ProjectDirs, Stage};
use vocalis_bench::{suite, ThroughputConfig};

#[derive(Debug, Parser)]
#[command(name = "vocalis", version, about = "Segment, embed, cluster and review vocalisation datasets")]
pub struct Cli {
    /// Project root.
    #[arg(long, global = true, default_value = ".")]
    pub project: PathBuf,
    /// Parameters file (JSON, or TOML by extension). Defaults to the
    /// parameters stored with the dataset, else built-in defaults.
    #[arg(long, global = true)]
    pub params: Option<PathBuf>,
    /// Worker threads; falls back to VOCALIS_THREADS, then all cores.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Work on whole songs instead of units.
    #[arg(long, global = true)]
    pub song_level: bool,
    /// Print one JSON object instead of text.
    #[arg(long, global = true)]
    pub json: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Create the project layout.
    Init {
        /// Also write the 20-song synthetic sample into data/raw.
        #[arg(long)]
        sample: bool,
    },
    /// Read WAV files and their JSON sidecars into a dataset.
    Ingest,
    /// Compute spectrograms and segment every song into units.
    Segment,
    /// Embed units (or songs) per individual and globally.
    Embed(EmbedArgs),
    /// Cluster embeddings into automatic labels.
    Cluster {
        /// One clustering over all individuals.
        #[arg(long)]
        global: bool,
    },
    /// Serve the label review application.
    App {
        #[arg(long, default_value = "127.0.0.1")]
        host: IpAddr,
        #[arg(long, default_value_t = 8050)]
        port: u16,
    },
    /// Fold reviewed labels in and write the train/test tree.
    Export {
        /// Fraction of each class placed in train.
        #[arg(long, default_value_t = 0.8)]
        split: f64,
    },
    /// Cross-year similarity and re-identification report.
    Similarity,
    /// Synthetic segmentation throughput per worker count.
    Bench(BenchArgs),
}

#[derive(Debug, Args)]
pub struct EmbedArgs {
    #[arg(long, default_value = "pca")]
    pub method: Method,
    /// Output dimension; defaults to the parameters' `embed_dim`.
    #[arg(long)]
    pub dim: Option<usize>,
    #[arg(long, default_value_t = 15)]
    pub neighbors: usize,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[arg(long, default_value_t = 20_000)]
    pub units: usize,
    /// Comma-separated worker counts; defaults to powers of two up to `--threads`.
    #[arg(long, value_delimiter = ',')]
    pub workers: Vec<usize>,
    /// Also report a linear extrapolation, as `UNITS:WORKERS`.
    #[arg(long)]
    pub extrapolate: Option<String>,
}

/// Result of a subcommand: text lines and the equivalent JSON.
#[derive(Debug)]
pub struct Outcome {
    pub lines: Vec<String>,
    pub json: Value,
}

pub fn exit_code(e: &Error) -> i32 {
    match e.kind() {
        ErrorKind::Validation => 1,
        ErrorKind::Io => 2,
    }
}

fn parameters(cli: &Cli, dirs: &ProjectDirs) -> vocalis::Result<Parameters> {
    let mut p = match &cli.params {
        Some(path) => Parameters::from_file(path)?,
        None => match load(dirs) {
            Ok(ds) => ds.manifest.parameters,
            Err(_) => Parameters::default(),
        },
    };
    if cli.song_level {
        p.song_level = true;
    }
    p.ensure_valid()?;
    Ok(p)
}

fn loaded(dirs: &ProjectDirs, stage: Stage) -> vocalis::Result<vocalis::Dataset> {
    if !dirs.dataset_dir().join("manifest.json").is_file() {
        return Err(Error::State(format!(
            "no dataset in {}; run `ingest` first",
            dirs.root.display()
        )));
    }
    let ds = load(dirs)?;
    ds.require(stage)?;
    Ok(ds)
}

fn runtime() -> vocalis::Result<tokio::runtime::Runtime> {
    tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .map_err(|e| Error::Io {
            path: PathBuf::from("<runtime>"),
            source: e,
        })
}

pub fn run(cli: &Cli) -> vocalis::Result<Outcome> {
    let dirs = ProjectDirs::at(&cli.project);
    let threads = resolve_threads(cli.threads);
    match &cli.command {
        Command::Init { sample } => {
            let dirs = init_project(&cli.project)?;
            let songs = if *sample { write_sample_corpus(&dirs, cli.seed)?.len() } else { 0 };
            Ok(Outcome {
                lines: vec![format!("initialised {} ({songs} sample songs)", dirs.root.display())],
                json: json!({ "project": dirs.root, "sample_songs": songs }),
            })
        }
        Command::Ingest => {
            let p = parameters(cli, &dirs)?;
            let report = ingest(&dirs, threads)?;
            let mut ds = build_dataset(&dirs, &report.catalogue, &p, threads)?;
            ds.save()?;
            let mut lines = vec![format!(
                "ingested {} of {} recordings, {} individuals",
                ds.records.len(),
                report.catalogue.len(),
                ds.manifest.individuals.len()
            )];
            lines.extend(report.missing_sidecars.iter().map(|w| format!("no sidecar: {}", w.display())));
            lines.extend(ds.manifest.failures.iter().map(|f| format!("failed: {}: {}", f.id, f.message)));
            Ok(Outcome {
                lines,
                json: json!({
                    "records": ds.records.len(),
                    "individuals": ds.manifest.individuals,
                    "missing_sidecars": report.missing_sidecars,
                    "failures": ds.manifest.failures,
                    "snapshot_version": ds.manifest.snapshot_version,
                }),
            })
        }
        Command::Segment => {
            let p = parameters(cli, &dirs)?;
            let ds = loaded(&dirs, Stage::Built)?;
            let mut ds = segment_all(&ds, &p, threads)?;
            ds.save()?;
            let units: usize = ds.records.iter().map(|r| r.unit_count()).sum();
            let count = |s: RecordStatus| ds.records.iter().filter(|r| r.status == s).count();
            let (no_units, failed) = (count(RecordStatus::NoUnits), count(RecordStatus::Failed));
            Ok(Outcome {
                lines: vec![format!(
                    "segmented {} songs into {units} units ({no_units} without units, {failed} failed)",
                    ds.records.len()
                )],
                json: json!({
                    "songs": ds.records.len(),
                    "units": units,
                    "no_units": no_units,
                    "failed": failed,
                    "snapshot_version": ds.manifest.snapshot_version,
                }),
            })
        }
        Command::Embed(a) => {
            let p = parameters(cli, &dirs)?;
            let ds = loaded(&dirs, Stage::Segmented)?;
            let opts = EmbedOptions {
                method: a.method,
                dim: a.dim.unwrap_or(p.embed_dim),
                n_neighbors: a.neighbors,
                seed: cli.seed,
            };
            let (mut ds, skipped) = embed_dataset(&ds, &p, &opts, threads)?;
            ds.save()?;
            let set = ds.embeddings.as_ref().expect("embedded");
            let mut lines = vec![format!(
                "embedded {} individuals with {:?} ({} rows in the shared space)",
                set.groups.len(),
                a.method,
                set.global.as_ref().map_or(0, |g| g.len())
            )];
            lines.extend(skipped.iter().map(|i| format!("skipped {i}: fewer than two rows")));
            Ok(Outcome {
                lines,
                json: json!({
                    "method": a.method,
                    "individuals": set.groups.keys().collect::<Vec<_>>(),
                    "skipped": skipped,
                    "snapshot_version": ds.manifest.snapshot_version,
                }),
            })
        }
        Command::Cluster { global } => {
            let p = parameters(cli, &dirs)?;
            let ds = loaded(&dirs, Stage::Embedded)?;
            let (mut ds, groups) = cluster_ids(&ds, &p, *global, threads)?;
            ds.save()?;
            let lines = groups
                .iter()
                .map(|g| {
                    let mut s = format!(
                        "{}: {} clusters, {} of {} rows noise (min size {})",
                        g.individual, g.clusters, g.noise, g.rows, g.min_cluster_size
                    );
                    if let Some(w) = &g.warning {
                        s.push_str(&format!("; {w}"));
                    }
                    s
                })
                .collect();
            Ok(Outcome {
                lines,
                json: json!({ "groups": groups, "snapshot_version": ds.manifest.snapshot_version }),
            })
        }
        Command::App { host, port } => {
            loaded(&dirs, Stage::Clustered)?;
            let state = vocalis_labeld::open(&dirs)?;
            let rt = runtime()?;
            rt.block_on(async {
                let listener = vocalis_labeld::bind(SocketAddr::new(*host, *port)).await?;
                let addr = listener.local_addr().map_err(|e| Error::Io {
                    path: PathBuf::from("<socket>"),
                    source: e,
                })?;
                eprintln!("serving on http://{addr} (Ctrl-C to stop)");
                vocalis_labeld::serve(listener, state, async {
                    let _ = tokio::signal::ctrl_c().await;
                })
                .await
                .map_err(|e| Error::Io {
                    path: PathBuf::from(addr.to_string()),
                    source: e,
                })?;
                Ok(Outcome {
                    lines: vec!["stopped".into()],
                    json: json!({ "address": addr.to_string(), "stopped": true }),
                })
            })
        }
        Command::Export { split } => {
            if !(*split > 0.0 && *split < 1.0) {
                return Err(Error::Validation(format!("--split must be in (0, 1), got {split}")));
            }
            let ds = loaded(&dirs, Stage::Clustered)?;
            let version = vocalis_labeld::Review::open(&dirs)?.export()?;
            let ds = if version == ds.manifest.snapshot_version { ds } else { load(&dirs)? };
            let summary = export_training_set(&ds, *split, cli.seed)?;
            Ok(Outcome {
                lines: vec![format!(
                    "exported {} train and {} test songs in {} classes to {}",
                    summary.train.len(),
                    summary.test.len(),
                    summary.classes.len(),
                    dirs.output.display()
                )],
                json: json!({ "summary": summary, "snapshot_version": version }),
            })
        }
        Command::Similarity => {
            let ds = loaded(&dirs, Stage::Embedded)?;
            let vectors = song_vectors(&ds)?;
            let m = pairwise_similarity(&vectors.songs, threads)?;
            let report = cross_year_reid(&m, &vectors.feature_source)?;
            let files = write_report(&report, &dirs.output.join("similarity"))?;
            let mut lines = vec![format!(
                "re-identification accuracy {:.1}% over {} trials (chance {:.2}% by song type, {:.2}% by individual)",
                report.accuracy * 100.0,
                report.trials.len(),
                report.chance_level * 100.0,
                report.chance_level_individuals * 100.0
            )];
            lines.extend(report.partition_summary.iter().map(|s| {
                format!(
                    "{}: {} pairs, mean {}",
                    s.name,
                    s.pairs,
                    s.mean.map_or("-".into(), |m| format!("{m:.3}"))
                )
            }));
            lines.extend(files.iter().map(|f| format!("wrote {}", f.display())));
            Ok(Outcome {
                lines,
                json: json!({
                    "accuracy": report.accuracy,
                    "trials": report.trials.len(),
                    "chance_level": report.chance_level,
                    "chance_level_individuals": report.chance_level_individuals,
                    "partitions": report.partition_summary,
                    "files": files,
                }),
            })
        }
        Command::Bench(a) => bench(cli, a, threads),
    }
}

fn bench(cli: &Cli, a: &BenchArgs, threads: usize) -> vocalis::Result<Outcome> {
    let p = match &cli.params {
        Some(path) => Parameters::from_file(path)?,
        None => Parameters::default(),
    };
    p.ensure_valid()?;
    let workers = if a.workers.is_empty() {
        let mut w: Vec<usize> = std::iter::successors(Some(1usize), |n| Some(n * 2))
            .take_while(|&n| n < threads)
            .collect();
        w.push(threads);
        w
    } else {
        a.workers.clone()
    };
    if workers.contains(&0) || a.units == 0 {
        return Err(Error::Validation("--units and --workers must be positive".into()));
    }
    let extrapolate = a
        .extrapolate
        .as_deref()
        .map(|s| {
            s.split_once(':')
                .and_then(|(u, w)| Some((u.parse::<usize>().ok()?, w.parse::<usize>().ok()?)))
                .filter(|&(u, w)| u > 0 && w > 0)
                .ok_or_else(|| Error::Validation(format!("--extrapolate expects UNITS:WORKERS, got `{s}`")))
        })
        .transpose()?;
    let report = suite(&ThroughputConfig::new(a.units, cli.seed), &p, &workers)?;
    let mut lines: Vec<String> = report
        .runs
        .iter()
        .map(|r| {
            format!(
                "{:>3} workers: {} units in {:.2} s ({:.0} units/s)",
                r.workers, r.units_found, r.seconds, r.units_per_second
            )
        })
        .collect();
    lines.push(format!(
        "outputs identical across worker counts: {}; speedup {:.2}x",
        report.identical_outputs, report.speedup
    ));
    let extra = extrapolate.map(|(u, w)| {
        let s = report.extrapolate_seconds(u, w);
        lines.push(format!("extrapolated: {u} units on {w} workers ~ {s:.1} s"));
        json!({ "units": u, "workers": w, "seconds": s })
    });
    Ok(Outcome {
        lines,
        json: json!({ "report": report, "extrapolation": extra }),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes_follow_error_kind() {
        assert_eq!(exit_code(&Error::Validation("x".into())), 1);
        assert_eq!(exit_code(&Error::State("x".into())), 1);
        let io = Error::Io {
            path: "p".into(),
            source: std::io::Error::other("x"),
        };
        assert_eq!(exit_code(&io), 2);
    }

    #[test]
    fn flags_parse_globally() {
        let cli = Cli::try_parse_from(["vocalis", "embed", "--method", "neighbor", "--threads", "3", "--song-level"]).unwrap();
        assert_eq!(cli.threads, Some(3));
        assert!(cli.song_level);
        match cli.command {
            Command::Embed(a) => assert_eq!(a.method, Method::Neighbor),
            other => panic!("{other:?}"),
        }
        assert!(Cli::try_parse_from(["vocalis", "bench", "--workers", "1,x"]).is_err());
    }
}
