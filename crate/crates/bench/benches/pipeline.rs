use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;
use vocalis::embed::fit_pca;
use vocalis::signal::{compute_spectrogram, segment_into_units};
use vocalis::synth::{random_song, render, rng, spectral_repertoire, SongShape};
use vocalis::{hdbscan_cluster, Parameters};

fn song_audio(units: usize, seed: u64) -> Vec<f32> {
    let mut r = rng(seed);
    let song = random_song(units, &SongShape::default(), &mut r);
    render(&song, 22_050, 25.0, &mut r).samples
}

fn spectrogram(c: &mut Criterion) {
    let p = Parameters::default();
    let audio = song_audio(10, 1);
    c.bench_function("spectrogram_10_units", |b| {
        b.iter(|| compute_spectrogram(black_box(&audio), &p).unwrap())
    });
    let spec = compute_spectrogram(&audio, &p).unwrap();
    c.bench_function("segment_10_units", |b| b.iter(|| segment_into_units(black_box(&spec), &p)));
}

fn embed_and_cluster(c: &mut Criterion) {
    let mut group = c.benchmark_group("repertoire");
    for songs_per_type in [30usize, 100] {
        let (points, _) = spectral_repertoire(&[songs_per_type; 6], 16, 12, 6.0, &mut rng(2));
        group.bench_with_input(BenchmarkId::new("pca_10", songs_per_type), &points, |b, pts| {
            b.iter(|| fit_pca(black_box(pts), 10).unwrap())
        });
        let reduced = fit_pca(&points, 10).unwrap().scores;
        group.bench_with_input(BenchmarkId::new("hdbscan", songs_per_type), &reduced, |b, pts| {
            b.iter(|| hdbscan_cluster(black_box(pts), 5).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, spectrogram, embed_and_cluster);
criterion_main!(benches);
