//! Density clustering against a brute-force reference built from connected
//! components of the full mutual-reachability graph.

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use vocalis::cluster::{adjusted_rand_index, hdbscan, hdbscan_cluster, HdbscanOptions};
use vocalis::embed::fit_pca;
use vocalis::synth::{rng, spectral_repertoire};

mod oracles;
use oracles::hdbscan::reference_labels;

fn blobs(seed: u64, n: usize, dim: usize) -> Vec<Vec<f64>> {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    let k = r.random_range(1..=3);
    let centres: Vec<Vec<f64>> = (0..k)
        .map(|_| (0..dim).map(|_| r.random_range(-10.0..10.0)).collect())
        .collect();
    let spread = r.random_range(0.3..3.0);
    let noise = Normal::new(0.0, spread).unwrap();
    (0..n)
        .map(|_| {
            let c = &centres[r.random_range(0..k)];
            c.iter().map(|&x| x + noise.sample(&mut r)).collect()
        })
        .collect()
}

#[test]
fn matches_reference_on_random_small_sets() {
    let mut checked = 0;
    for seed in 0..300u64 {
        let mut r = ChaCha8Rng::seed_from_u64(seed ^ 0xabc);
        let n = r.random_range(6..=30);
        let m = r.random_range(3..=6).min(n);
        let dim = r.random_range(1..=3);
        let pts = blobs(seed, n, dim);
        for allow in [false, true] {
            let got = hdbscan(
                &pts,
                HdbscanOptions {
                    min_cluster_size: m,
                    allow_single_cluster: allow,
                },
            )
            .unwrap();
            if let Some(want) = reference_labels(&pts, m, allow) {
                assert_eq!(got.labels, want, "seed {seed} n {n} m {m} allow {allow}");
                checked += 1;
            }
        }
    }
    assert!(checked >= 550, "only {checked} cases small enough to enumerate");
}

#[test]
fn uniform_cube_is_all_noise() {
    let mut r = ChaCha8Rng::seed_from_u64(30);
    let pts: Vec<Vec<f64>> = (0..30)
        .map(|_| (0..3).map(|_| r.random_range(0.0..1.0e6)).collect())
        .collect();
    let got = hdbscan_cluster(&pts, 15).unwrap();
    assert_eq!(Some(got.labels.clone()), reference_labels(&pts, 15, false));
    assert_eq!(got.noise_count(), 30);
}

#[test]
fn two_far_blobs_recovered_exactly() {
    let mut r = ChaCha8Rng::seed_from_u64(7);
    let noise = Normal::new(0.0, 0.1).unwrap();
    let mut pts = Vec::new();
    let mut truth = Vec::new();
    for (label, centre) in [(0, 0.0), (1, 100.0)] {
        for _ in 0..50 {
            pts.push(vec![centre + noise.sample(&mut r), noise.sample(&mut r)]);
            truth.push(label);
        }
    }
    let got = hdbscan_cluster(&pts, 5).unwrap();
    assert_eq!(adjusted_rand_index(&got.labels, &truth), 1.0);
}

#[test]
fn memberships_are_probabilities() {
    let pts = blobs(11, 120, 2);
    let got = hdbscan_cluster(&pts, 5).unwrap();
    for (l, s) in got.labels.iter().zip(&got.membership_strength) {
        assert!((0.0..=1.0).contains(s));
        assert_eq!(*l < 0, *s == 0.0);
    }
}

fn suite(seed: u64) -> Vec<Vec<f64>> {
    blobs(seed, 60, 2)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn labels_are_contiguous_and_large(seed in 0u64..10_000, m in 2usize..10) {
        let got = hdbscan_cluster(&suite(seed), m).unwrap();
        let k = got.cluster_count();
        for l in 0..k as i32 {
            let size = got.labels.iter().filter(|&&x| x == l).count();
            prop_assert!(size >= m);
        }
        prop_assert!(got.labels.iter().all(|&l| l >= -1 && l < k as i32));
    }

    #[test]
    fn permutation_invariant(seed in 0u64..10_000, shift in 1usize..59) {
        let pts = suite(seed);
        let base = hdbscan_cluster(&pts, 5).unwrap().labels;
        let order: Vec<usize> = (0..pts.len()).map(|i| (i * 7 + shift) % pts.len()).collect();
        let shuffled: Vec<Vec<f64>> = order.iter().map(|&i| pts[i].clone()).collect();
        let got = hdbscan_cluster(&shuffled, 5).unwrap().labels;
        let base_reordered: Vec<i32> = order.iter().map(|&i| base[i]).collect();
        prop_assert_eq!(adjusted_rand_index(&got, &base_reordered), 1.0);
    }

    #[test]
    fn scale_invariant(seed in 0u64..10_000, c in 0.01f64..100.0) {
        let pts = suite(seed);
        let scaled: Vec<Vec<f64>> = pts.iter().map(|p| p.iter().map(|v| v * c).collect()).collect();
        let a = hdbscan_cluster(&pts, 5).unwrap().labels;
        let b = hdbscan_cluster(&scaled, 5).unwrap().labels;
        prop_assert_eq!(adjusted_rand_index(&a, &b), 1.0);
    }

    #[test]
    fn noise_non_decreasing_in_min_cluster_size(seed in 0u64..10_000) {
        let mut r = rng(seed);
        let types = r.random_range(3..=6);
        let per: Vec<usize> = (0..types).map(|_| r.random_range(30..=60)).collect();
        let (rows, _) = spectral_repertoire(&per, 16, 12, 6.0, &mut r);
        let pts = fit_pca(&rows, 10).unwrap().scores;
        let noise: Vec<usize> = [2, 5, 10, 20, 30]
            .iter()
            .map(|&m| hdbscan_cluster(&pts, m).unwrap().noise_count())
            .collect();
        prop_assert!(noise.windows(2).all(|w| w[0] <= w[1]), "{:?}", noise);
    }
}
