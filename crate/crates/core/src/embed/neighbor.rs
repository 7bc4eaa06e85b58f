use rand::Rng;

use crate::embed::pca::fit_pca;
use crate::error::{Error, Result};
use crate::synth::rng;

/// Curve `1 / (1 + a d^(2b))` fitted for a minimum distance of 0.1.
const A: f64 = 1.577;
const B: f64 = 0.895;
const NEGATIVE_SAMPLES: usize = 5;
const INIT_SCALE: f64 = 10.0;
const CLIP: f64 = 4.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NeighborOptions {
    pub n_neighbors: usize,
    pub epochs: usize,
    pub seed: u64,
}

impl NeighborOptions {
    pub fn new(n_neighbors: usize, seed: u64) -> Self {
        NeighborOptions {
            n_neighbors,
            epochs: 200,
            seed,
        }
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Exact `k` nearest neighbours of every row (self excluded), nearest
/// first, ties broken by index.
pub fn knn<R: AsRef<[f64]>>(rows: &[R], k: usize) -> Vec<Vec<(usize, f64)>> {
    let n = rows.len();
    (0..n)
        .map(|i| {
            let mut d: Vec<(usize, f64)> = (0..n)
                .filter(|&j| j != i)
                .map(|j| (j, sq_dist(rows[i].as_ref(), rows[j].as_ref()).sqrt()))
                .collect();
            d.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
            d.truncate(k);
            d
        })
        .collect()
}

/// Directed membership weights `exp(-(d - rho) / sigma)`, with `sigma`
/// chosen so each row's weights sum to `log2(k)`.
fn fuzzy_weights(neighbors: &[Vec<(usize, f64)>], k: usize) -> Vec<Vec<(usize, f64)>> {
    let target = (k as f64).log2();
    neighbors
        .iter()
        .map(|nb| {
            let rho = nb.iter().map(|&(_, d)| d).find(|&d| d > 0.0).unwrap_or(0.0);
            let total = |sigma: f64| -> f64 {
                nb.iter()
                    .map(|&(_, d)| (-(d - rho).max(0.0) / sigma).exp())
                    .sum()
            };
            let (mut lo, mut hi, mut sigma) = (0.0f64, f64::INFINITY, 1.0f64);
            for _ in 0..64 {
                let s = total(sigma);
                if (s - target).abs() < 1e-5 {
                    break;
                }
                if s > target {
                    hi = sigma;
                    sigma = (lo + hi) / 2.0;
                } else {
                    lo = sigma;
                    sigma = if hi.is_finite() { (lo + hi) / 2.0 } else { sigma * 2.0 };
                }
            }
            let mean_d = nb.iter().map(|&(_, d)| d).sum::<f64>() / nb.len().max(1) as f64;
            let sigma = sigma.max(1e-3 * mean_d).max(f64::MIN_POSITIVE);
            nb.iter()
                .map(|&(j, d)| (j, (-(d - rho).max(0.0) / sigma).exp()))
                .collect()
        })
        .collect()
}

/// Fuzzy union `w_ij + w_ji - w_ij w_ji` as an edge list `(i, j, w)` with `i < j`.
fn symmetrise(directed: &[Vec<(usize, f64)>]) -> Vec<(usize, usize, f64)> {
    let mut map = std::collections::BTreeMap::new();
    for (i, nb) in directed.iter().enumerate() {
        for &(j, w) in nb {
            let key = (i.min(j), i.max(j));
            let e = map.entry(key).or_insert((0.0f64, 0.0f64));
            if i < j {
                e.0 = w;
            } else {
                e.1 = w;
            }
        }
    }
    map.into_iter()
        .map(|((i, j), (a, b))| (i, j, a + b - a * b))
        .filter(|&(_, _, w)| w > 0.0)
        .collect()
}

fn initial_layout<R: AsRef<[f64]>>(rows: &[R], dim: usize, seed: u64) -> Vec<Vec<f64>> {
    let n = rows.len();
    let d = rows[0].as_ref().len();
    let mut layout = if dim <= n.min(d) {
        fit_pca(rows, dim).map(|p| p.scores).ok()
    } else {
        None
    }
    .unwrap_or_else(|| {
        let mut r = rng(seed ^ 0x1a7e);
        (0..n).map(|_| (0..dim).map(|_| r.random_range(-1.0..1.0)).collect()).collect()
    });
    let max = layout
        .iter()
        .flatten()
        .fold(0f64, |m, v| m.max(v.abs()));
    if max > 0.0 {
        for v in layout.iter_mut().flatten() {
            *v *= INIT_SCALE / max;
        }
    }
    layout
}

/// Nonlinear neighbour-graph embedding: k-NN graph, fuzzy edge weights,
/// then a force-directed layout optimised by seeded stochastic gradient
/// descent with negative sampling. Single-threaded and reproducible.
pub fn embed_neighbor<R: AsRef<[f64]>>(rows: &[R], dim: usize, opts: NeighborOptions) -> Result<Vec<Vec<f64>>> {
    let n = rows.len();
    if opts.n_neighbors == 0 || opts.n_neighbors >= n {
        return Err(Error::Validation(format!(
            "n_neighbors must be in 1..{n}, got {}",
            opts.n_neighbors
        )));
    }
    if dim == 0 {
        return Err(Error::Validation("embedding dimension must be positive".into()));
    }
    let neighbors = knn(rows, opts.n_neighbors);
    let edges = symmetrise(&fuzzy_weights(&neighbors, opts.n_neighbors));
    let mut y = initial_layout(rows, dim, opts.seed);
    if edges.is_empty() {
        return Ok(y);
    }

    let w_max = edges.iter().map(|e| e.2).fold(0f64, f64::max);
    let period: Vec<f64> = edges.iter().map(|e| w_max / e.2).collect();
    let mut next_due = period.clone();
    let mut r = rng(opts.seed);
    let epochs = opts.epochs.max(1);
    let mut delta = vec![0f64; dim];

    for epoch in 0..epochs {
        let alpha = 1.0 - epoch as f64 / epochs as f64;
        let now = (epoch + 1) as f64;
        for (e, &(i, j, _)) in edges.iter().enumerate() {
            if next_due[e] > now {
                continue;
            }
            next_due[e] += period[e];

            let d2 = sq_dist(&y[i], &y[j]);
            let coef = if d2 > 0.0 {
                -2.0 * A * B * d2.powf(B - 1.0) / (1.0 + A * d2.powf(B))
            } else {
                0.0
            };
            for k in 0..dim {
                delta[k] = (coef * (y[i][k] - y[j][k])).clamp(-CLIP, CLIP) * alpha;
            }
            for k in 0..dim {
                y[i][k] += delta[k];
                y[j][k] -= delta[k];
            }

            for _ in 0..NEGATIVE_SAMPLES {
                let other = r.random_range(0..n);
                if other == i {
                    continue;
                }
                let d2 = sq_dist(&y[i], &y[other]);
                if d2 == 0.0 {
                    continue;
                }
                let coef = 2.0 * B / ((0.001 + d2) * (1.0 + A * d2.powf(B)));
                for k in 0..dim {
                    y[i][k] += (coef * (y[i][k] - y[other][k])).clamp(-CLIP, CLIP) * alpha;
                }
            }
        }
    }
    Ok(y)
}
