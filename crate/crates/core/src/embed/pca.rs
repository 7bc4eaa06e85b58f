use nalgebra::{DMatrix, SymmetricEigen};
use rand::Rng;

use crate::error::{Error, Result};
use crate::synth::rng;

/// Above this many rows and columns the dense eigensolver is replaced by
/// seeded subspace iteration.
const DENSE_LIMIT: usize = 1500;
const SUBSPACE_OVERSAMPLE: usize = 10;
const SUBSPACE_ITERATIONS: usize = 8;

#[derive(Debug, Clone, PartialEq)]
pub struct Pca {
    pub mean: Vec<f64>,
    /// `dim` orthonormal directions, each of the input dimension.
    pub components: Vec<Vec<f64>>,
    /// Covariance eigenvalues (divisor `n - 1`), descending.
    pub eigenvalues: Vec<f64>,
    /// Trace of the covariance matrix.
    pub total_variance: f64,
    /// `n x dim` projections of the centred rows.
    pub scores: Vec<Vec<f64>>,
}

impl Pca {
    pub fn explained_variance_ratio(&self) -> f64 {
        if self.total_variance == 0.0 {
            1.0
        } else {
            self.eigenvalues.iter().sum::<f64>() / self.total_variance
        }
    }

    pub fn reconstruct(&self, i: usize) -> Vec<f64> {
        let mut out = self.mean.clone();
        for (s, c) in self.scores[i].iter().zip(&self.components) {
            for (o, v) in out.iter_mut().zip(c) {
                *o += s * v;
            }
        }
        out
    }
}

/// Principal component analysis of `rows` onto `dim` directions.
///
/// Components are sorted by descending eigenvalue; each is signed so its
/// largest-magnitude loading (first one on ties) is positive.
pub fn fit_pca<R: AsRef<[f64]>>(rows: &[R], dim: usize) -> Result<Pca> {
    let n = rows.len();
    if n < 2 {
        return Err(Error::InsufficientData(format!("PCA needs at least 2 rows, got {n}")));
    }
    let d = rows[0].as_ref().len();
    if rows.iter().any(|r| r.as_ref().len() != d) {
        return Err(Error::Range("PCA rows differ in length".into()));
    }
    if dim == 0 || dim > n.min(d) {
        return Err(Error::Validation(format!(
            "embedding dimension {dim} must be in 1..={} for {n} rows of length {d}",
            n.min(d)
        )));
    }

    let mut mean = vec![0f64; d];
    for r in rows {
        for (m, v) in mean.iter_mut().zip(r.as_ref()) {
            *m += v;
        }
    }
    for m in &mut mean {
        *m /= n as f64;
    }
    let x = DMatrix::from_fn(n, d, |i, j| rows[i].as_ref()[j] - mean[j]);
    let denom = (n - 1) as f64;
    let total_variance = x.iter().map(|v| v * v).sum::<f64>() / denom;

    let (eigenvalues, mut components) = if n.min(d) <= DENSE_LIMIT {
        if d <= n {
            covariance_eigen(&x, dim, denom)
        } else {
            gram_eigen(&x, dim, denom)
        }
    } else {
        subspace_eigen(&x, dim, denom)
    };
    complete_basis(&mut components, dim, d);
    for c in &mut components {
        fix_sign(c);
    }

    let scores = (0..n)
        .map(|i| {
            components
                .iter()
                .map(|c| x.row(i).iter().zip(c).map(|(a, b)| a * b).sum())
                .collect()
        })
        .collect();
    Ok(Pca {
        mean,
        components,
        eigenvalues,
        total_variance,
        scores,
    })
}

fn sorted_top(eigen: &SymmetricEigen<f64, nalgebra::Dyn>, dim: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..eigen.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eigen.eigenvalues[b].total_cmp(&eigen.eigenvalues[a]).then(a.cmp(&b)));
    order.truncate(dim);
    order
}

fn covariance_eigen(x: &DMatrix<f64>, dim: usize, denom: f64) -> (Vec<f64>, Vec<Vec<f64>>) {
    let cov = (x.transpose() * x) / denom;
    let eigen = SymmetricEigen::new(cov);
    let order = sorted_top(&eigen, dim);
    let values = order.iter().map(|&k| eigen.eigenvalues[k].max(0.0)).collect();
    let vectors = order
        .iter()
        .map(|&k| eigen.eigenvectors.column(k).iter().copied().collect())
        .collect();
    (values, vectors)
}

/// Eigenvectors of `X^T X` recovered from those of the smaller `X X^T`.
fn gram_eigen(x: &DMatrix<f64>, dim: usize, denom: f64) -> (Vec<f64>, Vec<Vec<f64>>) {
    let gram = (x * x.transpose()) / denom;
    let eigen = SymmetricEigen::new(gram);
    let order = sorted_top(&eigen, dim);
    let largest = order.first().map_or(0.0, |&k| eigen.eigenvalues[k]);
    let mut values = Vec::with_capacity(dim);
    let mut vectors = Vec::with_capacity(dim);
    for &k in &order {
        let lambda = eigen.eigenvalues[k].max(0.0);
        if lambda <= largest * 1e-12 || lambda == 0.0 {
            break;
        }
        let u = eigen.eigenvectors.column(k);
        let v = x.transpose() * u;
        let norm = v.norm();
        values.push(lambda);
        vectors.push(v.iter().map(|a| a / norm).collect());
    }
    values.resize(dim, 0.0);
    (values, vectors)
}

/// Seeded block power iteration followed by a Rayleigh-Ritz step.
fn subspace_eigen(x: &DMatrix<f64>, dim: usize, denom: f64) -> (Vec<f64>, Vec<Vec<f64>>) {
    let d = x.ncols();
    let k = (dim + SUBSPACE_OVERSAMPLE).min(d);
    let mut r = rng(0x5ca1ab1e);
    let mut q = DMatrix::from_fn(d, k, |_, _| r.random_range(-1.0..1.0));
    q = q.qr().q();
    for _ in 0..SUBSPACE_ITERATIONS {
        let y = x.transpose() * (x * &q);
        q = y.qr().q();
    }
    let b = x * &q;
    let small = (b.transpose() * &b) / denom;
    let eigen = SymmetricEigen::new(small);
    let order = sorted_top(&eigen, dim);
    let values = order.iter().map(|&j| eigen.eigenvalues[j].max(0.0)).collect();
    let vectors = order
        .iter()
        .map(|&j| (&q * eigen.eigenvectors.column(j)).iter().copied().collect())
        .collect();
    (values, vectors)
}

/// Extends `basis` to `dim` orthonormal vectors of length `d` with
/// Gram-Schmidt over the standard basis. The added directions carry zero
/// variance.
fn complete_basis(basis: &mut Vec<Vec<f64>>, dim: usize, d: usize) {
    let mut j = 0;
    while basis.len() < dim && j < d {
        let mut v = vec![0f64; d];
        v[j] = 1.0;
        for _ in 0..2 {
            for b in basis.iter() {
                let dot: f64 = v.iter().zip(b).map(|(a, c)| a * c).sum();
                for (x, c) in v.iter_mut().zip(b) {
                    *x -= dot * c;
                }
            }
        }
        let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        if norm > 1e-6 {
            basis.push(v.into_iter().map(|a| a / norm).collect());
        }
        j += 1;
    }
}

fn fix_sign(c: &mut [f64]) {
    let mut best = 0;
    for (i, v) in c.iter().enumerate() {
        if v.abs() > c[best].abs() {
            best = i;
        }
    }
    if c.get(best).is_some_and(|&v| v < 0.0) {
        for v in c.iter_mut() {
            *v = -*v;
        }
    }
}
