//! Initialization pipeline: pairwise window affinities, spectral clustering
//! on the normalized Laplacian (Jacobi eigensolver + k-means), cluster-mean
//! pure states, and the centroid latent path.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{DwbError, Result};
use crate::ot::{QuantileVector, SimplexWeight, WindowedSeries};

/// Symmetric matrix of pairwise squared Wasserstein distances between
/// windows.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AffinityMatrix {
    values: Vec<Vec<f64>>,
}

impl AffinityMatrix {
    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i][j]
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.values
    }

    /// Similarity kernel exp(-gamma * A), unit diagonal.
    pub fn similarity(&self, gamma: f64) -> Vec<Vec<f64>> {
        self.values
            .iter()
            .map(|row| row.iter().map(|a| (-gamma * a).exp()).collect())
            .collect()
    }
}

/// A[i,j] = (1/n) ||y'_i - y'_j||^2, the squared W2 distance between the
/// empirical window distributions.
pub fn window_affinity(y: &WindowedSeries) -> AffinityMatrix {
    let n = y.window_size() as f64;
    let count = y.num_windows();
    let mut values = vec![vec![0.0; count]; count];
    for i in 0..count {
        for j in (i + 1)..count {
            let d: f64 = y
                .column(i)
                .iter()
                .zip(y.column(j))
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                / n;
            values[i][j] = d;
            values[j][i] = d;
        }
    }
    AffinityMatrix { values }
}

/// Eigendecomposition of a symmetric matrix by cyclic Jacobi rotations.
///
/// Returns (eigenvalues, eigenvectors as columns), unsorted. Off-diagonal
/// mass is annihilated sweep by sweep until it falls below a scaled epsilon.
pub fn jacobi_eigen(matrix: &[Vec<f64>]) -> (Vec<f64>, Vec<Vec<f64>>) {
    let n = matrix.len();
    let mut a: Vec<Vec<f64>> = matrix.to_vec();
    let mut v = vec![vec![0.0; n]; n];
    for (i, row) in v.iter_mut().enumerate() {
        row[i] = 1.0;
    }
    if n <= 1 {
        return (a.iter().enumerate().map(|(i, r)| r[i]).collect(), v);
    }

    let scale: f64 = matrix
        .iter()
        .flat_map(|r| r.iter())
        .map(|x| x * x)
        .sum::<f64>()
        .sqrt()
        .max(f64::MIN_POSITIVE);

    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|p| ((p + 1)..n).map(move |q| (p, q)))
            .map(|(p, q)| a[p][q] * a[p][q])
            .sum::<f64>()
            .sqrt();
        if off <= 1e-14 * scale {
            break;
        }
        for p in 0..n - 1 {
            for q in (p + 1)..n {
                if a[p][q].abs() <= 1e-300 {
                    continue;
                }
                let theta = 0.5 * (a[q][q] - a[p][p]) / a[p][q];
                let t = if theta.abs() > 1e154 {
                    0.5 / theta
                } else {
                    let s = theta.signum();
                    s / (theta.abs() + (1.0 + theta * theta).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;
                let tau = s / (1.0 + c);

                let apq = a[p][q];
                a[p][p] -= t * apq;
                a[q][q] += t * apq;
                a[p][q] = 0.0;
                a[q][p] = 0.0;
                for i in 0..n {
                    if i != p && i != q {
                        let aip = a[i][p];
                        let aiq = a[i][q];
                        a[i][p] = aip - s * (aiq + tau * aip);
                        a[p][i] = a[i][p];
                        a[i][q] = aiq + s * (aip - tau * aiq);
                        a[q][i] = a[i][q];
                    }
                }
                for row in v.iter_mut() {
                    let vip = row[p];
                    let viq = row[q];
                    row[p] = vip - s * (viq + tau * vip);
                    row[q] = viq + s * (vip - tau * viq);
                }
            }
        }
    }

    let eigenvalues: Vec<f64> = (0..n).map(|i| a[i][i]).collect();
    (eigenvalues, v)
}

// Squared Euclidean distance between two points.
fn dist_sq(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

struct KMeansRun {
    labels: Vec<usize>,
    inertia: f64,
}

// Lloyd's algorithm with k-means++ seeding. Returns None when a cluster ends
// up empty.
fn kmeans_once(points: &[Vec<f64>], k: usize, rng: &mut ChaCha8Rng) -> Option<KMeansRun> {
    let n = points.len();
    let dim = points[0].len();

    // k-means++ seeding.
    let mut centers: Vec<Vec<f64>> = Vec::with_capacity(k);
    centers.push(points[rng.random_range(0..n)].clone());
    let mut d2: Vec<f64> = points.iter().map(|p| dist_sq(p, &centers[0])).collect();
    while centers.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total <= 0.0 {
            rng.random_range(0..n)
        } else {
            let mut target = rng.random::<f64>() * total;
            let mut chosen = n - 1;
            for (i, &w) in d2.iter().enumerate() {
                target -= w;
                if target <= 0.0 {
                    chosen = i;
                    break;
                }
            }
            chosen
        };
        centers.push(points[next].clone());
        for (i, p) in points.iter().enumerate() {
            d2[i] = d2[i].min(dist_sq(p, centers.last().unwrap()));
        }
    }

    let mut labels = vec![0usize; n];
    let mut inertia = f64::INFINITY;
    for _ in 0..200 {
        let mut changed = false;
        let mut new_inertia: f64 = 0.0;
        for (i, p) in points.iter().enumerate() {
            let mut best = 0;
            let mut best_d = f64::INFINITY;
            for (c, center) in centers.iter().enumerate() {
                let d = dist_sq(p, center);
                if d < best_d {
                    best_d = d;
                    best = c;
                }
            }
            if labels[i] != best {
                labels[i] = best;
                changed = true;
            }
            new_inertia += best_d;
        }
        // Lloyd iterations never increase the clustering cost.
        debug_assert!(new_inertia <= inertia * (1.0 + 1e-12) + 1e-12);
        inertia = new_inertia;
        if !changed {
            break;
        }
        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for (p, &l) in points.iter().zip(&labels) {
            counts[l] += 1;
            for (s, v) in sums[l].iter_mut().zip(p) {
                *s += v;
            }
        }
        if counts.iter().any(|&c| c == 0) {
            return None;
        }
        for (center, (sum, &count)) in centers.iter_mut().zip(sums.iter().zip(&counts)) {
            for (c, s) in center.iter_mut().zip(sum) {
                *c = s / count as f64;
            }
        }
    }
    if (0..k).any(|c| !labels.contains(&c)) {
        return None;
    }
    Some(KMeansRun { labels, inertia })
}

/// Spectral clustering of a similarity matrix into K nonempty clusters.
///
/// Pipeline: symmetric-normalized Laplacian, K smallest-eigenvalue
/// eigenvectors from the Jacobi solver, row normalization, then k-means with
/// k-means++ seeding (10 restarts, best inertia). Seedings that leave a
/// cluster empty are retried up to 20 times before giving up.
pub fn spectral_cluster(similarity: &[Vec<f64>], k: usize, seed: u64) -> Result<Vec<usize>> {
    let n = similarity.len();
    if k == 0 || k > n {
        return Err(DwbError::InvalidInput(format!(
            "need 1 <= K <= N, got K={k}, N={n}"
        )));
    }
    if k == 1 {
        return Ok(vec![0; n]);
    }

    // L = I - D^{-1/2} S D^{-1/2}
    let deg: Vec<f64> = similarity.iter().map(|row| row.iter().sum()).collect();
    let inv_sqrt: Vec<f64> = deg
        .iter()
        .map(|d| if *d > 0.0 { 1.0 / d.sqrt() } else { 0.0 })
        .collect();
    let mut lap = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..n {
            let norm = inv_sqrt[i] * similarity[i][j] * inv_sqrt[j];
            lap[i][j] = if i == j { 1.0 - norm } else { -norm };
        }
    }

    let (eigenvalues, eigenvectors) = jacobi_eigen(&lap);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eigenvalues[a].total_cmp(&eigenvalues[b]).then(a.cmp(&b)));

    // Embedding rows, normalized to the unit sphere.
    let mut points = vec![vec![0.0; k]; n];
    for (c, &col) in order.iter().take(k).enumerate() {
        for i in 0..n {
            points[i][c] = eigenvectors[i][col];
        }
    }
    for row in points.iter_mut() {
        let norm: f64 = row.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 1e-300 {
            for v in row.iter_mut() {
                *v /= norm;
            }
        }
    }

    let mut best: Option<KMeansRun> = None;
    let mut attempts_left = 20usize;
    let mut restart = 0usize;
    while restart < 10 && attempts_left > 0 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(restart as u64));
        attempts_left -= 1;
        match kmeans_once(&points, k, &mut rng) {
            Some(run) => {
                if best.as_ref().map_or(true, |b| run.inertia < b.inertia) {
                    best = Some(run);
                }
                restart += 1;
            }
            None => {
                // Degenerate seeding; burn a fresh seed for this restart slot.
                restart += 1;
            }
        }
    }
    // Extra re-seeds if every restart so far came up degenerate.
    let mut extra = 10usize;
    while best.is_none() && attempts_left > 0 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(extra as u64));
        attempts_left -= 1;
        extra += 1;
        best = kmeans_once(&points, k, &mut rng);
    }

    best.map(|b| b.labels)
        .ok_or(DwbError::DegenerateClustering(k))
}

/// Cluster-mean initialization of the pure-state columns:
/// q_k is the entrywise mean of the sorted windows labeled k.
pub fn initial_pure_states(
    y: &WindowedSeries,
    labels: &[usize],
    k: usize,
) -> Result<Vec<QuantileVector>> {
    if labels.len() != y.num_windows() {
        return Err(DwbError::DimensionMismatch(
            "labels must cover every window".into(),
        ));
    }
    let n = y.window_size();
    let mut sums = vec![vec![0.0; n]; k];
    let mut counts = vec![0usize; k];
    for (i, &label) in labels.iter().enumerate() {
        if label >= k {
            return Err(DwbError::InvalidInput(format!(
                "label {label} out of range for K={k}"
            )));
        }
        counts[label] += 1;
        for (s, v) in sums[label].iter_mut().zip(y.column(i)) {
            *s += v;
        }
    }
    let mut out = Vec::with_capacity(k);
    for (sum, &count) in sums.iter().zip(&counts) {
        if count == 0 {
            return Err(DwbError::DegenerateClustering(k));
        }
        let col: Vec<f64> = sum.iter().map(|s| s / count as f64).collect();
        out.push(QuantileVector::new(col)?);
    }
    Ok(out)
}

/// Latent path initialized at the simplex centroid for every window.
pub fn initial_latent_path(k: usize, count: usize) -> Vec<SimplexWeight> {
    vec![SimplexWeight::centroid(k); count]
}
