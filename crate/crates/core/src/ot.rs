//! One-dimensional optimal-transport primitives on discrete quantile
//! approximations.
//!
//! A distribution is represented by its n-point discrete quantile vector
//! (n-DQV): the ascending vector of its quantiles at levels (j-0.5)/n. With a
//! shared discretization level the squared Wasserstein-2 distance reduces to
//! a scaled squared Euclidean norm and the Wasserstein barycenter to a
//! weighted column combination.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dist::AnalyticDistribution;
use crate::error::{DwbError, Result};

/// Ascending vector of quantiles sampled at levels (j-0.5)/n.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantileVector {
    values: Vec<f64>,
}

impl QuantileVector {
    /// Wraps a vector after checking the n-DQV invariants: nonempty, finite,
    /// nondecreasing.
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(DwbError::EmptyWindow);
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(DwbError::InvalidInput(
                "quantile vector entries must be finite".into(),
            ));
        }
        if values.windows(2).any(|w| w[1] < w[0]) {
            return Err(DwbError::InvalidInput(
                "quantile vector must be nondecreasing".into(),
            ));
        }
        Ok(Self { values })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }
}

/// Nonnegative length-K vector summing to one: a barycentric weight.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimplexWeight {
    weights: Vec<f64>,
}

/// Tolerance on the simplex sum constraint.
pub const SIMPLEX_SUM_TOL: f64 = 1e-12;

impl SimplexWeight {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.len() < 2 {
            return Err(DwbError::InvalidInput(
                "simplex weight needs K >= 2 entries".into(),
            ));
        }
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(DwbError::InvalidInput(
                "simplex weights must be finite and nonnegative".into(),
            ));
        }
        let sum: f64 = weights.iter().sum();
        if (sum - 1.0).abs() > SIMPLEX_SUM_TOL {
            return Err(DwbError::InvalidInput(format!(
                "simplex weights must sum to 1, got {sum}"
            )));
        }
        Ok(Self { weights })
    }

    /// The simplex centroid (1/K, ..., 1/K).
    pub fn centroid(k: usize) -> Self {
        Self {
            weights: vec![1.0 / k as f64; k],
        }
    }

    /// The k-th vertex e_k.
    pub fn vertex(k: usize, dim: usize) -> Self {
        let mut w = vec![0.0; dim];
        w[k] = 1.0;
        Self { weights: w }
    }

    pub fn k(&self) -> usize {
        self.weights.len()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn into_weights(self) -> Vec<f64> {
        self.weights
    }
}

/// Sorted sample windows cut from one series: column i holds the ascending
/// sort of the window starting at `start_indices[i]`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WindowedSeries {
    sorted_windows: Vec<Vec<f64>>,
    start_indices: Vec<usize>,
    stride: usize,
    window_size: usize,
}

impl WindowedSeries {
    pub fn new(
        sorted_windows: Vec<Vec<f64>>,
        start_indices: Vec<usize>,
        stride: usize,
        window_size: usize,
    ) -> Result<Self> {
        if sorted_windows.len() != start_indices.len() {
            return Err(DwbError::DimensionMismatch(
                "windows and start indices disagree".into(),
            ));
        }
        if sorted_windows.is_empty() {
            return Err(DwbError::EmptyWindow);
        }
        for col in &sorted_windows {
            if col.len() != window_size {
                return Err(DwbError::IncompatibleDiscretization(col.len(), window_size));
            }
            if col.windows(2).any(|w| w[1] < w[0]) {
                return Err(DwbError::InvalidInput("window column not sorted".into()));
            }
        }
        if start_indices
            .windows(2)
            .any(|w| w[1] != w[0] + stride)
        {
            return Err(DwbError::InvalidInput(
                "start indices must advance by the stride".into(),
            ));
        }
        Ok(Self {
            sorted_windows,
            start_indices,
            stride,
            window_size,
        })
    }

    pub fn num_windows(&self) -> usize {
        self.sorted_windows.len()
    }

    pub fn window_size(&self) -> usize {
        self.window_size
    }

    pub fn stride(&self) -> usize {
        self.stride
    }

    pub fn start_indices(&self) -> &[usize] {
        &self.start_indices
    }

    pub fn column(&self, i: usize) -> &[f64] {
        &self.sorted_windows[i]
    }

    pub fn columns(&self) -> &[Vec<f64>] {
        &self.sorted_windows
    }
}

/// Quantile vector of the empirical measure on a sample window: the ascending
/// sort of the samples, ties kept.
pub fn empirical_quantile_vector(samples: &[f64]) -> Result<QuantileVector> {
    if samples.is_empty() {
        return Err(DwbError::EmptyWindow);
    }
    if samples.iter().any(|v| !v.is_finite()) {
        return Err(DwbError::InvalidInput("samples must be finite".into()));
    }
    let mut v = samples.to_vec();
    v.sort_by(f64::total_cmp);
    Ok(QuantileVector { values: v })
}

/// n-DQV of an analytic distribution: quantiles at levels (j-0.5)/n.
pub fn quantile_vector_of(dist: &AnalyticDistribution, n: usize) -> Result<QuantileVector> {
    if n == 0 {
        return Err(DwbError::EmptyWindow);
    }
    let values: Vec<f64> = (1..=n)
        .map(|j| dist.quantile((j as f64 - 0.5) / n as f64))
        .collect();
    QuantileVector::new(values)
}

/// Squared Wasserstein-2 distance between two distributions given by n-DQVs
/// at the same discretization level: (1/n) * sum of squared differences.
pub fn wasserstein2_squared(a: &QuantileVector, b: &QuantileVector) -> Result<f64> {
    if a.len() != b.len() {
        return Err(DwbError::IncompatibleDiscretization(a.len(), b.len()));
    }
    let n = a.len() as f64;
    Ok(a.values
        .iter()
        .zip(&b.values)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        / n)
}

/// Squared Wasserstein-2 distance between two step-function quantile
/// approximations at possibly different discretization levels.
///
/// Integrates the squared difference exactly over the merged breakpoint
/// partition of [0, 1]; with equal levels this reduces to
/// [`wasserstein2_squared`].
pub fn step_w2_squared(a: &QuantileVector, b: &QuantileVector) -> f64 {
    let (m, n) = (a.len(), b.len());
    let (mut i, mut j) = (0usize, 0usize);
    let mut lo = 0.0_f64;
    let mut acc = 0.0_f64;
    while i < m && j < n {
        let next_a = (i + 1) as f64 / m as f64;
        let next_b = (j + 1) as f64 / n as f64;
        let hi = next_a.min(next_b);
        let d = a.values[i] - b.values[j];
        acc += d * d * (hi - lo);
        lo = hi;
        if next_a <= hi {
            i += 1;
        }
        if next_b <= hi {
            j += 1;
        }
    }
    acc
}

/// n-DQV of the Wasserstein barycenter: the weighted combination of the
/// pure-state columns, `b = sum_k x[k] q_k`.
pub fn barycenter_dqv(x: &SimplexWeight, q: &[QuantileVector]) -> Result<QuantileVector> {
    if x.k() != q.len() {
        return Err(DwbError::DimensionMismatch(format!(
            "weight K={} vs {} columns",
            x.k(),
            q.len()
        )));
    }
    let n = q[0].len();
    for col in q {
        if col.len() != n {
            return Err(DwbError::IncompatibleDiscretization(col.len(), n));
        }
    }
    let mut out = vec![0.0; n];
    for (w, col) in x.weights.iter().zip(q) {
        for (o, v) in out.iter_mut().zip(&col.values) {
            *o += w * v;
        }
    }
    // Convex combinations of sorted vectors are sorted; rounding can leave
    // negligible inversions which the constructor would reject.
    for j in 1..n {
        if out[j] < out[j - 1] {
            out[j] = out[j - 1];
        }
    }
    QuantileVector::new(out)
}

/// Quantile function of the barycenter `B(x, pure_states)` evaluated at `xi`.
pub fn barycenter_quantile(x: &SimplexWeight, pure_states: &[AnalyticDistribution], xi: f64) -> Result<f64> {
    if x.k() != pure_states.len() {
        return Err(DwbError::DimensionMismatch(format!(
            "weight K={} vs {} pure states",
            x.k(),
            pure_states.len()
        )));
    }
    Ok(x.weights
        .iter()
        .zip(pure_states)
        .map(|(w, d)| w * d.quantile(xi))
        .sum())
}

/// One draw from the barycenter `B(x, pure_states)`: sample a quantile level
/// uniformly and evaluate the barycentric quantile function there.
pub fn sample_from_barycenter<R: Rng + ?Sized>(
    x: &SimplexWeight,
    pure_states: &[AnalyticDistribution],
    rng: &mut R,
) -> Result<f64> {
    let mut xi: f64 = rng.random();
    while xi <= 0.0 {
        xi = rng.random();
    }
    barycenter_quantile(x, pure_states, xi)
}

/// Window approximation error: squared W2 distance between a window's
/// empirical quantile vector and the reference barycenter at the same level.
pub fn window_approximation_error(window: &QuantileVector, truth: &QuantileVector) -> Result<f64> {
    wasserstein2_squared(window, truth)
}
