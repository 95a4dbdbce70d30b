//! The two penalty terms of the fitting objective and their gradients: the
//! Bhattacharyya-arccos path length on the simplex and the spread of the
//! pure-state quantile columns around their common centroid.

use serde::{Deserialize, Serialize};

use crate::error::{DwbError, Result};
use crate::ot::{QuantileVector, SimplexWeight};

/// Nonnegative weights for the two penalties.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegularizerWeights {
    pub lambda_x: f64,
    pub lambda_q: f64,
}

impl RegularizerWeights {
    pub fn new(lambda_x: f64, lambda_q: f64) -> Result<Self> {
        if !(lambda_x >= 0.0) || !(lambda_q >= 0.0) || !lambda_x.is_finite() || !lambda_q.is_finite()
        {
            return Err(DwbError::InvalidInput(
                "regularizer weights must be finite and nonnegative".into(),
            ));
        }
        Ok(Self { lambda_x, lambda_q })
    }

    pub fn zero() -> Self {
        Self {
            lambda_x: 0.0,
            lambda_q: 0.0,
        }
    }
}

/// Squared Bhattacharyya-arccos distance on the simplex,
/// `arccos(sum_k sqrt(a_k b_k))^2`.
///
/// The arccos argument is clamped to [0, 1]; Cauchy-Schwarz puts it there for
/// exact simplex inputs, so the clamp only absorbs floating-point overshoot.
pub fn simplex_distance_squared(a: &SimplexWeight, b: &SimplexWeight) -> Result<f64> {
    if a.k() != b.k() {
        return Err(DwbError::DimensionMismatch(format!(
            "simplex dims {} vs {}",
            a.k(),
            b.k()
        )));
    }
    Ok(bhattacharyya_arccos_sq(a.weights(), b.weights()))
}

pub(crate) fn bhattacharyya_arccos_sq(a: &[f64], b: &[f64]) -> f64 {
    let z: f64 = a
        .iter()
        .zip(b)
        .map(|(x, y)| (x * y).sqrt())
        .sum::<f64>()
        .clamp(0.0, 1.0);
    let t = z.acos();
    t * t
}

// d/dz of arccos(z)^2 with its analytic limit -2 at z -> 1.
pub(crate) fn arccos_sq_derivative(z: f64) -> f64 {
    let z = z.clamp(0.0, 1.0);
    if 1.0 - z < 1e-9 {
        -2.0
    } else {
        -2.0 * z.acos() / (1.0 - z * z).sqrt()
    }
}

/// Total squared-distance length of a latent path: sum over adjacent column
/// pairs of `simplex_distance_squared`.
pub fn latent_path_penalty(path: &[SimplexWeight]) -> Result<f64> {
    let mut total = 0.0;
    for pair in path.windows(2) {
        total += simplex_distance_squared(&pair[0], &pair[1])?;
    }
    Ok(total)
}

/// Gradient of [`latent_path_penalty`] with respect to every path entry,
/// returned as one vector per column.
///
/// Entries are assumed bounded away from zero (the solver keeps iterates on
/// the interior simplex), so the square-root factors stay finite.
pub fn latent_path_penalty_gradient(path: &[SimplexWeight]) -> Result<Vec<Vec<f64>>> {
    let n = path.len();
    let k = if n > 0 { path[0].k() } else { 0 };
    let mut grad = vec![vec![0.0; k]; n];
    for i in 0..n.saturating_sub(1) {
        let a = path[i].weights();
        let b = path[i + 1].weights();
        accumulate_pair_gradient(a, b, &mut grad, i);
    }
    Ok(grad)
}

pub(crate) fn accumulate_pair_gradient(a: &[f64], b: &[f64], grad: &mut [Vec<f64>], i: usize) {
    let z: f64 = a
        .iter()
        .zip(b)
        .map(|(x, y)| (x * y).sqrt())
        .sum::<f64>()
        .clamp(0.0, 1.0);
    let dz = arccos_sq_derivative(z);
    for k in 0..a.len() {
        grad[i][k] += dz * 0.5 * (b[k] / a[k]).sqrt();
        grad[i + 1][k] += dz * 0.5 * (a[k] / b[k]).sqrt();
    }
}

/// Spread of the pure-state columns around their centroid:
/// `(1/n) sum_k ||q_k - q_bar||^2` where `q_bar` is the columnwise mean.
///
/// Equals `(1/n) ||Q (I - (1/K) 11^T)||_F^2`; adding a common constant to
/// every column leaves it unchanged.
pub fn pure_state_spread_penalty(q: &[QuantileVector]) -> Result<f64> {
    let k = q.len();
    if k == 0 {
        return Ok(0.0);
    }
    let n = q[0].len();
    for col in q {
        if col.len() != n {
            return Err(DwbError::IncompatibleDiscretization(col.len(), n));
        }
    }
    Ok(spread_penalty_raw(q, n, k))
}

fn spread_penalty_raw(q: &[QuantileVector], n: usize, k: usize) -> f64 {
    let mut total = 0.0;
    for j in 0..n {
        let mean: f64 = q.iter().map(|col| col.values()[j]).sum::<f64>() / k as f64;
        for col in q {
            let d = col.values()[j] - mean;
            total += d * d;
        }
    }
    total / n as f64
}

/// Gradient of [`pure_state_spread_penalty`]: `(2/n) Q (I - (1/K) 11^T)`,
/// returned column by column.
pub fn pure_state_spread_penalty_gradient(q: &[QuantileVector]) -> Result<Vec<Vec<f64>>> {
    let k = q.len();
    if k == 0 {
        return Ok(Vec::new());
    }
    let n = q[0].len();
    for col in q {
        if col.len() != n {
            return Err(DwbError::IncompatibleDiscretization(col.len(), n));
        }
    }
    let mut grad = vec![vec![0.0; n]; k];
    for j in 0..n {
        let mean: f64 = q.iter().map(|col| col.values()[j]).sum::<f64>() / k as f64;
        for (g, col) in grad.iter_mut().zip(q) {
            g[j] = 2.0 / n as f64 * (col.values()[j] - mean);
        }
    }
    Ok(grad)
}
