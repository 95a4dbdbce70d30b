//! Ground-truth data generation, the window-size error experiments, and the
//! inverse-scaling non-uniqueness construction.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dist::AnalyticDistribution;
use crate::error::{DwbError, Result};
use crate::ot::{
    barycenter_quantile, quantile_vector_of, sample_from_barycenter, wasserstein2_squared,
    QuantileVector, SimplexWeight,
};

/// Piecewise-linear trajectory on the simplex: constant between repeated
/// knots, linear during transitions, clamped outside the knot range.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PiecewiseLinearPath {
    knots: Vec<(f64, SimplexWeight)>,
}

impl PiecewiseLinearPath {
    pub fn new(knots: Vec<(f64, SimplexWeight)>) -> Result<Self> {
        if knots.is_empty() {
            return Err(DwbError::InvalidInput("trajectory needs knots".into()));
        }
        if knots.windows(2).any(|w| w[1].0 < w[0].0) {
            return Err(DwbError::InvalidInput(
                "trajectory knots must be time-ordered".into(),
            ));
        }
        let k = knots[0].1.k();
        if knots.iter().any(|(_, w)| w.k() != k) {
            return Err(DwbError::DimensionMismatch(
                "trajectory knots must share K".into(),
            ));
        }
        Ok(Self { knots })
    }

    pub fn k(&self) -> usize {
        self.knots[0].1.k()
    }

    pub fn knots(&self) -> &[(f64, SimplexWeight)] {
        &self.knots
    }

    /// Latent state at continuous time `tau`.
    pub fn at(&self, tau: f64) -> SimplexWeight {
        let knots = &self.knots;
        if tau <= knots[0].0 {
            return knots[0].1.clone();
        }
        if tau >= knots[knots.len() - 1].0 {
            return knots[knots.len() - 1].1.clone();
        }
        let mut hi = 1;
        while knots[hi].0 < tau {
            hi += 1;
        }
        let (t0, ref a) = knots[hi - 1];
        let (t1, ref b) = knots[hi];
        if t1 == t0 {
            return b.clone();
        }
        let f = (tau - t0) / (t1 - t0);
        let mixed: Vec<f64> = a
            .weights()
            .iter()
            .zip(b.weights())
            .map(|(x, y)| (1.0 - f) * x + f * y)
            .collect();
        // Convex combinations of simplex points stay on the simplex up to
        // rounding; renormalize to keep the invariant exact.
        let sum: f64 = mixed.iter().sum();
        SimplexWeight::new(mixed.into_iter().map(|v| v / sum).collect())
            .expect("interpolant stays on the simplex")
    }
}

/// Analytic pure states plus a continuous latent trajectory and sampling
/// rate: everything needed to draw ground-truth series.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GroundTruthSpec {
    pub pure_states: Vec<AnalyticDistribution>,
    pub trajectory: PiecewiseLinearPath,
    pub sampling_rate_hz: f64,
    pub duration_s: f64,
}

impl GroundTruthSpec {
    pub fn new(
        pure_states: Vec<AnalyticDistribution>,
        trajectory: PiecewiseLinearPath,
        sampling_rate_hz: f64,
        duration_s: f64,
    ) -> Result<Self> {
        if pure_states.len() != trajectory.k() {
            return Err(DwbError::DimensionMismatch(format!(
                "{} pure states vs trajectory K={}",
                pure_states.len(),
                trajectory.k()
            )));
        }
        if !(sampling_rate_hz > 0.0) || !(duration_s > 0.0) {
            return Err(DwbError::InvalidInput(
                "sampling rate and duration must be positive".into(),
            ));
        }
        Ok(Self {
            pure_states,
            trajectory,
            sampling_rate_hz,
            duration_s,
        })
    }

    pub fn k(&self) -> usize {
        self.pure_states.len()
    }

    /// Number of samples T = round(rate * duration).
    pub fn num_samples(&self) -> usize {
        (self.sampling_rate_hz * self.duration_s).round() as usize
    }

    /// Latent state at sample index t (1-based), tau = t / rate.
    pub fn latent_at_sample(&self, t: usize) -> SimplexWeight {
        self.trajectory.at(t as f64 / self.sampling_rate_hz)
    }
}

/// The three-state simulation preset: bimodal Gaussian mixture, uniform, and
/// a five-point near-delta mixture, visiting states 1, 2, 3, 1 with 1 s
/// pauses and 2 s transitions over 9 s.
///
/// The bimodal state's component weights are normalized to (2/3, 1/3).
pub fn simulation_preset(sampling_rate_hz: f64) -> GroundTruthSpec {
    let q3_centers = [-2.88, -0.74, -0.64, -0.41, 1.82];
    let states = vec![
        AnalyticDistribution::mixture(vec![
            (
                2.0 / 3.0,
                AnalyticDistribution::gaussian_var(3.0, 0.25).unwrap(),
            ),
            (
                1.0 / 3.0,
                AnalyticDistribution::gaussian_var(-3.0, 0.25).unwrap(),
            ),
        ])
        .unwrap(),
        AnalyticDistribution::uniform(-4.0, 4.0).unwrap(),
        AnalyticDistribution::mixture(
            q3_centers
                .iter()
                .map(|&c| (0.2, AnalyticDistribution::gaussian_var(c, 1e-8).unwrap()))
                .collect(),
        )
        .unwrap(),
    ];
    let v = |k: usize| SimplexWeight::vertex(k, 3);
    let trajectory = PiecewiseLinearPath::new(vec![
        (0.0, v(0)),
        (1.0, v(0)),
        (3.0, v(1)),
        (4.0, v(1)),
        (6.0, v(2)),
        (7.0, v(2)),
        (9.0, v(0)),
    ])
    .unwrap();
    GroundTruthSpec::new(states, trajectory, sampling_rate_hz, 9.0).unwrap()
}

/// Draws one series from the spec: `x_t = trajectory(t / rate)` and
/// `y_t ~ B(x_t, pure_states)` independently. Returns the series and the
/// latent truth, one column per sample.
pub fn sample_series(spec: &GroundTruthSpec, seed: u64) -> Result<(Vec<f64>, Vec<SimplexWeight>)> {
    let t_total = spec.num_samples();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut series = Vec::with_capacity(t_total);
    let mut latent = Vec::with_capacity(t_total);
    for t in 1..=t_total {
        let x = spec.latent_at_sample(t);
        series.push(sample_from_barycenter(&x, &spec.pure_states, &mut rng)?);
        latent.push(x);
    }
    Ok((series, latent))
}

/// Latent dynamics for the window-size experiments.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum WaeDynamics {
    /// x_t = [0.5, 0.5] for all t.
    Constant,
    /// x_t = [1 - t/T, t/T] over t in [0, T].
    LinearSweep { t_total: usize },
}

/// Two-state window-approximation-error experiment configuration.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WaeExperimentSpec {
    pub state_a: AnalyticDistribution,
    pub state_b: AnalyticDistribution,
    pub dynamics: WaeDynamics,
}

impl WaeExperimentSpec {
    /// Fig.-3 configuration: N(0,5) and N(10,0.2) in variance notation.
    pub fn reference(dynamics: WaeDynamics) -> Self {
        Self {
            state_a: AnalyticDistribution::gaussian_var(0.0, 5.0).unwrap(),
            state_b: AnalyticDistribution::gaussian_var(10.0, 0.2).unwrap(),
            dynamics,
        }
    }

    /// Variant with the pure states pulled closer together, N(1,4.23) and
    /// N(9,0.39); the barycenter at the midpoint stays N(5,1.8).
    pub fn reduced_gap(dynamics: WaeDynamics) -> Self {
        Self {
            state_a: AnalyticDistribution::gaussian_var(1.0, 4.23).unwrap(),
            state_b: AnalyticDistribution::gaussian_var(9.0, 0.39).unwrap(),
            dynamics,
        }
    }
}

/// One aggregated row of a WAE table.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct WaeRow {
    pub window: usize,
    pub mean: f64,
    pub q25: f64,
    pub q75: f64,
}

/// Linear-interpolation quantile of already-sorted values.
pub fn quantile_linear(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = p.clamp(0.0, 1.0) * (n - 1) as f64;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    let f = h - lo as f64;
    sorted[lo] * (1.0 - f) + sorted[hi] * f
}

/// Mean and quartile bands of the window approximation error at the series
/// midpoint, per window size, over independent trials.
///
/// The window centered at t* = 0.5(T+1) spans sample times
/// t* - n/2 .. t* + n/2 - 1 (real-valued in the sweep case); the reference is
/// the n-DQV of the true barycenter at t*, which is [0.5, 0.5] for both
/// dynamics.
pub fn wae_experiment(
    spec: &WaeExperimentSpec,
    window_sizes: &[usize],
    trials: usize,
    seed: u64,
) -> Result<Vec<WaeRow>> {
    let states = [spec.state_a.clone(), spec.state_b.clone()];
    let midpoint = SimplexWeight::new(vec![0.5, 0.5])?;

    let mut rows = Vec::with_capacity(window_sizes.len());
    for (wi, &n) in window_sizes.iter().enumerate() {
        if n == 0 {
            return Err(DwbError::EmptyWindow);
        }
        // Reference barycenter n-DQV at t*.
        let truth_cols = [
            quantile_vector_of(&states[0], n)?,
            quantile_vector_of(&states[1], n)?,
        ];
        let truth = crate::ot::barycenter_dqv(&midpoint, &truth_cols)?;

        // Latent weight for sample m of the window (m = 0 .. n-1).
        let weight_at = |m: usize| -> SimplexWeight {
            match spec.dynamics {
                WaeDynamics::Constant => midpoint.clone(),
                WaeDynamics::LinearSweep { t_total } => {
                    let t_star = 0.5 * (t_total as f64 + 1.0);
                    let t = t_star - n as f64 / 2.0 + m as f64;
                    let frac = (t / t_total as f64).clamp(0.0, 1.0);
                    SimplexWeight::new(vec![1.0 - frac, frac]).expect("on the simplex")
                }
            }
        };
        let weights: Vec<SimplexWeight> = (0..n).map(weight_at).collect();

        let errors: Vec<f64> = (0..trials)
            .into_par_iter()
            .map(|trial| {
                let mut rng =
                    ChaCha8Rng::seed_from_u64(seed ^ (wi as u64) << 40 ^ trial as u64);
                let mut draws: Vec<f64> = weights
                    .iter()
                    .map(|x| sample_from_barycenter(x, &states, &mut rng).expect("valid draw"))
                    .collect();
                draws.sort_by(f64::total_cmp);
                let window = QuantileVector::new(draws).expect("sorted");
                wasserstein2_squared(&window, &truth).expect("same n")
            })
            .collect();

        let mut sorted = errors.clone();
        sorted.sort_by(f64::total_cmp);
        rows.push(WaeRow {
            window: n,
            mean: errors.iter().sum::<f64>() / trials as f64,
            q25: quantile_linear(&sorted, 0.25),
            q75: quantile_linear(&sorted, 0.75),
        });
    }
    Ok(rows)
}

/// The feasible scaling range of the inverse-scaling construction.
///
/// `alpha0` is the smallest scaling in (0, 1] that keeps the rescaled weight
/// on the simplex; `alpha_m` is the largest scaling (>= 1, possibly infinite)
/// that keeps every rescaled pure-state column monotone.
pub fn alpha_range(
    x_b: &SimplexWeight,
    x_0: &SimplexWeight,
    q: &[QuantileVector],
) -> Result<(f64, f64)> {
    if x_b.k() != x_0.k() || x_b.k() != q.len() {
        return Err(DwbError::DimensionMismatch(
            "alpha_range needs matching K".into(),
        ));
    }
    if x_b == x_0 {
        return Err(DwbError::InvalidInput("x_B must differ from x_0".into()));
    }
    let n = q[0].len();
    for col in q {
        if col.len() != n {
            return Err(DwbError::IncompatibleDiscretization(col.len(), n));
        }
    }

    // alpha0: for each coordinate moving down (x_B[k] < x_0[k]) the weight
    // x_0[k] + d[k]/alpha hits zero at alpha = -d[k] / x_0[k].
    let mut alpha0: f64 = 0.0;
    for (b, o) in x_b.weights().iter().zip(x_0.weights()) {
        let d = b - o;
        if d < 0.0 {
            alpha0 = alpha0.max(-d / o);
        }
    }

    // Reference barycenter column p0 = Q x_0.
    let p0: Vec<f64> = (0..n)
        .map(|j| {
            x_0.weights()
                .iter()
                .zip(q)
                .map(|(w, col)| w * col.values()[j])
                .sum()
        })
        .collect();

    // alpha_m: gap j of rescaled column k is u + alpha * w with
    // u = gap(p0) >= 0 and w = gap(q_k) - gap(p0); a decreasing direction
    // (w < 0) caps alpha at u / -w.
    let mut alpha_m = f64::INFINITY;
    for col in q {
        for j in 0..n.saturating_sub(1) {
            let u = p0[j + 1] - p0[j];
            let w = (col.values()[j + 1] - col.values()[j]) - u;
            if w < 0.0 {
                alpha_m = alpha_m.min(u / -w);
            }
        }
    }
    Ok((alpha0, alpha_m))
}

/// Inverse-scaling construction: contracts the weight toward `x_0` by
/// 1/alpha while expanding the pure-state columns away from the reference
/// barycenter by alpha. The constructed pair reproduces the original
/// barycenter exactly.
pub fn inverse_scaling(
    x_b: &SimplexWeight,
    x_0: &SimplexWeight,
    alpha: f64,
    q: &[QuantileVector],
) -> Result<(SimplexWeight, Vec<QuantileVector>)> {
    let (alpha0, alpha_m) = alpha_range(x_b, x_0, q)?;
    // Feasibility with slack for the boundary itself.
    if !(alpha > 0.0) || alpha < alpha0 - 1e-12 || alpha > alpha_m * (1.0 + 1e-12) {
        return Err(DwbError::ConstructionInfeasible {
            alpha,
            alpha0,
            alpha_m,
        });
    }
    let n = q[0].len();
    let p0: Vec<f64> = (0..n)
        .map(|j| {
            x_0.weights()
                .iter()
                .zip(q)
                .map(|(w, col)| w * col.values()[j])
                .sum()
        })
        .collect();

    let x_bar: Vec<f64> = x_b
        .weights()
        .iter()
        .zip(x_0.weights())
        .map(|(b, o)| o + (b - o) / alpha)
        .collect();
    let sum: f64 = x_bar.iter().sum();
    let x_bar = SimplexWeight::new(x_bar.into_iter().map(|v| (v / sum).max(0.0)).collect())?;

    let q_bar: Result<Vec<QuantileVector>> = q
        .iter()
        .map(|col| {
            let mut values: Vec<f64> = col
                .values()
                .iter()
                .zip(&p0)
                .map(|(v, p)| p + alpha * (v - p))
                .collect();
            // Guard rounding at the feasibility boundary.
            for j in 1..values.len() {
                if values[j] < values[j - 1] {
                    values[j] = values[j - 1];
                }
            }
            QuantileVector::new(values)
        })
        .collect();
    Ok((x_bar, q_bar?))
}

/// The degenerate construction from the appendix: a point mass and U[0,1]
/// with the weight at a vertex, for which the feasible range collapses to
/// {1}.
pub fn appendix_degenerate_case(n: usize) -> (SimplexWeight, SimplexWeight, Vec<QuantileVector>) {
    let q = vec![
        quantile_vector_of(&AnalyticDistribution::dirac(0.0).unwrap(), n).unwrap(),
        quantile_vector_of(&AnalyticDistribution::uniform(0.0, 1.0).unwrap(), n).unwrap(),
    ];
    let x_b = SimplexWeight::vertex(0, 2);
    let x_0 = SimplexWeight::new(vec![0.5, 0.5]).unwrap();
    (x_b, x_0, q)
}

/// Barycentric quantile at `xi` for a ground-truth spec at continuous time
/// `tau`; convenience for truth resampling.
pub fn truth_barycenter_quantile(spec: &GroundTruthSpec, tau: f64, xi: f64) -> Result<f64> {
    let x = spec.trajectory.at(tau);
    barycenter_quantile(&x, &spec.pure_states, xi)
}
