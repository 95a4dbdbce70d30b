//! Constrained block-coordinate descent for the fitting objective.
//!
//! The objective
//!
//! ```text
//! F(Q, X) = (1/n) ||Y - Q X||_F^2
//!         + lambda_x * sum_i d^2(x_i, x_{i+1})
//!         + lambda_q * N * (1/n) ||Q (I - (1/K) 11^T)||_F^2
//! ```
//!
//! is minimized over monotone-column Q and simplex-column X by alternating
//! projected gradient descent with Armijo backtracking. The constraint sets
//! are simple enough for exact Euclidean projections: sort-and-threshold for
//! the interior simplex, pool-adjacent-violators for the monotone cone. Every
//! accepted step decreases the objective, so the outer loss trace is
//! nonincreasing by construction.

use serde::{Deserialize, Serialize};

use crate::error::{DwbError, Result};
use crate::ot::{QuantileVector, SimplexWeight, WindowedSeries};
use crate::regularizers::{accumulate_pair_gradient, bhattacharyya_arccos_sq, RegularizerWeights};

/// Tunables for the block-coordinate solver.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SolverConfig {
    /// Absolute outer-loop threshold on the objective decrease. When `None`,
    /// the threshold is `eta_rel` times the initial objective.
    pub eta_abs: Option<f64>,
    /// Relative outer-loop threshold (used when `eta_abs` is `None`).
    pub eta_rel: f64,
    pub max_outer_iters: usize,
    pub max_inner_iters: usize,
    /// Interior-simplex floor: latent weights stay at or above this value.
    pub eps_simplex: f64,
    /// Minimum gap between consecutive quantile entries.
    pub eps_mono: f64,
    pub line_search_shrink: f64,
    pub armijo_c: f64,
    /// Inner iterations stop once the step norm falls below this.
    pub inner_step_tol: f64,
    /// Lower bound on Gaussian state standard deviations.
    pub sigma_floor: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            eta_abs: None,
            eta_rel: 1e-6,
            max_outer_iters: 200,
            max_inner_iters: 100,
            eps_simplex: 1e-8,
            eps_mono: 0.0,
            line_search_shrink: 0.5,
            armijo_c: 1e-4,
            inner_step_tol: 1e-12,
            sigma_floor: 1e-8,
        }
    }
}

/// One row of the loss trace: the three objective terms and their weighted
/// total.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveState {
    pub data_fit: f64,
    pub rx_term: f64,
    pub rq_term: f64,
    pub total: f64,
}

/// Euclidean projection of `v` onto `{ x : x >= eps, sum x = 1 }`.
///
/// Sort-and-threshold applied to the problem shifted by `eps`. Ties sort by
/// value then index, so the result is deterministic.
pub fn project_simplex(v: &[f64], eps: f64) -> Vec<f64> {
    let k = v.len();
    debug_assert!(k >= 2, "simplex projection needs K >= 2");
    debug_assert!(eps * (k as f64) < 1.0, "eps*K must stay below 1");
    let s = 1.0 - eps * k as f64;
    let w: Vec<f64> = v.iter().map(|x| x - eps).collect();

    let mut idx: Vec<usize> = (0..k).collect();
    idx.sort_by(|&a, &b| w[b].total_cmp(&w[a]).then(a.cmp(&b)));

    let mut cum = 0.0;
    let mut theta = 0.0;
    for (j, &id) in idx.iter().enumerate() {
        cum += w[id];
        let t = (cum - s) / (j + 1) as f64;
        if w[id] - t > 0.0 {
            theta = t;
        }
    }
    w.iter().map(|x| (x - theta).max(0.0) + eps).collect()
}

/// Euclidean projection of `v` onto `{ q : q[j+1] - q[j] >= eps_mono }`.
///
/// Pool-adjacent-violators on the gap-shifted vector.
pub fn project_monotone(v: &[f64], eps_mono: f64) -> Vec<f64> {
    let n = v.len();
    let mut vals: Vec<f64> = Vec::with_capacity(n);
    let mut counts: Vec<usize> = Vec::with_capacity(n);
    for (j, &x) in v.iter().enumerate() {
        vals.push(x - eps_mono * j as f64);
        counts.push(1);
        while vals.len() > 1 && vals[vals.len() - 2] > vals[vals.len() - 1] {
            let v2 = vals.pop().unwrap();
            let c2 = counts.pop().unwrap();
            let last = vals.len() - 1;
            let c1 = counts[last];
            vals[last] = (vals[last] * c1 as f64 + v2 * c2 as f64) / (c1 + c2) as f64;
            counts[last] = c1 + c2;
        }
    }
    let mut out = Vec::with_capacity(n);
    let mut j = 0usize;
    for (val, c) in vals.iter().zip(&counts) {
        for _ in 0..*c {
            out.push(val + eps_mono * j as f64);
            j += 1;
        }
    }
    out
}

// ---------------------------------------------------------------------------
// Raw-matrix objective pieces. Layouts: y[i][j] sorted windows (N x n),
// q[k][j] pure-state columns (K x n), x[i][k] latent columns (N x K).
// ---------------------------------------------------------------------------

pub(crate) fn data_fit_raw(y: &[Vec<f64>], q: &[Vec<f64>], x: &[Vec<f64>]) -> f64 {
    let n = if q.is_empty() { 0 } else { q[0].len() };
    let mut total = 0.0;
    for (yi, xi) in y.iter().zip(x) {
        for j in 0..n {
            let mut b = 0.0;
            for (k, qk) in q.iter().enumerate() {
                b += xi[k] * qk[j];
            }
            let d = yi[j] - b;
            total += d * d;
        }
    }
    total / n as f64
}

pub(crate) fn rx_raw(x: &[Vec<f64>]) -> f64 {
    let mut total = 0.0;
    for pair in x.windows(2) {
        total += bhattacharyya_arccos_sq(&pair[0], &pair[1]);
    }
    total
}

pub(crate) fn rq_raw(q: &[Vec<f64>]) -> f64 {
    let k = q.len();
    if k == 0 {
        return 0.0;
    }
    let n = q[0].len();
    let mut total = 0.0;
    for j in 0..n {
        let mean: f64 = q.iter().map(|col| col[j]).sum::<f64>() / k as f64;
        for col in q {
            let d = col[j] - mean;
            total += d * d;
        }
    }
    total / n as f64
}

pub(crate) fn objective_raw(
    y: &[Vec<f64>],
    q: &[Vec<f64>],
    x: &[Vec<f64>],
    weights: &RegularizerWeights,
) -> ObjectiveState {
    let data_fit = data_fit_raw(y, q, x);
    let rx_term = rx_raw(x);
    let rq_term = rq_raw(q);
    let n_windows = y.len() as f64;
    ObjectiveState {
        data_fit,
        rx_term,
        rq_term,
        total: data_fit + weights.lambda_x * rx_term + weights.lambda_q * n_windows * rq_term,
    }
}

// Gradient of the data-fit term with respect to X, added into `gx` (N x K).
fn add_data_fit_grad_x(y: &[Vec<f64>], q: &[Vec<f64>], x: &[Vec<f64>], gx: &mut [Vec<f64>]) {
    let n = q[0].len();
    let scale = 2.0 / n as f64;
    for ((yi, xi), gi) in y.iter().zip(x).zip(gx.iter_mut()) {
        for j in 0..n {
            let mut b = 0.0;
            for (k, qk) in q.iter().enumerate() {
                b += xi[k] * qk[j];
            }
            let r = yi[j] - b;
            for (k, qk) in q.iter().enumerate() {
                gi[k] -= scale * qk[j] * r;
            }
        }
    }
}

// Gradient of the data-fit term with respect to Q, added into `gq` (K x n).
fn add_data_fit_grad_q(y: &[Vec<f64>], q: &[Vec<f64>], x: &[Vec<f64>], gq: &mut [Vec<f64>]) {
    let n = q[0].len();
    let scale = 2.0 / n as f64;
    for (yi, xi) in y.iter().zip(x) {
        for j in 0..n {
            let mut b = 0.0;
            for (k, qk) in q.iter().enumerate() {
                b += xi[k] * qk[j];
            }
            let r = yi[j] - b;
            for (k, gk) in gq.iter_mut().enumerate() {
                gk[j] -= scale * xi[k] * r;
            }
        }
    }
}

/// Data-fit term of the objective, `(1/n) ||Y - Q X||_F^2`.
pub fn data_fit_objective(y: &WindowedSeries, q: &[QuantileVector], x: &[SimplexWeight]) -> f64 {
    data_fit_raw(y.columns(), &q_to_raw(q), &x_to_raw(x))
}

/// Gradient of the data-fit term with respect to (Q, X), as (K x n, N x K)
/// column lists.
pub fn data_fit_gradient(
    y: &WindowedSeries,
    q: &[QuantileVector],
    x: &[SimplexWeight],
) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let qr = q_to_raw(q);
    let xr = x_to_raw(x);
    let mut gq = vec![vec![0.0; y.window_size()]; q.len()];
    let mut gx = vec![vec![0.0; q.len()]; x.len()];
    add_data_fit_grad_q(y.columns(), &qr, &xr, &mut gq);
    add_data_fit_grad_x(y.columns(), &qr, &xr, &mut gx);
    (gq, gx)
}

// ---------------------------------------------------------------------------
// Projected gradient with Armijo backtracking on a flat variable vector.
// ---------------------------------------------------------------------------

struct Pgd<'a> {
    cfg: &'a SolverConfig,
}

impl Pgd<'_> {
    /// Runs descent on `z`. `f` evaluates the objective, `grad` fills the
    /// gradient, `project` maps a point back to the feasible set. Returns the
    /// final objective value; `z` is updated in place and only ever moves to
    /// points with a strictly no-worse objective.
    fn run(
        &self,
        z: &mut Vec<f64>,
        mut f: impl FnMut(&[f64]) -> f64,
        mut grad: impl FnMut(&[f64], &mut [f64]),
        project: impl Fn(&mut [f64]),
    ) -> Result<f64> {
        let dim = z.len();
        let mut fz = f(z);
        if !fz.is_finite() {
            return Err(DwbError::Diverged);
        }
        let mut g = vec![0.0; dim];
        let mut cand = vec![0.0; dim];
        let mut t = 1.0_f64;

        for _ in 0..self.cfg.max_inner_iters {
            g.iter_mut().for_each(|v| *v = 0.0);
            grad(z, &mut g);

            let mut accepted = false;
            let mut fc = fz;
            let mut t_try = t;
            for _ in 0..80 {
                for i in 0..dim {
                    cand[i] = z[i] - t_try * g[i];
                }
                project(&mut cand);
                let trial = f(&cand);
                // <g, z - cand> >= ||z - cand||^2 / t for projections onto a
                // convex set, so this is a valid sufficient-decrease test.
                let decrease: f64 = g
                    .iter()
                    .zip(z.iter().zip(&cand))
                    .map(|(gi, (zi, ci))| gi * (zi - ci))
                    .sum();
                if trial.is_finite() && trial <= fz - self.cfg.armijo_c * decrease && trial <= fz {
                    fc = trial;
                    accepted = true;
                    break;
                }
                t_try *= self.cfg.line_search_shrink;
                if t_try < 1e-18 {
                    break;
                }
            }
            if !accepted {
                break;
            }

            let step_sq: f64 = z
                .iter()
                .zip(&cand)
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            std::mem::swap(z, &mut cand);
            fz = fc;
            t = (t_try * 2.0).min(1e8);

            let scale: f64 = 1.0 + z.iter().map(|v| v * v).sum::<f64>().sqrt();
            if step_sq.sqrt() <= self.cfg.inner_step_tol * scale {
                break;
            }
        }
        if !fz.is_finite() {
            return Err(DwbError::Diverged);
        }
        Ok(fz)
    }
}

// Flat layout helpers: X stored as N consecutive K-chunks, Q as K consecutive
// n-chunks.

fn flatten(cols: &[Vec<f64>]) -> Vec<f64> {
    cols.iter().flat_map(|c| c.iter().copied()).collect()
}

fn unflatten(flat: &[f64], chunk: usize) -> Vec<Vec<f64>> {
    flat.chunks_exact(chunk).map(|c| c.to_vec()).collect()
}

// ---------------------------------------------------------------------------
// Block steps.
// ---------------------------------------------------------------------------

fn x_step_raw(
    q: &[Vec<f64>],
    x: &[Vec<f64>],
    y: &[Vec<f64>],
    weights: &RegularizerWeights,
    cfg: &SolverConfig,
) -> Result<Vec<Vec<f64>>> {
    let k = q.len();
    let lambda_x = weights.lambda_x;
    let mut z = flatten(x);
    let project = |flat: &mut [f64]| {
        for col in flat.chunks_exact_mut(k) {
            let p = project_simplex(col, cfg.eps_simplex);
            col.copy_from_slice(&p);
        }
    };
    project(&mut z);

    let f = |flat: &[f64]| {
        let cols = unflatten(flat, k);
        data_fit_raw(y, q, &cols) + lambda_x * rx_raw(&cols)
    };
    let grad = |flat: &[f64], out: &mut [f64]| {
        let cols = unflatten(flat, k);
        let mut gx = vec![vec![0.0; k]; cols.len()];
        add_data_fit_grad_x(y, q, &cols, &mut gx);
        if lambda_x > 0.0 {
            let mut gpath = vec![vec![0.0; k]; cols.len()];
            for i in 0..cols.len().saturating_sub(1) {
                accumulate_pair_gradient(&cols[i], &cols[i + 1], &mut gpath, i);
            }
            for (gi, pi) in gx.iter_mut().zip(&gpath) {
                for (a, b) in gi.iter_mut().zip(pi) {
                    *a += lambda_x * b;
                }
            }
        }
        for (o, v) in out.iter_mut().zip(gx.iter().flatten()) {
            *o = *v;
        }
    };

    Pgd { cfg }.run(&mut z, f, grad, project)?;
    Ok(unflatten(&z, k))
}

fn q_step_raw(
    q: &[Vec<f64>],
    x: &[Vec<f64>],
    y: &[Vec<f64>],
    weights: &RegularizerWeights,
    cfg: &SolverConfig,
) -> Result<Vec<Vec<f64>>> {
    let n = q[0].len();
    let n_windows = y.len() as f64;
    let lambda_q = weights.lambda_q;
    let mut z = flatten(q);
    let project = |flat: &mut [f64]| {
        for col in flat.chunks_exact_mut(n) {
            let p = project_monotone(col, cfg.eps_mono);
            col.copy_from_slice(&p);
        }
    };
    project(&mut z);

    let f = |flat: &[f64]| {
        let cols = unflatten(flat, n);
        data_fit_raw(y, &cols, x) + lambda_q * n_windows * rq_raw(&cols)
    };
    let grad = |flat: &[f64], out: &mut [f64]| {
        let cols = unflatten(flat, n);
        let k = cols.len();
        let mut gq = vec![vec![0.0; n]; k];
        add_data_fit_grad_q(y, &cols, x, &mut gq);
        if lambda_q > 0.0 {
            let scale = lambda_q * n_windows * 2.0 / n as f64;
            for j in 0..n {
                let mean: f64 = cols.iter().map(|c| c[j]).sum::<f64>() / k as f64;
                for (gk, ck) in gq.iter_mut().zip(&cols) {
                    gk[j] += scale * (ck[j] - mean);
                }
            }
        }
        for (o, v) in out.iter_mut().zip(gq.iter().flatten()) {
            *o = *v;
        }
    };

    Pgd { cfg }.run(&mut z, f, grad, project)?;
    Ok(unflatten(&z, n))
}

/// Gaussian-state parameters for the restricted Q block.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianState {
    pub mean: f64,
    pub std: f64,
}

/// Quantile grid z_j = Phi^{-1}((j - 0.5)/n) shared by all Gaussian states.
pub(crate) fn probit_grid(n: usize) -> Vec<f64> {
    (1..=n)
        .map(|j| crate::dist::norm_ppf((j as f64 - 0.5) / n as f64))
        .collect()
}

pub(crate) fn materialize_gaussian(params: &[GaussianState], grid: &[f64]) -> Vec<Vec<f64>> {
    params
        .iter()
        .map(|p| grid.iter().map(|z| p.mean + p.std * z).collect())
        .collect()
}

fn q_step_gaussian_raw(
    params: &[GaussianState],
    x: &[Vec<f64>],
    y: &[Vec<f64>],
    grid: &[f64],
    weights: &RegularizerWeights,
    cfg: &SolverConfig,
) -> Result<Vec<GaussianState>> {
    let k = params.len();
    let n = grid.len();
    let n_windows = y.len() as f64;
    let lambda_q = weights.lambda_q;

    // Flat layout [mu_1, sigma_1, mu_2, sigma_2, ...].
    let mut z: Vec<f64> = params.iter().flat_map(|p| [p.mean, p.std]).collect();
    let project = |flat: &mut [f64]| {
        for pair in flat.chunks_exact_mut(2) {
            pair[1] = pair[1].max(cfg.sigma_floor);
        }
    };
    project(&mut z);

    let to_params = |flat: &[f64]| -> Vec<GaussianState> {
        flat.chunks_exact(2)
            .map(|p| GaussianState {
                mean: p[0],
                std: p[1],
            })
            .collect()
    };

    let f = |flat: &[f64]| {
        let cols = materialize_gaussian(&to_params(flat), grid);
        data_fit_raw(y, &cols, x) + lambda_q * n_windows * rq_raw(&cols)
    };
    let grad = |flat: &[f64], out: &mut [f64]| {
        let p = to_params(flat);
        let cols = materialize_gaussian(&p, grid);
        let mut gq = vec![vec![0.0; n]; k];
        add_data_fit_grad_q(y, &cols, x, &mut gq);
        if lambda_q > 0.0 {
            let scale = lambda_q * n_windows * 2.0 / n as f64;
            for j in 0..n {
                let mean: f64 = cols.iter().map(|c| c[j]).sum::<f64>() / k as f64;
                for (gk, ck) in gq.iter_mut().zip(&cols) {
                    gk[j] += scale * (ck[j] - mean);
                }
            }
        }
        // Chain rule through q[j,k] = mu_k + sigma_k * z_j.
        for (kk, gk) in gq.iter().enumerate() {
            out[2 * kk] = gk.iter().sum();
            out[2 * kk + 1] = gk.iter().zip(grid).map(|(g, zj)| g * zj).sum();
        }
    };

    Pgd { cfg }.run(&mut z, f, grad, project)?;
    Ok(to_params(&z))
}

// ---------------------------------------------------------------------------
// Public wrappers on the domain types.
// ---------------------------------------------------------------------------

fn q_to_raw(q: &[QuantileVector]) -> Vec<Vec<f64>> {
    q.iter().map(|c| c.values().to_vec()).collect()
}

fn x_to_raw(x: &[SimplexWeight]) -> Vec<Vec<f64>> {
    x.iter().map(|c| c.weights().to_vec()).collect()
}

fn raw_to_q(cols: Vec<Vec<f64>>) -> Result<Vec<QuantileVector>> {
    cols.into_iter().map(QuantileVector::new).collect()
}

fn raw_to_x(cols: Vec<Vec<f64>>) -> Result<Vec<SimplexWeight>> {
    cols.into_iter()
        .map(|mut c| {
            // Guard the sum-to-one invariant against accumulated rounding.
            let sum: f64 = c.iter().sum();
            if (sum - 1.0).abs() > 1e-15 {
                for v in c.iter_mut() {
                    *v /= sum;
                }
            }
            SimplexWeight::new(c)
        })
        .collect()
}

/// Minimizes the objective over X with Q fixed. The result is feasible and
/// its objective is no worse than the starting point's.
pub fn solve_x_step(
    q: &[QuantileVector],
    x: &[SimplexWeight],
    y: &WindowedSeries,
    weights: &RegularizerWeights,
    cfg: &SolverConfig,
) -> Result<Vec<SimplexWeight>> {
    let out = x_step_raw(&q_to_raw(q), &x_to_raw(x), y.columns(), weights, cfg)?;
    raw_to_x(out)
}

/// Minimizes the objective over Q with X fixed; projection is columnwise
/// monotone.
pub fn solve_q_step(
    q: &[QuantileVector],
    x: &[SimplexWeight],
    y: &WindowedSeries,
    weights: &RegularizerWeights,
    cfg: &SolverConfig,
) -> Result<Vec<QuantileVector>> {
    let out = q_step_raw(&q_to_raw(q), &x_to_raw(x), y.columns(), weights, cfg)?;
    raw_to_q(out)
}

/// Which parameterization the Q block uses.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum QBlock {
    /// Free monotone columns.
    Nonparametric(Vec<QuantileVector>),
    /// Columns materialized from per-state (mean, std).
    Gaussian(Vec<GaussianState>),
}

/// Outcome of a coordinate-descent run.
#[derive(Debug, Clone)]
pub struct SolveRun {
    pub q: Vec<QuantileVector>,
    pub gaussian_params: Option<Vec<GaussianState>>,
    pub x: Vec<SimplexWeight>,
    pub trace: Vec<ObjectiveState>,
    pub outer_iters: usize,
    /// The absolute threshold the stopping rule actually used.
    pub eta_effective: f64,
}

/// Alternates X- and Q-steps until the outer objective decrease drops to the
/// threshold or the iteration cap. Runs at least one outer iteration.
pub fn coordinate_descent(
    y: &WindowedSeries,
    q_init: QBlock,
    x_init: &[SimplexWeight],
    weights: &RegularizerWeights,
    cfg: &SolverConfig,
) -> Result<SolveRun> {
    let ycols = y.columns();
    let n = y.window_size();
    let mut x = x_to_raw(x_init);
    for col in x.iter_mut() {
        let p = project_simplex(col, cfg.eps_simplex);
        col.copy_from_slice(&p);
    }

    let grid = probit_grid(n);
    let (mut qcols, mut gparams) = match q_init {
        QBlock::Nonparametric(q) => {
            let mut cols = q_to_raw(&q);
            for col in cols.iter_mut() {
                let p = project_monotone(col, cfg.eps_mono);
                col.copy_from_slice(&p);
            }
            (cols, None)
        }
        QBlock::Gaussian(params) => {
            let params: Vec<GaussianState> = params
                .iter()
                .map(|p| GaussianState {
                    mean: p.mean,
                    std: p.std.max(cfg.sigma_floor),
                })
                .collect();
            (materialize_gaussian(&params, &grid), Some(params))
        }
    };

    let f0 = objective_raw(ycols, &qcols, &x, weights);
    if !f0.total.is_finite() {
        return Err(DwbError::Diverged);
    }
    let eta = cfg.eta_abs.unwrap_or(cfg.eta_rel * f0.total.abs());
    let mut trace = vec![f0];
    let mut prev_total = f0.total;
    let mut outer_iters = 0;

    for _ in 0..cfg.max_outer_iters {
        x = x_step_raw(&qcols, &x, ycols, weights, cfg)?;
        match gparams.as_mut() {
            None => {
                qcols = q_step_raw(&qcols, &x, ycols, weights, cfg)?;
            }
            Some(params) => {
                *params = q_step_gaussian_raw(params, &x, ycols, &grid, weights, cfg)?;
                qcols = materialize_gaussian(params, &grid);
            }
        }
        let state = objective_raw(ycols, &qcols, &x, weights);
        if !state.total.is_finite() {
            return Err(DwbError::Diverged);
        }
        trace.push(state);
        outer_iters += 1;
        let decrease = prev_total - state.total;
        prev_total = state.total;
        if decrease <= eta {
            break;
        }
    }

    Ok(SolveRun {
        q: raw_to_q(qcols)?,
        gaussian_params: gparams,
        x: raw_to_x(x)?,
        trace,
        outer_iters,
        eta_effective: eta,
    })
}
