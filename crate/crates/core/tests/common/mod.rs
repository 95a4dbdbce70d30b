//! Independent oracles shared by the integration suites: a dense linear
//! solver, brute-force projection/QP solvers by active-set enumeration, and
//! seeded random instance generators. Everything here recomputes objectives
//! from scratch so the oracles never share a code path with the crate.

#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Gaussian elimination with partial pivoting. Returns `None` for singular
/// systems.
pub fn solve_dense(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let pivot = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[pivot][col].abs() < 1e-12 {
            return None;
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in (col + 1)..n {
            let f = a[row][col] / a[col][col];
            for k in col..n {
                a[row][k] -= f * a[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let mut s = b[row];
        for k in (row + 1)..n {
            s -= a[row][k] * x[k];
        }
        x[row] = s / a[row][row];
    }
    Some(x)
}

/// Brute-force Euclidean projection onto `{x >= eps, sum x = 1}` by
/// enumerating the sets of coordinates pinned at the floor.
pub fn brute_simplex_projection(v: &[f64], eps: f64) -> Vec<f64> {
    let k = v.len();
    let mut best: Option<(f64, Vec<f64>)> = None;
    for mask in 0..(1u32 << k) {
        let pinned: Vec<bool> = (0..k).map(|i| mask >> i & 1 == 1).collect();
        let free: Vec<usize> = (0..k).filter(|&i| !pinned[i]).collect();
        if free.is_empty() {
            continue;
        }
        let pinned_mass = eps * (k - free.len()) as f64;
        let free_sum: f64 = free.iter().map(|&i| v[i]).sum();
        let theta = (free_sum - (1.0 - pinned_mass)) / free.len() as f64;
        let mut x = vec![eps; k];
        let mut feasible = true;
        for &i in &free {
            x[i] = v[i] - theta;
            if x[i] < eps - 1e-9 {
                feasible = false;
                break;
            }
        }
        if !feasible {
            continue;
        }
        let d: f64 = x.iter().zip(v).map(|(a, b)| (a - b) * (a - b)).sum();
        if best.as_ref().map_or(true, |(bd, _)| d < *bd) {
            best = Some((d, x));
        }
    }
    best.expect("projection exists").1
}

/// Brute-force Euclidean projection onto `{q[j+1] - q[j] >= eps}` by
/// enumerating tie patterns of adjacent entries.
pub fn brute_monotone_projection(v: &[f64], eps: f64) -> Vec<f64> {
    let n = v.len();
    let w: Vec<f64> = v
        .iter()
        .enumerate()
        .map(|(j, x)| x - eps * j as f64)
        .collect();
    let mut best: Option<(f64, Vec<f64>)> = None;
    for mask in 0..(1u32 << (n - 1)) {
        // Bit j set means w[j] and w[j+1] are tied into one block.
        let mut blocks: Vec<(f64, usize)> = Vec::new();
        let mut sum = w[0];
        let mut count = 1usize;
        for j in 0..n - 1 {
            if mask >> j & 1 == 1 {
                sum += w[j + 1];
                count += 1;
            } else {
                blocks.push((sum / count as f64, count));
                sum = w[j + 1];
                count = 1;
            }
        }
        blocks.push((sum / count as f64, count));
        let feasible = blocks.windows(2).all(|p| p[1].0 >= p[0].0 - 1e-12);
        if !feasible {
            continue;
        }
        let mut q = Vec::with_capacity(n);
        for (val, c) in &blocks {
            for _ in 0..*c {
                q.push(*val);
            }
        }
        let d: f64 = q.iter().zip(&w).map(|(a, b)| (a - b) * (a - b)).sum();
        if best.as_ref().map_or(true, |(bd, _)| d < *bd) {
            best = Some((d, q));
        }
    }
    let shifted = best.expect("cone projection exists").1;
    shifted
        .into_iter()
        .enumerate()
        .map(|(j, x)| x + eps * j as f64)
        .collect()
}

/// Objective of the X-step column subproblem, `(1/n) ||y - Q x||^2`
/// (`lambda_x = 0` makes the X problem column-separable).
pub fn x_column_objective(qcols: &[Vec<f64>], y: &[f64], x: &[f64]) -> f64 {
    let n = y.len() as f64;
    y.iter()
        .enumerate()
        .map(|(j, yj)| {
            let b: f64 = qcols.iter().zip(x).map(|(q, w)| q[j] * w).sum();
            (yj - b) * (yj - b)
        })
        .sum::<f64>()
        / n
}

/// Brute-force minimum of the X-step column subproblem over
/// `{x >= eps, sum x = 1}` by active-set enumeration and KKT solves.
/// Returns (objective, solution).
pub fn brute_x_column_qp(qcols: &[Vec<f64>], y: &[f64], eps: f64) -> (f64, Vec<f64>) {
    let k = qcols.len();
    let n = y.len() as f64;
    // H = (2/n) Q^T Q, b = (2/n) Q^T y
    let mut h = vec![vec![0.0; k]; k];
    let mut lin = vec![0.0; k];
    for i in 0..k {
        for j in 0..k {
            h[i][j] = 2.0 / n * qcols[i].iter().zip(&qcols[j]).map(|(a, b)| a * b).sum::<f64>();
        }
        lin[i] = 2.0 / n * qcols[i].iter().zip(y).map(|(a, b)| a * b).sum::<f64>();
    }
    let mut best: Option<(f64, Vec<f64>)> = None;
    for mask in 0..(1u32 << k) {
        let pinned: Vec<bool> = (0..k).map(|i| mask >> i & 1 == 1).collect();
        let free: Vec<usize> = (0..k).filter(|&i| !pinned[i]).collect();
        if free.is_empty() {
            continue;
        }
        let m = free.len();
        // Unknowns: x_free then nu. Stationarity rows + sum constraint.
        let mut a = vec![vec![0.0; m + 1]; m + 1];
        let mut rhs = vec![0.0; m + 1];
        for (r, &i) in free.iter().enumerate() {
            for (c, &j) in free.iter().enumerate() {
                a[r][c] = h[i][j];
            }
            a[r][m] = 1.0;
            rhs[r] = lin[i]
                - (0..k)
                    .filter(|&j| pinned[j])
                    .map(|j| h[i][j] * eps)
                    .sum::<f64>();
        }
        for (c, _) in free.iter().enumerate() {
            a[m][c] = 1.0;
        }
        rhs[m] = 1.0 - eps * (k - m) as f64;
        let Some(sol) = solve_dense(a, rhs) else {
            continue;
        };
        let mut x = vec![eps; k];
        let mut feasible = true;
        for (c, &i) in free.iter().enumerate() {
            x[i] = sol[c];
            if x[i] < eps - 1e-9 {
                feasible = false;
                break;
            }
        }
        if !feasible {
            continue;
        }
        let obj = x_column_objective(qcols, y, &x);
        if best.as_ref().map_or(true, |(bo, _)| obj < *bo) {
            best = Some((obj, x));
        }
    }
    best.expect("feasible set is nonempty")
}

/// Full Q-step objective,
/// `(1/n) ||Y - QX||_F^2 + lambda_q * N * (1/n) ||Q(I - 11^T/K)||_F^2`.
pub fn q_objective(
    qcols: &[Vec<f64>],
    xcols: &[Vec<f64>],
    ycols: &[Vec<f64>],
    lambda_q: f64,
) -> f64 {
    let n = qcols[0].len() as f64;
    let k = qcols.len();
    let mut data = 0.0;
    for (yi, xi) in ycols.iter().zip(xcols) {
        for j in 0..qcols[0].len() {
            let b: f64 = qcols.iter().zip(xi.iter()).map(|(q, w)| q[j] * w).sum();
            data += (yi[j] - b) * (yi[j] - b);
        }
    }
    let mut spread = 0.0;
    for j in 0..qcols[0].len() {
        let mean: f64 = qcols.iter().map(|c| c[j]).sum::<f64>() / k as f64;
        for c in qcols {
            spread += (c[j] - mean) * (c[j] - mean);
        }
    }
    data / n + lambda_q * ycols.len() as f64 * spread / n
}

/// Brute-force minimum of the Q-step over monotone columns by enumerating
/// active gap constraints and solving the KKT systems. Returns (objective,
/// flat solution in column-major layout k*n+j).
pub fn brute_q_qp(
    xcols: &[Vec<f64>],
    ycols: &[Vec<f64>],
    n: usize,
    k: usize,
    lambda_q: f64,
    eps_mono: f64,
) -> (f64, Vec<f64>) {
    let n_w = ycols.len() as f64;
    let dim = n * k;
    let idx = |kk: usize, j: usize| kk * n + j;

    // Hessian blocks over j: Hb[k][k'] = (2/n) sum_i x_i[k] x_i[k']
    //                                  + (2 lambda_q N / n) C[k][k'].
    let mut hb = vec![vec![0.0; k]; k];
    for a in 0..k {
        for b in 0..k {
            let xx: f64 = xcols.iter().map(|x| x[a] * x[b]).sum();
            let c = if a == b { 1.0 - 1.0 / k as f64 } else { -1.0 / k as f64 };
            hb[a][b] = 2.0 / n as f64 * xx + 2.0 * lambda_q * n_w / n as f64 * c;
        }
    }
    // Linear term: lin[(k,j)] = (2/n) sum_i x_i[k] y_i[j].
    let mut lin = vec![0.0; dim];
    for kk in 0..k {
        for j in 0..n {
            lin[idx(kk, j)] =
                2.0 / n as f64 * xcols.iter().zip(ycols).map(|(x, y)| x[kk] * y[j]).sum::<f64>();
        }
    }

    let constraints: Vec<(usize, usize)> = (0..k)
        .flat_map(|kk| (0..n - 1).map(move |j| (kk, j)))
        .collect();
    let nc = constraints.len();
    assert!(nc <= 16, "active-set enumeration capped at 2^16");

    let mut best: Option<(f64, Vec<f64>)> = None;
    for mask in 0u32..(1 << nc) {
        let active: Vec<usize> = (0..nc).filter(|&c| mask >> c & 1 == 1).collect();
        let na = active.len();
        let total = dim + na;
        let mut a = vec![vec![0.0; total]; total];
        let mut rhs = vec![0.0; total];
        for kk in 0..k {
            for j in 0..n {
                let row = idx(kk, j);
                for kk2 in 0..k {
                    a[row][idx(kk2, j)] = hb[kk][kk2];
                }
                rhs[row] = lin[row];
            }
        }
        for (r, &c) in active.iter().enumerate() {
            let (kk, j) = constraints[c];
            // Constraint: q[kk][j+1] - q[kk][j] = eps_mono.
            a[dim + r][idx(kk, j + 1)] = 1.0;
            a[dim + r][idx(kk, j)] = -1.0;
            a[idx(kk, j + 1)][dim + r] = 1.0;
            a[idx(kk, j)][dim + r] = -1.0;
            rhs[dim + r] = eps_mono;
        }
        let Some(sol) = solve_dense(a, rhs) else {
            continue;
        };
        let flat = &sol[..dim];
        let feasible = constraints
            .iter()
            .all(|&(kk, j)| flat[idx(kk, j + 1)] - flat[idx(kk, j)] >= eps_mono - 1e-9);
        if !feasible {
            continue;
        }
        let qcols: Vec<Vec<f64>> = (0..k).map(|kk| flat[kk * n..(kk + 1) * n].to_vec()).collect();
        let obj = q_objective(&qcols, xcols, ycols, lambda_q);
        if best.as_ref().map_or(true, |(bo, _)| obj < *bo) {
            best = Some((obj, flat.to_vec()));
        }
    }
    best.expect("feasible set is nonempty")
}

/// Random sorted vector of length n with values in [-scale, scale].
pub fn random_sorted(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> Vec<f64> {
    let mut v: Vec<f64> = (0..n).map(|_| rng.random_range(-scale..scale)).collect();
    v.sort_by(f64::total_cmp);
    v
}

/// Random interior simplex point of dimension k (entries at least `floor`).
pub fn random_interior_simplex(rng: &mut ChaCha8Rng, k: usize, floor: f64) -> Vec<f64> {
    let raw: Vec<f64> = (0..k)
        .map(|_| rng.random_range(floor.max(0.05)..1.0))
        .collect();
    let sum: f64 = raw.iter().sum();
    raw.into_iter().map(|v| v / sum).collect()
}

pub fn seeded(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
