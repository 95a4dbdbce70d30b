//! Solver correctness against brute-force oracles: exact projections,
//! block-step optimality on convex subproblems, descent, and gradient checks.

mod common;

use common::*;
use dwb_core::ot::{QuantileVector, SimplexWeight, WindowedSeries};
use dwb_core::regularizers::RegularizerWeights;
use dwb_core::solver::{
    coordinate_descent, data_fit_gradient, data_fit_objective, project_monotone, project_simplex,
    solve_q_step, solve_x_step, QBlock, SolverConfig,
};
use rand::Rng;

#[test]
fn simplex_projection_matches_brute_force() {
    for seed in 0..200u64 {
        let mut rng = seeded(seed);
        let k = rng.random_range(2..=4usize);
        let eps = if seed % 3 == 0 { 0.0 } else { 1e-4 };
        let v: Vec<f64> = (0..k).map(|_| rng.random_range(-2.0..2.0)).collect();
        let got = project_simplex(&v, eps);
        let want = brute_simplex_projection(&v, eps);
        let d_got: f64 = got.iter().zip(&v).map(|(a, b)| (a - b) * (a - b)).sum();
        let d_want: f64 = want.iter().zip(&v).map(|(a, b)| (a - b) * (a - b)).sum();
        assert!(
            d_got <= d_want + 1e-6,
            "seed {seed}: {got:?} (d={d_got}) vs {want:?} (d={d_want})"
        );
        for (a, b) in got.iter().zip(&want) {
            assert!((a - b).abs() < 1e-6, "seed {seed}: {got:?} vs {want:?}");
        }
    }
}

#[test]
fn monotone_projection_matches_brute_force() {
    for seed in 0..200u64 {
        let mut rng = seeded(1000 + seed);
        let n = rng.random_range(2..=4usize);
        let eps = if seed % 4 == 0 { 0.1 } else { 0.0 };
        let v: Vec<f64> = (0..n).map(|_| rng.random_range(-3.0..3.0)).collect();
        let got = project_monotone(&v, eps);
        let want = brute_monotone_projection(&v, eps);
        for (a, b) in got.iter().zip(&want) {
            assert!((a - b).abs() < 1e-9, "seed {seed}: {got:?} vs {want:?}");
        }
    }
}

#[test]
fn projections_are_nonexpansive() {
    for seed in 0..100u64 {
        let mut rng = seeded(2000 + seed);
        let k = rng.random_range(2..=6usize);
        let u: Vec<f64> = (0..k).map(|_| rng.random_range(-3.0..3.0)).collect();
        let v: Vec<f64> = (0..k).map(|_| rng.random_range(-3.0..3.0)).collect();
        let dist = |a: &[f64], b: &[f64]| -> f64 {
            a.iter()
                .zip(b)
                .map(|(x, y)| (x - y) * (x - y))
                .sum::<f64>()
                .sqrt()
        };
        let pu = project_simplex(&u, 1e-6);
        let pv = project_simplex(&v, 1e-6);
        assert!(dist(&pu, &pv) <= dist(&u, &v) + 1e-12);
        let mu = project_monotone(&u, 0.01);
        let mv = project_monotone(&v, 0.01);
        assert!(dist(&mu, &mv) <= dist(&u, &v) + 1e-12);
    }
}

#[test]
fn projections_are_idempotent() {
    for seed in 0..100u64 {
        let mut rng = seeded(3000 + seed);
        let k = rng.random_range(2..=6usize);
        let v: Vec<f64> = (0..k).map(|_| rng.random_range(-3.0..3.0)).collect();
        let p = project_simplex(&v, 1e-8);
        let pp = project_simplex(&p, 1e-8);
        for (a, b) in p.iter().zip(&pp) {
            assert!((a - b).abs() < 1e-12);
        }
        let m = project_monotone(&v, 0.05);
        let mm = project_monotone(&m, 0.05);
        for (a, b) in m.iter().zip(&mm) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}

fn tight_cfg() -> SolverConfig {
    SolverConfig {
        max_inner_iters: 50_000,
        inner_step_tol: 1e-15,
        ..SolverConfig::default()
    }
}

// Random tiny instance: sorted Y columns, sorted Q columns, interior X.
fn random_instance(
    seed: u64,
    n: usize,
    k: usize,
    windows: usize,
) -> (Vec<QuantileVector>, Vec<SimplexWeight>, WindowedSeries) {
    let mut rng = seeded(seed);
    let q: Vec<QuantileVector> = (0..k)
        .map(|_| QuantileVector::new(random_sorted(&mut rng, n, 3.0)).unwrap())
        .collect();
    let x: Vec<SimplexWeight> = (0..windows)
        .map(|_| SimplexWeight::new(random_interior_simplex(&mut rng, k, 0.0)).unwrap())
        .collect();
    let y: Vec<Vec<f64>> = (0..windows)
        .map(|_| random_sorted(&mut rng, n, 3.0))
        .collect();
    let series =
        WindowedSeries::new(y, (0..windows).map(|i| i * n).collect(), n, n).unwrap();
    (q, x, series)
}

#[test]
fn x_step_matches_column_qp_oracle() {
    // With lambda_x = 0 the X problem separates by column; compare against
    // the active-set QP oracle per column.
    for seed in 0..40u64 {
        let mut rng = seeded(4000 + seed);
        let n = rng.random_range(2..=4usize);
        let k = rng.random_range(2..=4usize);
        let windows = rng.random_range(1..=4usize);
        let (q, x, series) = random_instance(4000 + seed, n, k, windows);
        let cfg = SolverConfig {
            eps_simplex: 0.0,
            ..tight_cfg()
        };
        let out = solve_x_step(&q, &x, &series, &RegularizerWeights::zero(), &cfg).unwrap();
        let qraw: Vec<Vec<f64>> = q.iter().map(|c| c.values().to_vec()).collect();
        for i in 0..windows {
            let got = x_column_objective(&qraw, series.column(i), out[i].weights());
            let (want, _) = brute_x_column_qp(&qraw, series.column(i), 0.0);
            assert!(
                got <= want + 1e-6,
                "seed {seed} col {i}: {got} vs oracle {want}"
            );
        }
    }
}

#[test]
fn q_step_matches_dense_qp_oracle() {
    for seed in 0..40u64 {
        let mut rng = seeded(5000 + seed);
        let n = rng.random_range(2..=3usize);
        let k = 2usize;
        let windows = rng.random_range(2..=4usize);
        let lambda_q = if seed % 2 == 0 { 0.0 } else { 0.05 };
        let (q, x, series) = random_instance(5000 + seed, n, k, windows);
        let cfg = tight_cfg();
        let weights = RegularizerWeights::new(0.0, lambda_q).unwrap();
        let out = solve_q_step(&q, &x, &series, &weights, &cfg).unwrap();
        let out_raw: Vec<Vec<f64>> = out.iter().map(|c| c.values().to_vec()).collect();
        let x_raw: Vec<Vec<f64>> = x.iter().map(|c| c.weights().to_vec()).collect();
        let got = q_objective(&out_raw, &x_raw, series.columns(), lambda_q);
        let (want, _) = brute_q_qp(&x_raw, series.columns(), n, k, lambda_q, cfg.eps_mono);
        assert!(
            got <= want + 1e-6,
            "seed {seed}: {got} vs oracle {want} (lambda_q={lambda_q})"
        );
    }
}

#[test]
fn both_steps_descend_on_100_seeded_trials() {
    for seed in 0..100u64 {
        let (q, x, series) = random_instance(6000 + seed, 4, 2, 3);
        let weights = RegularizerWeights::new(0.02, 0.01).unwrap();
        let cfg = SolverConfig::default();
        let before = data_fit_objective(&series, &q, &x)
            + 0.02 * dwb_core::regularizers::latent_path_penalty(&x).unwrap()
            + 0.01
                * 3.0
                * dwb_core::regularizers::pure_state_spread_penalty(&q).unwrap();
        let x2 = solve_x_step(&q, &x, &series, &weights, &cfg).unwrap();
        let mid = data_fit_objective(&series, &q, &x2)
            + 0.02 * dwb_core::regularizers::latent_path_penalty(&x2).unwrap()
            + 0.01
                * 3.0
                * dwb_core::regularizers::pure_state_spread_penalty(&q).unwrap();
        assert!(mid <= before + 1e-10, "seed {seed}: X-step increased");
        let q2 = solve_q_step(&q, &x2, &series, &weights, &cfg).unwrap();
        let after = data_fit_objective(&series, &q2, &x2)
            + 0.02 * dwb_core::regularizers::latent_path_penalty(&x2).unwrap()
            + 0.01
                * 3.0
                * dwb_core::regularizers::pure_state_spread_penalty(&q2).unwrap();
        assert!(after <= mid + 1e-10, "seed {seed}: Q-step increased");
    }
}

#[test]
fn noiseless_self_consistency_reaches_tiny_data_fit() {
    // Y generated exactly from feasible (Q*, X*) with no regularization:
    // coordinate descent drives the data fit to numerical zero.
    let n = 8usize;
    let truth_q = vec![
        QuantileVector::new((0..n).map(|j| j as f64).collect()).unwrap(),
        QuantileVector::new((0..n).map(|j| 10.0 + 1.5 * j as f64).collect()).unwrap(),
    ];
    let truth_x: Vec<SimplexWeight> = [0.9, 0.6, 0.5, 0.3, 0.15, 0.8]
        .iter()
        .map(|&a| SimplexWeight::new(vec![a, 1.0 - a]).unwrap())
        .collect();
    let y: Vec<Vec<f64>> = truth_x
        .iter()
        .map(|x| {
            (0..n)
                .map(|j| {
                    x.weights()[0] * truth_q[0].values()[j] + x.weights()[1] * truth_q[1].values()[j]
                })
                .collect()
        })
        .collect();
    let series = WindowedSeries::new(y, (0..6).map(|i| i * n).collect(), n, n).unwrap();

    // Standard initialization path: affinity, spectral labels, cluster means,
    // centroid latent path.
    let affinity = dwb_core::init::window_affinity(&series);
    let labels = dwb_core::init::spectral_cluster(&affinity.similarity(1.0), 2, 0).unwrap();
    let q0 = dwb_core::init::initial_pure_states(&series, &labels, 2).unwrap();
    let x0 = dwb_core::init::initial_latent_path(2, 6);

    let cfg = SolverConfig {
        eta_abs: Some(0.0),
        max_outer_iters: 3000,
        max_inner_iters: 3000,
        inner_step_tol: 1e-16,
        ..SolverConfig::default()
    };
    let run = coordinate_descent(
        &series,
        QBlock::Nonparametric(q0),
        &x0,
        &RegularizerWeights::zero(),
        &cfg,
    )
    .unwrap();
    let final_fit = run.trace.last().unwrap().data_fit;
    assert!(final_fit <= 1e-8, "data fit stalled at {final_fit}");
}

#[test]
fn data_fit_gradient_matches_central_differences() {
    for seed in 0..25u64 {
        let (q, x, series) = random_instance(7000 + seed, 4, 3, 3);
        let (gq, gx) = data_fit_gradient(&series, &q, &x);
        let h = 1e-6;
        // Probe Q entries.
        let mut qr: Vec<Vec<f64>> = q.iter().map(|c| c.values().to_vec()).collect();
        for k in 0..3 {
            for j in 0..4 {
                let orig = qr[k][j];
                qr[k][j] = orig + h;
                let qp: Vec<QuantileVector> = qr
                    .iter()
                    .map(|c| {
                        let mut s = c.clone();
                        s.sort_by(f64::total_cmp);
                        QuantileVector::new(s).unwrap()
                    })
                    .collect();
                qr[k][j] = orig - h;
                let qm: Vec<QuantileVector> = qr
                    .iter()
                    .map(|c| {
                        let mut s = c.clone();
                        s.sort_by(f64::total_cmp);
                        QuantileVector::new(s).unwrap()
                    })
                    .collect();
                qr[k][j] = orig;
                let fd = (data_fit_objective(&series, &qp, &x)
                    - data_fit_objective(&series, &qm, &x))
                    / (2.0 * h);
                // Skip probes whose perturbation would reorder the column.
                let reorders = (j > 0 && qr[k][j - 1] > orig - h)
                    || (j + 1 < 4 && qr[k][j + 1] < orig + h);
                if !reorders {
                    assert!(
                        (gq[k][j] - fd).abs() <= 1e-4 * fd.abs().max(1.0),
                        "seed {seed} q[{k}][{j}]: {} vs {}",
                        gq[k][j],
                        fd
                    );
                }
            }
        }
        // Probe X entries (raw partials; no simplex re-projection).
        for i in 0..3 {
            for k in 0..3 {
                let mut wp: Vec<Vec<f64>> = x.iter().map(|c| c.weights().to_vec()).collect();
                let mut wm = wp.clone();
                wp[i][k] += h;
                wm[i][k] -= h;
                let fd_eval = |cols: &[Vec<f64>]| {
                    let n = series.window_size() as f64;
                    let mut total = 0.0;
                    for (yi, xi) in series.columns().iter().zip(cols) {
                        for j in 0..series.window_size() {
                            let b: f64 =
                                q.iter().zip(xi.iter()).map(|(qc, w)| w * qc.values()[j]).sum();
                            total += (yi[j] - b) * (yi[j] - b);
                        }
                    }
                    total / n
                };
                let fd = (fd_eval(&wp) - fd_eval(&wm)) / (2.0 * h);
                assert!(
                    (gx[i][k] - fd).abs() <= 1e-4 * fd.abs().max(1.0),
                    "seed {seed} x[{i}][{k}]: {} vs {}",
                    gx[i][k],
                    fd
                );
            }
        }
    }
}
