//! End-to-end model fitting: windowing, clustering-based initialization, and
//! coordinate descent, for both the non-parametric and the Gaussian-state
//! variants.

use serde::{Deserialize, Serialize};

use crate::error::{DwbError, Result};
use crate::init::{initial_latent_path, initial_pure_states, spectral_cluster, window_affinity};
use crate::ot::{QuantileVector, SimplexWeight, WindowedSeries};
use crate::regularizers::RegularizerWeights;
use crate::solver::{
    coordinate_descent, probit_grid, GaussianState, ObjectiveState, QBlock, SolverConfig,
};

/// Which pure-state parameterization a fit uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    Nonparametric,
    Gaussian,
}

/// Everything a fit needs besides the series itself.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitConfig {
    /// Sample window size n (also the quantile discretization level).
    pub window: usize,
    /// Spacing between window start indices; defaults to `window`.
    pub stride: usize,
    /// Number of pure states K.
    pub states: usize,
    pub weights: RegularizerWeights,
    pub solver: SolverConfig,
    pub seed: u64,
    pub variant: Variant,
    /// Similarity bandwidth for initialization, `exp(-gamma * A)`.
    pub init_gamma: f64,
}

impl FitConfig {
    pub fn new(window: usize, states: usize, weights: RegularizerWeights) -> Self {
        Self {
            window,
            stride: window,
            states,
            weights,
            solver: SolverConfig::default(),
            seed: 0,
            variant: Variant::Nonparametric,
            init_gamma: 1.0,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.states < 2 {
            return Err(DwbError::InvalidInput("need K >= 2 states".into()));
        }
        if self.window < self.states {
            return Err(DwbError::InvalidInput(format!(
                "window n={} must be at least K={}",
                self.window, self.states
            )));
        }
        if self.stride == 0 {
            return Err(DwbError::InvalidInput("stride must be >= 1".into()));
        }
        Ok(())
    }
}

/// How the initializer was configured, recorded alongside the fit.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InitMetadata {
    pub labels: Vec<usize>,
    pub laplacian: String,
    pub kmeans_restarts: usize,
    pub gamma: f64,
    pub seed: u64,
    pub eta_effective: f64,
}

/// A fitted model: pure states, latent path, loss trace, and provenance.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DwbModel {
    pub variant: Variant,
    /// Pure-state columns, always materialized at the window discretization.
    pub q: Vec<QuantileVector>,
    /// Per-state (mean, std) when the Gaussian variant was fit.
    pub gaussian_params: Option<Vec<GaussianState>>,
    /// Latent path, one simplex weight per window.
    pub x: Vec<SimplexWeight>,
    pub window_starts: Vec<usize>,
    pub loss_trace: Vec<ObjectiveState>,
    pub config: FitConfig,
    pub init: InitMetadata,
}

impl DwbModel {
    pub fn n(&self) -> usize {
        self.config.window
    }

    pub fn k(&self) -> usize {
        self.config.states
    }

    pub fn num_windows(&self) -> usize {
        self.x.len()
    }

    /// Final objective decomposition.
    pub fn final_loss(&self) -> ObjectiveState {
        *self.loss_trace.last().expect("trace is never empty")
    }
}

/// Cuts a series into `N = floor((T - n)/stride) + 1` sorted windows.
pub fn make_windows(series: &[f64], window: usize, stride: usize) -> Result<WindowedSeries> {
    if window == 0 {
        return Err(DwbError::EmptyWindow);
    }
    if stride == 0 {
        return Err(DwbError::InvalidInput("stride must be >= 1".into()));
    }
    if series.len() < window {
        return Err(DwbError::SeriesShorterThanWindow {
            len: series.len(),
            window,
        });
    }
    if series.iter().any(|v| !v.is_finite()) {
        return Err(DwbError::InvalidInput("series must be finite".into()));
    }
    let count = (series.len() - window) / stride + 1;
    let mut cols = Vec::with_capacity(count);
    let mut starts = Vec::with_capacity(count);
    for i in 0..count {
        let start = i * stride;
        let mut col = series[start..start + window].to_vec();
        col.sort_by(f64::total_cmp);
        cols.push(col);
        starts.push(start);
    }
    WindowedSeries::new(cols, starts, stride, window)
}

/// n-DQV of a Gaussian state: `q[j] = mu + sigma * Phi^{-1}((j-0.5)/n)`.
/// `sigma = 0` degenerates to the constant vector `mu`.
pub fn gaussian_state_dqv(mean: f64, std: f64, n: usize) -> Result<QuantileVector> {
    if n == 0 {
        return Err(DwbError::EmptyWindow);
    }
    if !(std >= 0.0) {
        return Err(DwbError::InvalidInput("sigma must be >= 0".into()));
    }
    let values = probit_grid(n)
        .into_iter()
        .map(|z| mean + std * z)
        .collect();
    QuantileVector::new(values)
}

struct InitializedFit {
    windows: WindowedSeries,
    q0: Vec<QuantileVector>,
    x0: Vec<SimplexWeight>,
    labels: Vec<usize>,
}

fn initialize(series: &[f64], config: &FitConfig) -> Result<InitializedFit> {
    config.validate()?;
    let windows = make_windows(series, config.window, config.stride)?;
    if windows.num_windows() < config.states {
        return Err(DwbError::InvalidInput(format!(
            "only {} windows for K={} states",
            windows.num_windows(),
            config.states
        )));
    }
    let affinity = window_affinity(&windows);
    let similarity = affinity.similarity(config.init_gamma);
    let labels = spectral_cluster(&similarity, config.states, config.seed)?;
    let q0 = initial_pure_states(&windows, &labels, config.states)?;
    let x0 = initial_latent_path(config.states, windows.num_windows());
    Ok(InitializedFit {
        windows,
        q0,
        x0,
        labels,
    })
}

/// Fits the non-parametric model: spectral initialization followed by
/// coordinate descent on free monotone quantile columns.
pub fn fit_nonparametric(series: &[f64], config: &FitConfig) -> Result<DwbModel> {
    let init = initialize(series, config)?;
    let run = coordinate_descent(
        &init.windows,
        QBlock::Nonparametric(init.q0),
        &init.x0,
        &config.weights,
        &config.solver,
    )?;
    Ok(DwbModel {
        variant: Variant::Nonparametric,
        q: run.q,
        gaussian_params: None,
        x: run.x,
        window_starts: init.windows.start_indices().to_vec(),
        loss_trace: run.trace,
        config: FitConfig {
            variant: Variant::Nonparametric,
            ..config.clone()
        },
        init: InitMetadata {
            labels: init.labels,
            laplacian: "symmetric-normalized".into(),
            kmeans_restarts: 10,
            gamma: config.init_gamma,
            seed: config.seed,
            eta_effective: run.eta_effective,
        },
    })
}

/// Fits the Gaussian-state baseline: identical pipeline and objective, but
/// the Q block is restricted to columns of the form `mu + sigma * probit`.
/// States are initialized by a moment fit of the cluster-mean columns.
pub fn fit_gaussian(series: &[f64], config: &FitConfig) -> Result<DwbModel> {
    let init = initialize(series, config)?;
    let params: Vec<GaussianState> = init
        .q0
        .iter()
        .map(|col| {
            let n = col.len() as f64;
            let mean = col.values().iter().sum::<f64>() / n;
            let var = col
                .values()
                .iter()
                .map(|v| (v - mean) * (v - mean))
                .sum::<f64>()
                / n;
            GaussianState {
                mean,
                std: var.sqrt().max(config.solver.sigma_floor),
            }
        })
        .collect();
    let run = coordinate_descent(
        &init.windows,
        QBlock::Gaussian(params),
        &init.x0,
        &config.weights,
        &config.solver,
    )?;
    Ok(DwbModel {
        variant: Variant::Gaussian,
        q: run.q,
        gaussian_params: run.gaussian_params,
        x: run.x,
        window_starts: init.windows.start_indices().to_vec(),
        loss_trace: run.trace,
        config: FitConfig {
            variant: Variant::Gaussian,
            ..config.clone()
        },
        init: InitMetadata {
            labels: init.labels,
            laplacian: "symmetric-normalized".into(),
            kmeans_restarts: 10,
            gamma: config.init_gamma,
            seed: config.seed,
            eta_effective: run.eta_effective,
        },
    })
}

/// Dispatches on `config.variant`.
pub fn fit(series: &[f64], config: &FitConfig) -> Result<DwbModel> {
    match config.variant {
        Variant::Nonparametric => fit_nonparametric(series, config),
        Variant::Gaussian => fit_gaussian(series, config),
    }
}
