//! Analytic reference distributions and the scalar special functions they
//! need: `erf`/`erfc` (Cody's rational approximations) and the inverse normal
//! CDF (Acklam's rational approximation polished by one Halley step).

use serde::{Deserialize, Serialize};

use crate::error::{DwbError, Result};

/// Maximum nesting depth for mixture components.
pub const MAX_MIXTURE_DEPTH: usize = 2;

const FRAC_1_SQRT_PI: f64 = 0.5641895835477562869;
const SQRT_2: f64 = std::f64::consts::SQRT_2;

/// Error function, |relative error| below 1e-15 over the real line.
///
/// Three-region rational approximation after W. J. Cody (1969), the SPECFUN
/// `CALERF` coefficients.
pub fn erf(x: f64) -> f64 {
    let y = x.abs();
    if y <= 0.46875 {
        erf_small(x)
    } else {
        let e = erfc_positive(y);
        if x >= 0.0 {
            1.0 - e
        } else {
            e - 1.0
        }
    }
}

/// Complementary error function.
pub fn erfc(x: f64) -> f64 {
    let y = x.abs();
    if y <= 0.46875 {
        1.0 - erf_small(x)
    } else if x > 0.0 {
        erfc_positive(y)
    } else {
        2.0 - erfc_positive(y)
    }
}

fn erf_small(x: f64) -> f64 {
    const A: [f64; 5] = [
        3.16112374387056560e0,
        1.13864154151050156e2,
        3.77485237685302021e2,
        3.20937758913846947e3,
        1.85777706184603153e-1,
    ];
    const B: [f64; 4] = [
        2.36012909523441209e1,
        2.44024637934444173e2,
        1.28261652607737228e3,
        2.84423683343917062e3,
    ];
    let z = x * x;
    let mut num = A[4] * z;
    let mut den = z;
    for i in 0..3 {
        num = (num + A[i]) * z;
        den = (den + B[i]) * z;
    }
    x * (num + A[3]) / (den + B[3])
}

// erfc(y) for y > 0.46875.
fn erfc_positive(y: f64) -> f64 {
    const C: [f64; 9] = [
        5.64188496988670089e-1,
        8.88314979438837594e0,
        6.61191906371416295e1,
        2.98635138197400131e2,
        8.81952221241769090e2,
        1.71204761263407058e3,
        2.05107837782607147e3,
        1.23033935479799725e3,
        2.15311535474403846e-8,
    ];
    const D: [f64; 8] = [
        1.57449261107098347e1,
        1.17693950891312499e2,
        5.37181101862009858e2,
        1.62138957456669019e3,
        3.29079923573345963e3,
        4.36261909014324716e3,
        3.43936767414372164e3,
        1.23033935480374942e3,
    ];
    const P: [f64; 6] = [
        3.05326634961232344e-1,
        3.60344899949804439e-1,
        1.25781726111229246e-1,
        1.60837851487422766e-2,
        6.58749161529837803e-4,
        1.63153871373020978e-2,
    ];
    const Q: [f64; 5] = [
        2.56852019228982242e0,
        1.87295284992346047e0,
        5.27905102951428412e-1,
        6.05183413124413191e-2,
        2.33520497626869185e-3,
    ];

    if y > 26.5 {
        return 0.0;
    }
    let result = if y <= 4.0 {
        let mut num = C[8] * y;
        let mut den = y;
        for i in 0..7 {
            num = (num + C[i]) * y;
            den = (den + D[i]) * y;
        }
        (num + C[7]) / (den + D[7])
    } else {
        let z = 1.0 / (y * y);
        let mut num = P[5] * z;
        let mut den = z;
        for i in 0..4 {
            num = (num + P[i]) * z;
            den = (den + Q[i]) * z;
        }
        let r = z * (num + P[4]) / (den + Q[4]);
        (FRAC_1_SQRT_PI - r) / y
    };
    // exp(-y^2) split to limit rounding in the argument.
    let ysq = (y * 16.0).trunc() / 16.0;
    let del = (y - ysq) * (y + ysq);
    (-ysq * ysq).exp() * (-del).exp() * result
}

/// Standard normal CDF.
pub fn norm_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / SQRT_2)
}

/// Standard normal density.
pub fn norm_pdf(x: f64) -> f64 {
    (-(0.5) * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// Inverse standard normal CDF.
///
/// Acklam's rational approximation (absolute error below 1.2e-9) followed by
/// one Halley refinement against [`norm_cdf`], which brings the result to
/// near machine precision.
pub fn norm_ppf(p: f64) -> f64 {
    if p <= 0.0 {
        return f64::NEG_INFINITY;
    }
    if p >= 1.0 {
        return f64::INFINITY;
    }

    const A: [f64; 6] = [
        -3.969683028665376e1,
        2.209460984245205e2,
        -2.759285104469687e2,
        1.383577518672690e2,
        -3.066479806614716e1,
        2.506628277459239e0,
    ];
    const B: [f64; 5] = [
        -5.447609879822406e1,
        1.615858368580409e2,
        -1.556989798598866e2,
        6.680131188771972e1,
        -1.328068155288572e1,
    ];
    const C: [f64; 6] = [
        -7.784894002430293e-3,
        -3.223964580411365e-1,
        -2.400758277161838e0,
        -2.549732539343734e0,
        4.374664141464968e0,
        2.938163982698783e0,
    ];
    const D: [f64; 4] = [
        7.784695709041462e-3,
        3.224671290700398e-1,
        2.445134137142996e0,
        3.754408661907416e0,
    ];
    const P_LOW: f64 = 0.02425;

    let x = if p < P_LOW {
        let q = (-2.0 * p.ln()).sqrt();
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else if p <= 1.0 - P_LOW {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    } else {
        let q = (-2.0 * (1.0 - p).ln()).sqrt();
        -(((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    };

    // Halley step on f(x) = norm_cdf(x) - p.
    let e = norm_cdf(x) - p;
    let u = e * (2.0 * std::f64::consts::PI).sqrt() * (0.5 * x * x).exp();
    x - u / (1.0 + 0.5 * x * u)
}

/// An exactly-evaluable univariate distribution used for ground truth.
///
/// Gaussian and uniform components have closed-form quantile functions;
/// mixtures are inverted by bisection on the CDF. A point mass covers the
/// degenerate cases (delta components, zero-variance states).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum AnalyticDistribution {
    /// Normal with the given mean and standard deviation.
    Gaussian { mean: f64, std: f64 },
    /// Uniform on [lo, hi].
    Uniform { lo: f64, hi: f64 },
    /// Unit mass at a single point.
    Dirac { value: f64 },
    /// Finite mixture; weights lie on the simplex, nesting depth capped at 2.
    Mixture {
        components: Vec<(f64, AnalyticDistribution)>,
    },
}

impl AnalyticDistribution {
    pub fn gaussian(mean: f64, std: f64) -> Result<Self> {
        if !(std > 0.0) || !std.is_finite() || !mean.is_finite() {
            return Err(DwbError::InvalidInput(format!(
                "gaussian requires finite mean and std > 0, got mean={mean}, std={std}"
            )));
        }
        Ok(Self::Gaussian { mean, std })
    }

    /// Gaussian specified by variance, matching the notation used for the
    /// simulation presets.
    pub fn gaussian_var(mean: f64, variance: f64) -> Result<Self> {
        if !(variance > 0.0) {
            return Err(DwbError::InvalidInput(format!(
                "gaussian variance must be > 0, got {variance}"
            )));
        }
        Self::gaussian(mean, variance.sqrt())
    }

    pub fn uniform(lo: f64, hi: f64) -> Result<Self> {
        if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
            return Err(DwbError::InvalidInput(format!(
                "uniform requires lo < hi, got [{lo}, {hi}]"
            )));
        }
        Ok(Self::Uniform { lo, hi })
    }

    pub fn dirac(value: f64) -> Result<Self> {
        if !value.is_finite() {
            return Err(DwbError::InvalidInput("dirac value must be finite".into()));
        }
        Ok(Self::Dirac { value })
    }

    pub fn mixture(components: Vec<(f64, AnalyticDistribution)>) -> Result<Self> {
        if components.is_empty() {
            return Err(DwbError::InvalidInput("mixture needs components".into()));
        }
        let total: f64 = components.iter().map(|(w, _)| *w).sum();
        if components.iter().any(|(w, _)| *w < 0.0) || (total - 1.0).abs() > 1e-9 {
            return Err(DwbError::InvalidInput(format!(
                "mixture weights must be on the simplex (sum={total})"
            )));
        }
        let dist = Self::Mixture { components };
        if dist.depth() > MAX_MIXTURE_DEPTH {
            return Err(DwbError::InvalidInput(format!(
                "mixture depth exceeds {MAX_MIXTURE_DEPTH}"
            )));
        }
        Ok(dist)
    }

    fn depth(&self) -> usize {
        match self {
            Self::Mixture { components } => {
                1 + components
                    .iter()
                    .map(|(_, c)| c.depth())
                    .max()
                    .unwrap_or(0)
            }
            _ => 0,
        }
    }

    /// Cumulative distribution function.
    pub fn cdf(&self, x: f64) -> f64 {
        match self {
            Self::Gaussian { mean, std } => norm_cdf((x - mean) / std),
            Self::Uniform { lo, hi } => ((x - lo) / (hi - lo)).clamp(0.0, 1.0),
            Self::Dirac { value } => {
                if x >= *value {
                    1.0
                } else {
                    0.0
                }
            }
            Self::Mixture { components } => {
                components.iter().map(|(w, c)| w * c.cdf(x)).sum()
            }
        }
    }

    /// Generalized inverse CDF, `inf { g : P(g) >= xi }`.
    ///
    /// Closed form where available; mixtures fall back to bisection with a
    /// geometrically expanded bracket. Near-delta components take the same
    /// path as everything else.
    pub fn quantile(&self, xi: f64) -> f64 {
        match self {
            Self::Gaussian { mean, std } => mean + std * norm_ppf(xi),
            Self::Uniform { lo, hi } => lo + (hi - lo) * xi.clamp(0.0, 1.0),
            Self::Dirac { value } => *value,
            Self::Mixture { .. } => self.quantile_by_bisection(xi),
        }
    }

    fn quantile_by_bisection(&self, xi: f64) -> f64 {
        let xi = xi.clamp(0.0, 1.0);
        if xi <= 0.0 {
            return self.support_lo();
        }

        // Bracket [lo, hi] with cdf(lo) < xi <= cdf(hi).
        let mut lo = -1.0;
        let mut hi = 1.0;
        let mut span = 1.0;
        for _ in 0..2100 {
            if self.cdf(lo) < xi {
                break;
            }
            span *= 2.0;
            lo -= span;
        }
        span = 1.0;
        for _ in 0..2100 {
            if self.cdf(hi) >= xi {
                break;
            }
            span *= 2.0;
            hi += span;
        }

        // Bisection on the predicate cdf(g) >= xi converges to the
        // generalized inverse even across CDF jumps. Stops once the interval
        // cannot be split further; xi-space slack 1e-10 allows early exit on
        // smooth stretches.
        for _ in 0..400 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            let c = self.cdf(mid);
            if c >= xi {
                hi = mid;
                if (c - xi).abs() <= 1e-10 && (hi - lo) <= 1e-12 * (1.0 + mid.abs()) {
                    break;
                }
            } else {
                lo = mid;
            }
        }
        hi
    }

    fn support_lo(&self) -> f64 {
        match self {
            Self::Gaussian { .. } => f64::NEG_INFINITY,
            Self::Uniform { lo, .. } => *lo,
            Self::Dirac { value } => *value,
            Self::Mixture { components } => components
                .iter()
                .map(|(_, c)| c.support_lo())
                .fold(f64::INFINITY, f64::min),
        }
    }

    /// Distribution mean (exact).
    pub fn mean(&self) -> f64 {
        match self {
            Self::Gaussian { mean, .. } => *mean,
            Self::Uniform { lo, hi } => 0.5 * (lo + hi),
            Self::Dirac { value } => *value,
            Self::Mixture { components } => {
                components.iter().map(|(w, c)| w * c.mean()).sum()
            }
        }
    }
}
