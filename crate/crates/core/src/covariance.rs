//! Discretized covariance of the limiting Gaussian process, built from
//! plug-in estimators.
//!
//! The single-sample covariance is `S(s) S(t) a(min(s,t))` with
//! `a(x) = int_0^x f(t) / (S(t) * S_X(t)) dt`, where `S` is the KM curve,
//! `f` the smoothed density, and `S_X` the empirical observed survival
//! standing in for `S * H_C` (a reverse-KM denominator is available as a
//! configuration switch). The pooled process covariance is the
//! `(1-lambda, lambda)` convex combination over the two samples.

use crate::density::KernelDensity;
use crate::error::{Error, Result};
use crate::estimators::{censoring_km, empirical_observed_survival, km_fit, SurvivalSample};
use crate::mvn::{factor_psd, JitterPolicy};
use nalgebra::DMatrix;

/// Grid points where both per-sample plug-in variances sit below this are
/// dropped before pooling; they would make the MVN input singular.
pub const VARIANCE_DROP_TOL: f64 = 1e-12;

/// Evaluation grid on (0, tau].
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    tau: f64,
    points: Vec<f64>,
}

impl Grid {
    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// A grid with an explicit point set (used after dropping degenerate
    /// points); points must be strictly increasing in (0, tau].
    pub fn with_points(tau: f64, points: Vec<f64>) -> Result<Self> {
        if !(tau > 0.0) {
            return Err(Error::InvalidParameter(format!("tau must be > 0, got {tau}")));
        }
        if points.is_empty()
            || points[0] <= 0.0
            || points.windows(2).any(|w| w[0] >= w[1])
            || *points.last().unwrap() > tau
        {
            return Err(Error::InvalidParameter(
                "grid points must be strictly increasing in (0, tau]".into(),
            ));
        }
        Ok(Self { tau, points })
    }
}

/// `tau = min(max observed time of T, max observed time of U)`.
pub fn compute_tau(sample_t: &SurvivalSample, sample_u: &SurvivalSample) -> f64 {
    sample_t.max_time().min(sample_u.max_time())
}

/// Equally spaced grid `tau_i = i * tau / m`, `i = 1..m` (0 excluded: the
/// process is degenerate there).
pub fn build_grid(tau: f64, m: usize) -> Result<Grid> {
    if !(tau > 0.0) || !tau.is_finite() {
        return Err(Error::InvalidParameter(format!("tau must be > 0, got {tau}")));
    }
    if m < 2 {
        return Err(Error::InvalidParameter(format!("grid size must be >= 2, got {m}")));
    }
    let points = (1..=m)
        .map(|i| tau * (i as f64 / m as f64))
        .collect::<Vec<_>>();
    Ok(Grid { tau, points })
}

/// Which plug-in estimates the denominator product `S_T * H_C`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum DenominatorPlugin {
    /// Empirical observed-time survival `#{X > t}/n` (one object, no 0*inf
    /// artifacts at the largest observation).
    Empirical,
    /// Product of the KM curve and the reverse-KM censoring survival.
    ReverseKm,
}

/// Tunables of the covariance construction with the spec'd defaults.
#[derive(Debug, Clone, Copy)]
pub struct CovarianceConfig {
    /// Sub-refinement factor of each grid cell for the trapezoid rule.
    pub refine: usize,
    /// Lower clamp applied to each survival factor in the denominator.
    pub denominator_floor: f64,
    pub denominator: DenominatorPlugin,
}

impl Default for CovarianceConfig {
    fn default() -> Self {
        Self {
            refine: 10,
            denominator_floor: 1e-3,
            denominator: DenominatorPlugin::Empirical,
        }
    }
}

/// Cumulative plug-in estimate of `a` at every grid point.
///
/// Trapezoid rule over a sub-grid refining each cell `refine`-fold, starting
/// from 0. Denominator factors are clamped below at `denominator_floor`;
/// if either plug-in survival is non-positive over more than the trailing
/// half of the integration range, assumption A1 is considered violated.
pub fn a_integral(
    sample: &SurvivalSample,
    grid: &Grid,
    density: &KernelDensity,
    config: &CovarianceConfig,
) -> Result<Vec<f64>> {
    if config.refine == 0 {
        return Err(Error::InvalidParameter("refine must be >= 1".into()));
    }
    let km = km_fit(sample);
    let emp = empirical_observed_survival(sample);
    let rev = match config.denominator {
        DenominatorPlugin::Empirical => None,
        DenominatorPlugin::ReverseKm => Some(censoring_km(sample)),
    };
    let floor = config.denominator_floor;

    let mut a_values = Vec::with_capacity(grid.len());
    let mut cum = 0.0;
    let mut prev_t = 0.0;
    let mut nonpositive = 0usize;
    let mut total_points = 0usize;

    let integrand = |t: f64, nonpositive: &mut usize| -> f64 {
        let s_km = km.eval(t);
        let s_x = match &rev {
            None => emp.eval(t),
            Some(h) => s_km * h.eval(t),
        };
        if s_km <= 0.0 || s_x <= 0.0 {
            *nonpositive += 1;
        }
        density.eval(t) / (s_km.max(floor) * s_x.max(floor))
    };

    let mut prev_f = integrand(0.0, &mut nonpositive);
    total_points += 1;
    for &gp in grid.points() {
        let step = (gp - prev_t) / config.refine as f64;
        for k in 1..=config.refine {
            let t = if k == config.refine { gp } else { prev_t + k as f64 * step };
            let f = integrand(t, &mut nonpositive);
            total_points += 1;
            cum += 0.5 * (prev_f + f) * (t - (prev_t + (k - 1) as f64 * step));
            prev_f = f;
        }
        a_values.push(cum);
        prev_t = gp;
    }

    if nonpositive * 2 > total_points {
        return Err(Error::A1Violation {
            nonpositive,
            total: total_points,
        });
    }
    Ok(a_values)
}

/// One sample's discretized Gaussian-process covariance on a grid.
#[derive(Debug, Clone)]
pub struct SingleCovariance {
    pub grid: Grid,
    pub matrix: DMatrix<f64>,
    pub survival: Vec<f64>,
    pub a_values: Vec<f64>,
}

/// `cov(i,j) = S(tau_i) S(tau_j) a(tau_min(i,j))`.
pub fn single_sample_cov(
    sample: &SurvivalSample,
    grid: &Grid,
    density: &KernelDensity,
    config: &CovarianceConfig,
) -> Result<SingleCovariance> {
    let a = a_integral(sample, grid, density, config)?;
    let km = km_fit(sample);
    let s: Vec<f64> = grid.points().iter().map(|&t| km.eval(t)).collect();
    let m = grid.len();
    let matrix = DMatrix::from_fn(m, m, |i, j| s[i] * s[j] * a[i.min(j)]);
    Ok(SingleCovariance {
        grid: grid.clone(),
        matrix,
        survival: s,
        a_values: a,
    })
}

/// Numerical repair and degeneracy bookkeeping of a pooled covariance.
#[derive(Debug, Clone, serde::Serialize)]
pub struct CovarianceDiagnostics {
    pub min_eigenvalue: f64,
    pub jitter_applied: f64,
    pub dropped_points: usize,
    pub dropped_times: Vec<f64>,
}

/// The pooled covariance restricted to non-degenerate grid points.
#[derive(Debug, Clone)]
pub struct CovarianceModel {
    pub grid: Grid,
    pub matrix: DMatrix<f64>,
    pub lambda: f64,
    pub diagnostics: CovarianceDiagnostics,
}

/// `(1 - lambda) cov_T + lambda cov_U` with symmetrization, degenerate-point
/// dropping, and a factorization probe that records the jitter needed.
pub fn pooled_cov(
    cov_t: &SingleCovariance,
    cov_u: &SingleCovariance,
    lambda: f64,
) -> Result<CovarianceModel> {
    if !(lambda > 0.0 && lambda < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "lambda must be in (0,1), got {lambda}"
        )));
    }
    if cov_t.grid != cov_u.grid {
        return Err(Error::GridMismatch);
    }
    let m = cov_t.grid.len();
    let keep: Vec<usize> = (0..m)
        .filter(|&i| {
            !(cov_t.matrix[(i, i)] < VARIANCE_DROP_TOL && cov_u.matrix[(i, i)] < VARIANCE_DROP_TOL)
        })
        .collect();
    let dropped_times: Vec<f64> = (0..m)
        .filter(|i| !keep.contains(i))
        .map(|i| cov_t.grid.points()[i])
        .collect();
    if keep.is_empty() {
        return Err(Error::InvalidParameter(
            "all grid points degenerate in both samples".into(),
        ));
    }

    let k = keep.len();
    let mut pooled = DMatrix::zeros(k, k);
    for (r, &i) in keep.iter().enumerate() {
        for (c, &j) in keep.iter().enumerate() {
            pooled[(r, c)] =
                (1.0 - lambda) * cov_t.matrix[(i, j)] + lambda * cov_u.matrix[(i, j)];
        }
    }
    // symmetrize (exact up to rounding; the construction is symmetric)
    let pooled = 0.5 * (&pooled + pooled.transpose());

    let min_eigenvalue = pooled
        .clone()
        .symmetric_eigen()
        .eigenvalues
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min);

    let (_, jitter_applied) = factor_psd(&pooled, &JitterPolicy::default())?;

    let points: Vec<f64> = keep.iter().map(|&i| cov_t.grid.points()[i]).collect();
    let grid = Grid::with_points(cov_t.grid.tau(), points)?;
    Ok(CovarianceModel {
        grid,
        matrix: pooled,
        lambda,
        diagnostics: CovarianceDiagnostics {
            min_eigenvalue,
            jitter_applied,
            dropped_points: dropped_times.len(),
            dropped_times,
        },
    })
}
