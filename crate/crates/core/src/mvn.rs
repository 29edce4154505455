//! Multivariate-normal rectangle probabilities and Gaussian-process path
//! simulation.
//!
//! `mvn_upper_tail_sup` computes `P(max_i X_i > delta) = 1 - P(all X_i <= delta)`
//! for a mean-zero Gaussian vector by Genz sequential conditioning: after a
//! variable-reordered Cholesky factorization (smallest conditional CDF
//! interval first), the rectangle probability becomes an integral of a
//! product of conditional normal-CDF interval lengths over the unit cube,
//! evaluated with a randomized Kronecker lattice whose random shifts supply
//! the error estimate. `mc_sup_prob` is the plain Monte Carlo oracle over
//! simulated paths.

use crate::error::{Error, Result};
use crate::numerics::{std_normal_cdf, std_normal_pdf, std_normal_quantile, RngStream};
use nalgebra::DMatrix;
use rand::Rng;

/// Hard cap on the rectangle dimension.
pub const MAX_DIMENSION: usize = 1000;

/// Conditional variances below this are treated as point constraints.
const DEGENERATE_VAR: f64 = 1e-14;

/// Number of random lattice shifts; the error estimate is a Student-t 97.5%
/// half-width over their means.
const N_SHIFTS: usize = 12;
const T_975_11DF: f64 = 2.201;

/// Escalating-jitter policy for PSD repair.
#[derive(Debug, Clone, Copy)]
pub struct JitterPolicy {
    pub initial: f64,
    pub growth: f64,
    /// Failure cap as a multiple of the largest diagonal entry.
    pub cap_relative: f64,
}

impl Default for JitterPolicy {
    fn default() -> Self {
        Self {
            initial: 1e-10,
            growth: 10.0,
            cap_relative: 1e-6,
        }
    }
}

/// Result of a rectangle-probability computation.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct MvnResult {
    pub probability: f64,
    /// Estimated absolute error at ~95% confidence.
    pub error_estimate: f64,
    pub evaluations: u64,
    /// False when the evaluation budget ran out before reaching the accuracy
    /// target; the error estimate is still honest.
    pub converged: bool,
}

/// Lower-triangular L with `L L^T = matrix + jitter I`, pivot-free ordering.
/// Jitter escalates from the policy's initial value until a Cholesky
/// factorization succeeds; fails once it exceeds `cap_relative * max diagonal`.
pub fn factor_psd(matrix: &DMatrix<f64>, policy: &JitterPolicy) -> Result<(DMatrix<f64>, f64)> {
    let n = matrix.nrows();
    if n != matrix.ncols() {
        return Err(Error::InvalidParameter("matrix must be square".into()));
    }
    let max_diag = (0..n).map(|i| matrix[(i, i)]).fold(0.0_f64, f64::max);
    let cap = policy.cap_relative * max_diag;
    let mut jitter = 0.0;
    loop {
        let mut attempt = matrix.clone();
        for i in 0..n {
            attempt[(i, i)] += jitter;
        }
        if let Some(chol) = attempt.cholesky() {
            return Ok((chol.l(), jitter));
        }
        jitter = if jitter == 0.0 {
            policy.initial
        } else {
            jitter * policy.growth
        };
        if jitter > cap {
            return Err(Error::FactorizationFailed { jitter, cap });
        }
    }
}

/// The variable-reordered factorization used by the sequential-conditioning
/// integrand: row-major lower-triangular `l` and the permuted limits `b`.
struct OrderedFactor {
    l: Vec<f64>,
    b: Vec<f64>,
    dim: usize,
}

/// Greedy Genz ordering: at each step pick the remaining variable with the
/// smallest expected conditional interval `Phi(b~)`, then extend the
/// factorization. Degenerate pivots get `l[i][i] = 0` (point constraints).
fn reorder_cholesky(cov: &DMatrix<f64>, b_all: f64) -> OrderedFactor {
    let m = cov.nrows();
    let mut c: Vec<f64> = (0..m * m).map(|k| cov[(k / m, k % m)]).collect();
    let mut l = vec![0.0; m * m];
    let mut b = vec![b_all; m];
    let mut y = vec![0.0; m];

    for i in 0..m {
        // select the variable with the smallest conditional interval
        let mut best = i;
        let mut best_e = f64::INFINITY;
        for k in i..m {
            let mut s = 0.0;
            let mut ssq = 0.0;
            for j in 0..i {
                s += l[k * m + j] * y[j];
                ssq += l[k * m + j] * l[k * m + j];
            }
            let var = c[k * m + k] - ssq;
            let e = if var > DEGENERATE_VAR {
                std_normal_cdf((b[k] - s) / var.sqrt())
            } else if b[k] - s >= 0.0 {
                1.0
            } else {
                0.0
            };
            if e < best_e {
                best_e = e;
                best = k;
            }
        }
        if best != i {
            for j in 0..m {
                c.swap(i * m + j, best * m + j);
            }
            for r in 0..m {
                c.swap(r * m + i, r * m + best);
            }
            for j in 0..i {
                l.swap(i * m + j, best * m + j);
            }
            b.swap(i, best);
        }

        let mut ssq = 0.0;
        for j in 0..i {
            ssq += l[i * m + j] * l[i * m + j];
        }
        let var = c[i * m + i] - ssq;
        if var > DEGENERATE_VAR {
            let lii = var.sqrt();
            l[i * m + i] = lii;
            for k in (i + 1)..m {
                let mut dot = 0.0;
                for j in 0..i {
                    dot += l[i * m + j] * l[k * m + j];
                }
                l[k * m + i] = (c[k * m + i] - dot) / lii;
            }
            let mut mu = 0.0;
            for j in 0..i {
                mu += l[i * m + j] * y[j];
            }
            let bt = (b[i] - mu) / lii;
            let phi_bt = std_normal_cdf(bt);
            // E[Z | Z <= bt] for the ordering heuristic's conditional means
            y[i] = if phi_bt > 1e-300 {
                -std_normal_pdf(bt) / phi_bt
            } else {
                -bt.abs() - 1.0
            };
        } else {
            l[i * m + i] = 0.0;
            y[i] = 0.0;
        }
    }
    OrderedFactor { l, b, dim: m }
}

/// One evaluation of the sequential-conditioning integrand at `u` in
/// `[0,1]^(dim-1)`.
#[inline]
fn rectangle_integrand(f: &OrderedFactor, u: &[f64], y: &mut [f64]) -> f64 {
    let m = f.dim;
    let mut prob = 1.0;
    for i in 0..m {
        let mut mu = 0.0;
        for j in 0..i {
            mu += f.l[i * m + j] * y[j];
        }
        let lii = f.l[i * m + i];
        let e = if lii > 0.0 {
            std_normal_cdf((f.b[i] - mu) / lii)
        } else if f.b[i] - mu >= 0.0 {
            1.0
        } else {
            0.0
        };
        prob *= e;
        if prob < 1e-300 {
            return 0.0;
        }
        if i + 1 < m {
            y[i] = if lii > 0.0 {
                std_normal_quantile((u[i] * e).min(1.0 - 1e-16))
            } else {
                0.0
            };
        }
    }
    prob
}

fn first_primes(k: usize) -> Vec<u64> {
    let mut primes = Vec::with_capacity(k);
    let mut candidate: u64 = 2;
    while primes.len() < k {
        if primes.iter().all(|&p| candidate % p != 0) {
            primes.push(candidate);
        }
        candidate += 1;
    }
    primes
}

/// `P(max_i X_i > delta)` for mean-zero `X ~ N(0, cov)`.
///
/// Runs randomized-lattice stages of doubling size until the ~95% error
/// estimate reaches `accuracy` or `budget` integrand evaluations are spent;
/// in the latter case the result is flagged unconverged.
pub fn mvn_upper_tail_sup(
    cov: &DMatrix<f64>,
    delta: f64,
    accuracy: f64,
    budget: u64,
    stream: &RngStream,
) -> Result<MvnResult> {
    let m = cov.nrows();
    if m == 0 || m != cov.ncols() {
        return Err(Error::InvalidParameter("covariance must be square and non-empty".into()));
    }
    if m > MAX_DIMENSION {
        return Err(Error::DimensionTooLarge(m, MAX_DIMENSION));
    }
    if !(accuracy > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "accuracy must be > 0, got {accuracy}"
        )));
    }

    let (_, jitter) = factor_psd(cov, &JitterPolicy::default())?;
    let mut repaired = cov.clone();
    if jitter > 0.0 {
        for i in 0..m {
            repaired[(i, i)] += jitter;
        }
    }

    if m == 1 {
        let sd = repaired[(0, 0)].sqrt();
        let p_le = if sd > 0.0 {
            std_normal_cdf(delta / sd)
        } else if delta >= 0.0 {
            1.0
        } else {
            0.0
        };
        return Ok(MvnResult {
            probability: 1.0 - p_le,
            error_estimate: 0.0,
            evaluations: 1,
            converged: true,
        });
    }

    let factor = reorder_cholesky(&repaired, delta);
    let dim_u = m - 1;
    let alphas: Vec<f64> = first_primes(dim_u)
        .into_iter()
        .map(|p| (p as f64).sqrt().fract())
        .collect();

    let mut rng = stream.rng();
    let shifts: Vec<Vec<f64>> = (0..N_SHIFTS)
        .map(|_| (0..dim_u).map(|_| rng.gen::<f64>()).collect())
        .collect();

    // per-shift running lattice position and integrand sum (Kronecker
    // sequences extend point by point, so earlier work is never discarded)
    let mut pos: Vec<Vec<f64>> = shifts.clone();
    let mut sums = vec![0.0_f64; N_SHIFTS];
    let mut per_shift: u64 = 0;
    let mut evaluations: u64 = 0;
    let mut u = vec![0.0; dim_u];
    let mut y = vec![0.0; m];

    let mut stage_target: u64 = 128;
    loop {
        for s in 0..N_SHIFTS {
            let p = &mut pos[s];
            let mut acc = 0.0;
            for _ in per_shift..stage_target {
                for j in 0..dim_u {
                    let mut v = p[j] + alphas[j];
                    if v >= 1.0 {
                        v -= 1.0;
                    }
                    p[j] = v;
                    u[j] = (2.0 * v - 1.0).abs(); // tent periodization
                }
                acc += rectangle_integrand(&factor, &u, &mut y);
            }
            sums[s] += acc;
        }
        evaluations += (stage_target - per_shift) * N_SHIFTS as u64;
        per_shift = stage_target;

        let means: Vec<f64> = sums.iter().map(|&s| s / per_shift as f64).collect();
        let mean = means.iter().sum::<f64>() / N_SHIFTS as f64;
        let var = means.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>()
            / (N_SHIFTS as f64 - 1.0);
        let err = T_975_11DF * (var / N_SHIFTS as f64).sqrt();

        if err <= accuracy || evaluations >= budget {
            return Ok(MvnResult {
                probability: (1.0 - mean).clamp(0.0, 1.0),
                error_estimate: err,
                evaluations,
                converged: err <= accuracy,
            });
        }
        stage_target *= 2;
    }
}

/// Monte Carlo estimate of `P(max_i X_i > delta)` from `n_paths` simulated
/// paths `L z`; returns the estimate and its binomial standard error.
pub fn mc_sup_prob(
    cov: &DMatrix<f64>,
    delta: f64,
    n_paths: usize,
    stream: &RngStream,
) -> Result<(f64, f64)> {
    if n_paths < 100 {
        return Err(Error::InvalidParameter(format!(
            "mc_sup_prob needs >= 100 paths, got {n_paths}"
        )));
    }
    let m = cov.nrows();
    if m > MAX_DIMENSION {
        return Err(Error::DimensionTooLarge(m, MAX_DIMENSION));
    }
    let (l, _) = factor_psd(cov, &JitterPolicy::default())?;
    let mut rng = stream.rng();
    let mut z = vec![0.0_f64; m];
    let mut count = 0usize;
    for _ in 0..n_paths {
        for zi in z.iter_mut() {
            *zi = rng.sample(rand_distr::StandardNormal);
        }
        let mut exceeded = false;
        for i in 0..m {
            let mut x = 0.0;
            for j in 0..=i {
                x += l[(i, j)] * z[j];
            }
            if x > delta {
                exceeded = true;
                break;
            }
        }
        if exceeded {
            count += 1;
        }
    }
    let p = count as f64 / n_paths as f64;
    let se = (p * (1.0 - p) / n_paths as f64).sqrt();
    Ok((p, se))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn dmat(rows: usize, data: &[f64]) -> DMatrix<f64> {
        DMatrix::from_row_slice(rows, rows, data)
    }

    fn random_psd(dim: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = RngStream::new(seed, 0).rng();
        let a = DMatrix::from_fn(dim, dim, |_, _| rng.gen::<f64>() - 0.5);
        &a * a.transpose() + DMatrix::identity(dim, dim) * 0.05
    }

    #[test]
    fn factor_identity_and_diagonal() {
        let (l, j) = factor_psd(&DMatrix::identity(3, 3), &JitterPolicy::default()).unwrap();
        assert_eq!(j, 0.0);
        assert_eq!(l, DMatrix::identity(3, 3));

        let (l, _) = factor_psd(&dmat(2, &[4.0, 0.0, 0.0, 9.0]), &JitterPolicy::default()).unwrap();
        assert_eq!(l[(0, 0)], 2.0);
        assert_eq!(l[(1, 1)], 3.0);
        assert_eq!(l[(1, 0)], 0.0);
    }

    #[test]
    fn factor_rank_one_with_tiny_jitter() {
        let v = nalgebra::DVector::from_vec(vec![1.0, 2.0, -0.5, 0.3]);
        let m = &v * v.transpose();
        let (l, jitter) = factor_psd(&m, &JitterPolicy::default()).unwrap();
        assert!(jitter > 0.0 && jitter <= 1e-6 * 4.0);
        let rec = &l * l.transpose();
        let err = (&rec - &m).abs().max();
        assert!(err <= jitter * 4.0 + 1e-12, "err {err} jitter {jitter}");
    }

    #[test]
    fn factor_fails_on_indefinite() {
        let m = dmat(2, &[1.0, 2.0, 2.0, 1.0]); // eigenvalues 3, -1
        assert!(factor_psd(&m, &JitterPolicy::default()).is_err());
    }

    #[test]
    fn univariate_matches_normal_cdf() {
        let cov = dmat(1, &[1.0]);
        let r = mvn_upper_tail_sup(&cov, 1.96, 5e-4, 10_000_000, &RngStream::new(1, 0)).unwrap();
        assert_abs_diff_eq!(r.probability, 0.025, epsilon = 5e-4);
        assert_eq!(r.evaluations, 1);
    }

    #[test]
    fn diagonal_covariance_factorizes_exactly() {
        let cov = dmat(3, &[1.0, 0.0, 0.0, 0.0, 4.0, 0.0, 0.0, 0.0, 0.25]);
        let delta = 1.1;
        let expected = 1.0
            - std_normal_cdf(delta / 1.0)
                * std_normal_cdf(delta / 2.0)
                * std_normal_cdf(delta / 0.5);
        let r = mvn_upper_tail_sup(&cov, delta, 5e-4, 10_000_000, &RngStream::new(2, 0)).unwrap();
        // independent coordinates: the integrand is constant, so the lattice
        // average is exact
        assert_abs_diff_eq!(r.probability, expected, epsilon = 1e-10);
        assert!(r.converged);
    }

    #[test]
    fn extreme_deltas() {
        let cov = random_psd(5, 3);
        let hi = mvn_upper_tail_sup(&cov, 1e6, 5e-4, 1_000_000, &RngStream::new(3, 0)).unwrap();
        assert!(hi.probability < 1e-9);
        let lo = mvn_upper_tail_sup(&cov, -1e6, 5e-4, 1_000_000, &RngStream::new(3, 1)).unwrap();
        assert!(lo.probability > 1.0 - 1e-9);
    }

    #[test]
    fn monotone_nonincreasing_in_delta() {
        let cov = random_psd(8, 9);
        let stream = RngStream::new(4, 0);
        let mut prev = f64::INFINITY;
        let mut prev_err = 0.0;
        for i in 0..12 {
            let delta = -2.0 + 0.4 * i as f64;
            let r = mvn_upper_tail_sup(&cov, delta, 2e-4, 5_000_000, &stream).unwrap();
            assert!(
                r.probability <= prev + 2.0 * (r.error_estimate + prev_err),
                "delta {delta}: {} > {prev}",
                r.probability
            );
            prev = r.probability;
            prev_err = r.error_estimate;
        }
    }

    #[test]
    fn block_diagonal_probability_factors() {
        let b1 = random_psd(2, 11);
        let b2 = random_psd(3, 12);
        let mut full = DMatrix::zeros(5, 5);
        full.view_mut((0, 0), (2, 2)).copy_from(&b1);
        full.view_mut((2, 2), (3, 3)).copy_from(&b2);
        let delta = 0.7;
        let acc = 1e-4;
        let pf = mvn_upper_tail_sup(&full, delta, acc, 20_000_000, &RngStream::new(5, 0)).unwrap();
        let p1 = mvn_upper_tail_sup(&b1, delta, acc, 20_000_000, &RngStream::new(5, 1)).unwrap();
        let p2 = mvn_upper_tail_sup(&b2, delta, acc, 20_000_000, &RngStream::new(5, 2)).unwrap();
        let expected = 1.0 - (1.0 - p1.probability) * (1.0 - p2.probability);
        let slack = 2.0 * (pf.error_estimate + p1.error_estimate + p2.error_estimate) + 1e-6;
        assert!(
            (pf.probability - expected).abs() <= slack,
            "{} vs {expected} (slack {slack})",
            pf.probability
        );
    }

    #[test]
    fn deterministic_under_fixed_seed() {
        let cov = random_psd(10, 20);
        let a = mvn_upper_tail_sup(&cov, 0.5, 1e-4, 2_000_000, &RngStream::new(6, 7)).unwrap();
        let b = mvn_upper_tail_sup(&cov, 0.5, 1e-4, 2_000_000, &RngStream::new(6, 7)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn budget_exhaustion_is_flagged() {
        let cov = random_psd(12, 30);
        let r = mvn_upper_tail_sup(&cov, 0.3, 1e-12, 5_000, &RngStream::new(7, 0)).unwrap();
        assert!(!r.converged);
        assert!(r.error_estimate > 1e-12);
        assert!(r.evaluations >= 5_000);
    }

    #[test]
    fn dimension_cap_enforced() {
        let cov = DMatrix::identity(MAX_DIMENSION + 1, MAX_DIMENSION + 1);
        assert!(matches!(
            mvn_upper_tail_sup(&cov, 0.0, 1e-3, 1000, &RngStream::new(8, 0)),
            Err(Error::DimensionTooLarge(_, _))
        ));
    }

    #[test]
    fn mc_univariate_matches_normal() {
        let cov = dmat(1, &[2.25]);
        let delta = 1.8;
        let (p, se) = mc_sup_prob(&cov, delta, 100_000, &RngStream::new(9, 0)).unwrap();
        let expected = 1.0 - std_normal_cdf(delta / 1.5);
        assert!((p - expected).abs() <= 3.0 * se, "{p} vs {expected}");
    }

    #[test]
    fn mc_certain_exceedance() {
        let cov = random_psd(4, 40);
        let (p, _) = mc_sup_prob(&cov, -1e9, 1_000, &RngStream::new(10, 0)).unwrap();
        assert_eq!(p, 1.0);
        assert!(mc_sup_prob(&cov, 0.0, 50, &RngStream::new(10, 1)).is_err());
    }

    #[test]
    fn qmc_and_mc_agree_on_random_covariances() {
        for seed in [100, 101, 102] {
            let cov = random_psd(20, seed);
            let delta = 0.8;
            let qmc =
                mvn_upper_tail_sup(&cov, delta, 5e-4, 10_000_000, &RngStream::new(seed, 1)).unwrap();
            let (mc, se) = mc_sup_prob(&cov, delta, 100_000, &RngStream::new(seed, 2)).unwrap();
            let combined = (qmc.error_estimate.powi(2) + (3.0 * se).powi(2)).sqrt();
            assert!(
                (qmc.probability - mc).abs() <= combined.max(3.0 * se),
                "seed {seed}: qmc {} mc {mc} (se {se})",
                qmc.probability
            );
        }
    }
}
