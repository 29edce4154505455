//! Monte Carlo power study: gamma lifetimes, exponential censoring calibrated
//! to a target rate, replicated dominance tests, rejection-rate tables.
//!
//! Replications fan out in parallel on counter-based RNG streams keyed by
//! (base seed, cell index, replication index), so results are reproducible
//! and independent of scheduling order.

use crate::dominance::{dominance_test, DominanceConfig, DominanceResult};
use crate::error::{Error, Result};
use crate::estimators::{Observation, Status, SurvivalSample};
use crate::numerics::{gamma_quantile, sample_exponential, sample_gamma, RngStream};
use rayon::prelude::*;

/// Fraction of failed replications tolerated per cell.
const MAX_ERRORED_FRACTION: f64 = 0.01;

const DATA_STREAM_TAG: u64 = 0x6461_7461;

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct GammaParams {
    pub shape: f64,
    pub scale: f64,
}

impl GammaParams {
    pub fn new(shape: f64, scale: f64) -> Result<Self> {
        if !(shape > 0.0) || !(scale > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "gamma parameters must be positive, got shape={shape} scale={scale}"
            )));
        }
        Ok(Self { shape, scale })
    }
}

/// Target censoring level, calibrated through the lifetime quantiles.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
pub enum CensoringTarget {
    /// lambda = -log(0.9) / q20 (roughly 20% censored).
    P20,
    /// lambda = log(2) / q50 (roughly 50% censored).
    P50,
}

impl std::str::FromStr for CensoringTarget {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.to_ascii_uppercase().as_str() {
            "P20" => Ok(CensoringTarget::P20),
            "P50" => Ok(CensoringTarget::P50),
            other => Err(format!("unknown censoring target: {other} (expected P20 or P50)")),
        }
    }
}

impl CensoringTarget {
    pub fn name(&self) -> &'static str {
        match self {
            CensoringTarget::P20 => "P20",
            CensoringTarget::P50 => "P50",
        }
    }
}

/// One simulation cell: two gamma lifetime laws, a censoring level, and the
/// per-group sample size (groups are equal-sized).
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct Scenario {
    pub label: String,
    pub dist_t: GammaParams,
    pub dist_u: GammaParams,
    pub censoring: CensoringTarget,
    pub n: usize,
}

impl Scenario {
    pub fn new(
        label: impl Into<String>,
        dist_t: GammaParams,
        dist_u: GammaParams,
        censoring: CensoringTarget,
        n: usize,
    ) -> Result<Self> {
        if n < 2 {
            return Err(Error::InvalidParameter(format!(
                "scenario sample size must be >= 2, got {n}"
            )));
        }
        Ok(Self {
            label: label.into(),
            dist_t,
            dist_u,
            censoring,
            n,
        })
    }

    /// T ~ Gamma(2,1), U ~ Gamma(3,1): S_U dominates S_T.
    pub fn case1(censoring: CensoringTarget, n: usize) -> Result<Self> {
        Self::new(
            "Case1",
            GammaParams::new(2.0, 1.0)?,
            GammaParams::new(3.0, 1.0)?,
            censoring,
            n,
        )
    }

    /// T ~ Gamma(2,1), U ~ Gamma(2.2,1): dominance with close curves.
    pub fn case2(censoring: CensoringTarget, n: usize) -> Result<Self> {
        Self::new(
            "Case2",
            GammaParams::new(2.0, 1.0)?,
            GammaParams::new(2.2, 1.0)?,
            censoring,
            n,
        )
    }

    /// T ~ Gamma(3,5), U ~ Gamma(6,2): the survival functions cross once.
    pub fn case3(censoring: CensoringTarget, n: usize) -> Result<Self> {
        Self::new(
            "Case3",
            GammaParams::new(3.0, 5.0)?,
            GammaParams::new(6.0, 2.0)?,
            censoring,
            n,
        )
    }

    /// T ~ Gamma(2,2), U ~ Gamma(3,1): a crossing that is hard to detect.
    pub fn case4(censoring: CensoringTarget, n: usize) -> Result<Self> {
        Self::new(
            "Case4",
            GammaParams::new(2.0, 2.0)?,
            GammaParams::new(3.0, 1.0)?,
            censoring,
            n,
        )
    }
}

/// Exponential censoring rate for one lifetime law at the target level.
pub fn censoring_rate_param(dist: &GammaParams, target: CensoringTarget) -> Result<f64> {
    match target {
        CensoringTarget::P20 => {
            let q20 = gamma_quantile(dist.shape, dist.scale, 0.20)?;
            Ok(-(0.9_f64.ln()) / q20)
        }
        CensoringTarget::P50 => {
            let q50 = gamma_quantile(dist.shape, dist.scale, 0.50)?;
            Ok(2.0_f64.ln() / q50)
        }
    }
}

/// One replication's test result plus its realized censoring fractions.
#[derive(Debug, Clone, serde::Serialize)]
pub struct ReplicationOutput {
    pub result: DominanceResult,
    pub censored_frac_t: f64,
    pub censored_frac_u: f64,
}

fn draw_censored_sample<R: rand::Rng>(
    label: &str,
    dist: &GammaParams,
    rate: f64,
    n: usize,
    rng: &mut R,
) -> Result<(SurvivalSample, f64)> {
    let mut obs = Vec::with_capacity(n);
    let mut censored = 0usize;
    for _ in 0..n {
        let lifetime = sample_gamma(dist.shape, dist.scale, rng)?;
        let censor = sample_exponential(rate, rng)?;
        let (time, status) = if lifetime <= censor {
            (lifetime, Status::Event)
        } else {
            censored += 1;
            (censor, Status::Censored)
        };
        obs.push(Observation::new(time, status)?);
    }
    Ok((
        SurvivalSample::new(label, obs)?,
        censored as f64 / n as f64,
    ))
}

/// Draw one replication's two censored samples and run the dominance test.
pub fn run_replication(
    scenario: &Scenario,
    config: &DominanceConfig,
    stream: &RngStream,
) -> Result<ReplicationOutput> {
    let rate_t = censoring_rate_param(&scenario.dist_t, scenario.censoring)?;
    let rate_u = censoring_rate_param(&scenario.dist_u, scenario.censoring)?;
    let mut rng = stream.derived(DATA_STREAM_TAG).rng();
    let (sample_t, cf_t) =
        draw_censored_sample("T", &scenario.dist_t, rate_t, scenario.n, &mut rng)?;
    let (sample_u, cf_u) =
        draw_censored_sample("U", &scenario.dist_u, rate_u, scenario.n, &mut rng)?;
    let mut cfg = *config;
    // per-replication MVN randomization, deterministic in (seed, stream)
    cfg.seed = stream.seed ^ stream.stream.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    let result = dominance_test(&sample_t, &sample_u, &cfg)?;
    Ok(ReplicationOutput {
        result,
        censored_frac_t: cf_t,
        censored_frac_u: cf_u,
    })
}

#[derive(Debug, Clone, serde::Serialize)]
pub struct RejectionCell {
    pub scenario: Scenario,
    pub replications: usize,
    pub completed: usize,
    pub errored: usize,
    /// Rejection rates aligned with the table's alpha list.
    pub rates: Vec<f64>,
    pub mean_censored_frac_t: f64,
    pub mean_censored_frac_u: f64,
}

#[derive(Debug, Clone, serde::Serialize)]
pub struct RejectionTable {
    pub alphas: Vec<f64>,
    pub base_seed: u64,
    pub grid_size: usize,
    pub cells: Vec<RejectionCell>,
}

/// Rejection rates over `replications` runs per scenario, fanned out in
/// parallel on deterministic streams; fails if more than 1% of a cell's
/// replications error.
pub fn rejection_table(
    scenarios: &[Scenario],
    replications: usize,
    base_seed: u64,
    alphas: &[f64],
    config: &DominanceConfig,
) -> Result<RejectionTable> {
    if replications < 50 {
        return Err(Error::InvalidParameter(format!(
            "rejection table needs >= 50 replications, got {replications}"
        )));
    }
    if alphas.is_empty() || alphas.iter().any(|&a| !(0.0..=1.0).contains(&a)) {
        return Err(Error::InvalidParameter("alphas must lie in [0,1]".into()));
    }
    let mut cells = Vec::with_capacity(scenarios.len());
    for (cell_idx, scenario) in scenarios.iter().enumerate() {
        let outcomes: Vec<std::result::Result<ReplicationOutput, String>> = (0..replications)
            .into_par_iter()
            .map(|rep| {
                let stream =
                    RngStream::new(base_seed, ((cell_idx as u64) << 32) | rep as u64);
                run_replication(scenario, config, &stream).map_err(|e| e.to_string())
            })
            .collect();

        let mut completed = 0usize;
        let mut errored = 0usize;
        let mut first_error = String::new();
        let mut reject_counts = vec![0usize; alphas.len()];
        let mut cf_t_sum = 0.0;
        let mut cf_u_sum = 0.0;
        for outcome in &outcomes {
            match outcome {
                Ok(out) => {
                    completed += 1;
                    cf_t_sum += out.censored_frac_t;
                    cf_u_sum += out.censored_frac_u;
                    for (k, &alpha) in alphas.iter().enumerate() {
                        if out.result.p_upper <= alpha {
                            reject_counts[k] += 1;
                        }
                    }
                }
                Err(msg) => {
                    if errored == 0 {
                        first_error = msg.clone();
                    }
                    errored += 1;
                }
            }
        }
        if (errored as f64) > MAX_ERRORED_FRACTION * replications as f64 {
            return Err(Error::ReplicationFailures {
                failed: errored,
                total: replications,
                limit_percent: MAX_ERRORED_FRACTION * 100.0,
                first: first_error,
            });
        }
        cells.push(RejectionCell {
            scenario: scenario.clone(),
            replications,
            completed,
            errored,
            rates: reject_counts
                .iter()
                .map(|&c| c as f64 / completed as f64)
                .collect(),
            mean_censored_frac_t: cf_t_sum / completed as f64,
            mean_censored_frac_u: cf_u_sum / completed as f64,
        });
    }
    Ok(RejectionTable {
        alphas: alphas.to_vec(),
        base_seed,
        grid_size: config.grid_size,
        cells,
    })
}
