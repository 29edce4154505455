//! Two-sample weighted log-rank tests (log-rank, Gehan, Tarone-Ware,
//! Peto-Peto, modified Peto-Peto).
//!
//! Standard construction over pooled event times: score
//! `sum_j w_j (d_1j - E_1j)` with `E_1j = d_j n_1j / n_j`, hypergeometric
//! variance `V_j = d_j (n_1j/n_j)(1 - n_1j/n_j)(n_j - d_j)/(n_j - 1)`, and
//! the chi-square statistic `score^2 / sum_j w_j^2 V_j` on 1 df. The
//! Peto-Peto weights use the pooled survival-like estimator
//! `S~(t) = prod_{t_i <= t} (1 - d_i/(n_i + 1))` evaluated at the event time
//! itself, which reproduces the standard textbook tables.

use crate::error::{Error, Result};
use crate::estimators::SurvivalSample;
use crate::numerics::chi_square_sf;

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum WlrVariant {
    LogRank,
    Gehan,
    TaroneWare,
    PetoPeto,
    ModifiedPetoPeto,
}

impl WlrVariant {
    pub const ALL: [WlrVariant; 5] = [
        WlrVariant::LogRank,
        WlrVariant::Gehan,
        WlrVariant::TaroneWare,
        WlrVariant::PetoPeto,
        WlrVariant::ModifiedPetoPeto,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            WlrVariant::LogRank => "log-rank",
            WlrVariant::Gehan => "gehan",
            WlrVariant::TaroneWare => "tarone-ware",
            WlrVariant::PetoPeto => "peto-peto",
            WlrVariant::ModifiedPetoPeto => "modified-peto-peto",
        }
    }
}

impl std::str::FromStr for WlrVariant {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.to_ascii-lowercase().as_str() {
            "log-rank" | "logrank" => Ok(WlrVariant::LogRank),
            "gehan" | "gehan-wilcoxon" => Ok(WlrVariant::Gehan),
            "tarone-ware" | "taroneware" => Ok(WlrVariant::TaroneWare),
            "peto-peto" | "peto" => Ok(WlrVariant::PetoPeto),
            "modified-peto-peto" | "modified-peto" => Ok(WlrVariant::ModifiedPetoPeto),
            other => Err(format!("unknown test variant: {other}")),
        }
    }
}

#[derive(Debug, Clone, serde::Serialize)]
pub struct WlrResult {
    pub variant: WlrVariant,
    /// Weighted observed-minus-expected sum for the first sample.
    pub score: f64,
    /// Weighted hypergeometric variance sum.
    pub variance: f64,
    /// `score^2 / variance`, chi-square with 1 df.
    pub statistic: f64,
    pub p_value: f64,
    /// Unweighted observed events in the first sample.
    pub observed: f64,
    /// Unweighted expected events in the first sample under H0.
    pub expected: f64,
}

/// Two-sample weighted log-rank test; the score's sign convention is
/// observed-minus-expected for `sample_t`.
pub fn weighted_logrank(
    sample_t: &SurvivalSample,
    sample_u: &SurvivalSample,
    variant: WlrVariant,
) -> Result<WlrResult> {
    let mut times_t: Vec<(f64, bool)> = sample_t
        .observations()
        .iter()
        .map(|o| (o.time(), o.is_event()))
        .collect();
    let mut times_u: Vec<(f64, bool)> = sample_u
        .observations()
        .iter()
        .map(|o| (o.time(), o.is_event()))
        .collect();
    times_t.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    times_u.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());

    let mut event_times: Vec<f64> = times_t
        .iter()
        .chain(times_u.iter())
        .filter(|&&(_, e)| e)
        .map(|&(t, _)| t)
        .collect();
    event_times.sort_by(|a, b| a.partial_cmp(b).unwrap());
    event_times.dedup();
    if event_times.is_empty() {
        return Err(Error::NoEvents);
    }

    // pointer walk: index of the first observation with time >= t
    let mut it = 0usize;
    let mut iu = 0usize;
    let mut s_tilde = 1.0_f64;
    let mut score = 0.0;
    let mut variance = 0.0;
    let mut observed = 0.0;
    let mut expected = 0.0;

    for &t in &event_times {
        while it < times_t.len() && times_t[it].0 < t {
            it += 1;
        }
        while iu < times_u.len() && times_u[iu].0 < t {
            iu += 1;
        }
        let n1 = (times_t.len() - it) as f64;
        let n2 = (times_u.len() - iu) as f64;
        let n = n1 + n2;
        let d1 = times_t[it..]
            .iter()
            .take_while(|&&(tt, _)| tt == t)
            .filter(|&&(_, e)| e)
            .count() as f64;
        let d2 = times_u[iu..]
            .iter()
            .take_while(|&&(tt, _)| tt == t)
            .filter(|&&(_, e)| e)
            .count() as f64;
        let d = d1 + d2;

        s_tilde *= 1.0 - d / (n + 1.0);
        let w = match variant {
            WlrVariant::LogRank => 1.0,
            WlrVariant::Gehan => n,
            WlrVariant::TaroneWare => n.sqrt(),
            WlrVariant::PetoPeto => s_tilde,
            WlrVariant::ModifiedPetoPeto => s_tilde * n / (n + 1.0),
        };

        let e1 = d * n1 / n;
        score += w * (d1 - e1);
        observed += d1;
        expected += e1;
        if n > 1.0 {
            let v = d * (n1 / n) * (1.0 - n1 / n) * (n - d) / (n - 1.0);
            variance += w * w * v;
        }
    }

    if variance <= 0.0 {
        return Err(Error::ZeroVariance);
    }
    let statistic = score * score / variance;
    Ok(WlrResult {
        variant,
        score,
        variance,
        statistic,
        p_value: chi_square_sf(statistic, 1)?,
        observed,
        expected,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn sample(label: &str, spec: &[(f64, bool)]) -> SurvivalSample {
        let times: Vec<f64> = spec.iter().map(|&(t, _)| t).collect();
        let events: Vec<bool> = spec.iter().map(|&(_, e)| e).collect();
        SurvivalSample::from_parts(label, &times, &events).unwrap()
    }

    fn hand_t() -> SurvivalSample {
        sample("t", &[(1.0, true), (3.0, true)])
    }

    fn hand_u() -> SurvivalSample {
        sample("u", &[(2.0, true), (4.0, false)])
    }

    // Hand-computed oracles for {(1,E),(3,E)} vs {(2,E),(4,C)}:
    // t=1: n=4 d=1 n1=2 -> E1=0.5,  V=0.25
    // t=2: n=3 d=1 n1=1 -> E1=1/3,  V=2/9
    // t=3: n=2 d=1 n1=1 -> E1=0.5,  V=0.25
    #[test]
    fn hand_example_logrank() {
        let r = weighted_logrank(&hand_t(), &hand_u(), WlrVariant::LogRank).unwrap();
        assert_abs_diff_eq!(r.score, 2.0 / 3.0, epsilon = 1e-12);
        assert_abs_diff_eq!(r.variance, 0.25 + 2.0 / 9.0 + 0.25, epsilon = 1e-12);
        assert_abs_diff_eq!(r.statistic, 0.61538, epsilon = 1e-4);
        assert_abs_diff_eq!(r.observed, 2.0, epsilon = 0.0);
        assert_abs_diff_eq!(r.expected, 0.5 + 1.0 / 3.0 + 0.5, epsilon = 1e-12);
    }

    #[test]
    fn hand_example_gehan_and_tarone() {
        let g = weighted_logrank(&hand_t(), &hand_u(), WlrVariant::Gehan).unwrap();
        assert_abs_diff_eq!(g.score, 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(g.statistic, 4.0 / 7.0, epsilon = 1e-12);
        let tw = weighted_logrank(&hand_t(), &hand_u(), WlrVariant::TaroneWare).unwrap();
        assert_abs_diff_eq!(tw.statistic, 0.58908, epsilon = 1e-4);
    }

    #[test]
    fn hand_example_peto_variants() {
        // S~: 0.8 after t=1, 0.6 after t=2, 0.4 after t=3.
        let pp = weighted_logrank(&hand_t(), &hand_u(), WlrVariant::PetoPeto).unwrap();
        assert_abs_diff_eq!(pp.score, 0.4, epsilon = 1e-12);
        assert_abs_diff_eq!(pp.statistic, 0.16 / 0.28, epsilon = 1e-12);
        let mpp = weighted_logrank(&hand_t(), &hand_u(), WlrVariant::ModifiedPetoPeto).unwrap();
        assert_abs_diff_eq!(mpp.score, 0.30333333333333334, epsilon = 1e-12);
        assert_abs_diff_eq!(mpp.statistic, 0.55706, epsilon = 1e-4);
    }

    #[test]
    fn identical_groups_give_zero_score() {
        let spec = [(1.0, true), (2.0, false), (3.0, true), (5.0, true)];
        let a = sample("a", &spec);
        let b = sample("b", &spec);
        for v in WlrVariant::ALL {
            let r = weighted_logrank(&a, &b, v).unwrap();
            assert_abs_diff_eq!(r.score, 0.0, epsilon = 1e-12);
            assert_abs_diff_eq!(r.statistic, 0.0, epsilon = 1e-12);
            assert_abs_diff_eq!(r.p_value, 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn group_swap_negates_score_keeps_statistic() {
        let t = sample("t", &[(1.0, true), (2.0, true), (4.0, false), (6.0, true)]);
        let u = sample("u", &[(1.5, true), (3.0, false), (5.0, true)]);
        for v in WlrVariant::ALL {
            let a = weighted_logrank(&t, &u, v).unwrap();
            let b = weighted_logrank(&u, &t, v).unwrap();
            assert_abs_diff_eq!(a.score, -b.score, epsilon = 1e-12);
            assert_abs_diff_eq!(a.statistic, b.statistic, epsilon = 1e-12);
            assert_abs_diff_eq!(a.p_value, b.p_value, epsilon = 1e-12);
        }
    }

    #[test]
    fn invariant_under_monotone_time_transform() {
        let t = sample("t", &[(1.0, true), (2.0, true), (4.0, false), (6.0, true)]);
        let u = sample("u", &[(1.5, true), (3.0, false), (5.0, true)]);
        let transform = |s: &SurvivalSample, label: &str| {
            let times: Vec<f64> = s.observations().iter().map(|o| o.time().exp()).collect();
            let events: Vec<bool> = s.observations().iter().map(|o| o.is_event()).collect();
            SurvivalSample::from_parts(label, &times, &events).unwrap()
        };
        for v in WlrVariant::ALL {
            let orig = weighted_logrank(&t, &u, v).unwrap();
            let tr = weighted_logrank(&transform(&t, "t"), &transform(&u, "u"), v).unwrap();
            assert_eq!(orig.statistic, tr.statistic);
            assert_eq!(orig.score, tr.score);
        }
    }

    #[test]
    fn no_events_errors() {
        let t = sample("t", &[(1.0, false)]);
        let u = sample("u", &[(2.0, false)]);
        assert!(matches!(
            weighted_logrank(&t, &u, WlrVariant::LogRank),
            Err(Error::NoEvents)
        ));
    }

    #[test]
    fn censored_at_event_time_stays_at_risk() {
        // u's censored observation at t=2 must count in n at t=2.
        let t = sample("t", &[(2.0, true), (3.0, true)]);
        let u = sample("u", &[(2.0, false), (4.0, false)]);
        let r = weighted_logrank(&t, &u, WlrVariant::LogRank).unwrap();
        // t=2: n=4, n1=2, d=1 -> E1 = 0.5; t=3: n=2, n1=1, d=1 -> E1 = 0.5
        assert_abs_diff_eq!(r.expected, 1.0, epsilon = 1e-12);
    }
}
