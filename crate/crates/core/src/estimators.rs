//! Sample representation, risk tables, and product-limit estimators.
//!
//! The product-limit accumulation runs in exact rational arithmetic and is
//! converted to `f64` once per jump, so identities like "KM equals one minus
//! the empirical CDF when nothing is censored" hold bit-exactly.

use crate::error::{Error, Result};
use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive};

/// Event indicator for one subject.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Status {
    /// The event of interest was observed at `time`.
    Event,
    /// Follow-up ended at `time` without the event.
    Censored,
}

/// One subject's observed `(time, status)` pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Observation {
    time: f64,
    status: Status,
}

impl Observation {
    pub fn new(time: f64, status: Status) -> Result<Self> {
        if !(time > 0.0) || !time.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "observation time must be positive and finite, got {time}"
            )));
        }
        Ok(Self { time, status })
    }

    pub fn event(time: f64) -> Result<Self> {
        Self::new(time, Status::Event)
    }

    pub fn censored(time: f64) -> Result<Self> {
        Self::new(time, Status::Censored)
    }

    #[inline]
    pub fn time(&self) -> f64 {
        self.time
    }

    #[inline]
    pub fn status(&self) -> Status {
        self.status
    }

    #[inline]
    pub fn is_event(&self) -> bool {
        self.status == Status::Event
    }
}

/// A non-empty sample, stored sorted by time ascending with events before
/// censorings at tied times.
#[derive(Debug, Clone, PartialEq)]
pub struct SurvivalSample {
    observations: Vec<Observation>,
    label: String,
}

impl SurvivalSample {
    pub fn new(label: impl Into<String>, mut observations: Vec<Observation>) -> Result<Self> {
        let label = label.into();
        if observations.is_empty() {
            return Err(Error::EmptySample(Some(label)));
        }
        observations.sort_by(|a, b| {
            a.time
                .partial_cmp(&b.time)
                .expect("times validated finite")
                .then(a.status.cmp(&b.status))
        });
        Ok(Self { observations, label })
    }

    /// Convenience constructor from parallel `(time, is_event)` slices.
    pub fn from_parts(label: impl Into<String>, times: &[f64], events: &[bool]) -> Result<Self> {
        if times.len() != events.len() {
            return Err(Error::InvalidParameter(format!(
                "times/events length mismatch: {} vs {}",
                times.len(),
                events.len()
            )));
        }
        let obs = times
            .iter()
            .zip(events)
            .map(|(&t, &e)| {
                Observation::new(t, if e { Status::Event } else { Status::Censored })
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(label, obs)
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn observations(&self) -> &[Observation] {
        &self.observations
    }

    pub fn len(&self) -> usize {
        self.observations.len()
    }

    pub fn is_empty(&self) -> bool {
        false // non-empty by construction
    }

    pub fn n_events(&self) -> usize {
        self.observations.iter().filter(|o| o.is_event()).count()
    }

    pub fn max_time(&self) -> f64 {
        self.observations.last().expect("non-empty").time
    }

    pub fn first_event_time(&self) -> Option<f64> {
        self.observations.iter().find(|o| o.is_event()).map(|o| o.time)
    }

    pub fn distinct_event_times(&self) -> Vec<f64> {
        let mut out: Vec<f64> = Vec::new();
        for o in &self.observations {
            if o.is_event() && out.last() != Some(&o.time) {
                out.push(o.time);
            }
        }
        out
    }
}

/// One row per distinct event time: the at-risk count, event count, and the
/// number censored in the half-open interval since the previous event time.
#[derive(Debug, Clone, PartialEq)]
pub struct RiskRow {
    pub time: f64,
    pub at_risk: usize,
    pub events: usize,
    /// Censored in [previous event time, this event time).
    pub censored_before: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RiskTable {
    pub rows: Vec<RiskRow>,
    pub sample_size: usize,
}

impl RiskTable {
    /// Subjects still at risk after the last event time (censored there or later).
    pub fn at_risk_after_last(&self) -> usize {
        match self.rows.last() {
            Some(row) => row.at_risk - row.events,
            None => self.sample_size,
        }
    }
}

/// Risk table over the sample's distinct event times. Censored-only times
/// produce no row but decrement later at-risk counts.
pub fn risk_table(sample: &SurvivalSample) -> RiskTable {
    let obs = sample.observations();
    let n = obs.len();
    let mut rows = Vec::new();
    let mut at_risk = n;
    let mut pending_censored = 0usize;
    let mut i = 0;
    while i < n {
        let t = obs[i].time();
        let mut events = 0usize;
        let mut censored = 0usize;
        let mut j = i;
        while j < n && obs[j].time() == t {
            if obs[j].is_event() {
                events += 1;
            } else {
                censored += 1;
            }
            j += 1;
        }
        if events > 0 {
            rows.push(RiskRow {
                time: t,
                at_risk,
                events,
                censored_before: pending_censored,
            });
            pending_censored = 0;
        }
        at_risk -= events + censored;
        pending_censored += censored;
        i = j;
    }
    RiskTable {
        rows,
        sample_size: n,
    }
}

/// Right-continuous non-increasing step function on [0, inf) with value 1 at 0.
#[derive(Debug, Clone, PartialEq)]
pub struct StepCurve {
    jump_times: Vec<f64>,
    values: Vec<f64>,
}

impl StepCurve {
    /// Build from strictly increasing positive jump times and the post-jump
    /// values, which must be non-increasing within [0, 1].
    pub fn new(jump_times: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if jump_times.len() != values.len() {
            return Err(Error::InvalidParameter(
                "step curve times/values length mismatch".into(),
            ));
        }
        let mut prev_t = 0.0;
        let mut prev_v = 1.0;
        for (&t, &v) in jump_times.iter().zip(&values) {
            if !(t > prev_t) || !t.is_finite() {
                return Err(Error::InvalidParameter(
                    "step curve jump times must be strictly increasing and positive".into(),
                ));
            }
            if !(0.0..=1.0).contains(&v) || v > prev_v {
                return Err(Error::InvalidParameter(
                    "step curve values must be non-increasing within [0,1]".into(),
                ));
            }
            prev_t = t;
            prev_v = v;
        }
        Ok(Self { jump_times, values })
    }

    pub fn constant_one() -> Self {
        Self {
            jump_times: Vec::new(),
            values: Vec::new(),
        }
    }

    /// Right-continuous evaluation at `t >= 0`.
    pub fn eval(&self, t: f64) -> f64 {
        match self.jump_times.partition_point(|&jt| jt <= t) {
            0 => 1.0,
            k => self.values[k - 1],
        }
    }

    /// Value just before `t` (the left limit).
    pub fn left_limit(&self, t: f64) -> f64 {
        match self.jump_times.partition_point(|&jt| jt < t) {
            0 => 1.0,
            k => self.values[k - 1],
        }
    }

    pub fn jump_times(&self) -> &[f64] {
        &self.jump_times
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// `(time, mass)` of every jump; masses are the drops, summing to
    /// `1 - last value`.
    pub fn jumps(&self) -> Vec<(f64, f64)> {
        let mut out = Vec::with_capacity(self.jump_times.len());
        let mut prev = 1.0;
        for (&t, &v) in self.jump_times.iter().zip(&self.values) {
            out.push((t, prev - v));
            prev = v;
        }
        out
    }

    pub fn last_value(&self) -> f64 {
        self.values.last().copied().unwrap_or(1.0)
    }
}

/// Convert an exact rational in [0,1] to the nearest f64.
///
/// When the reduced terms fit in 53 bits the result is the correctly rounded
/// quotient (identical to dividing the integer counts directly); otherwise a
/// scaled big-integer division accurate to ~1 ulp.
fn ratio_to_f64(r: &BigRational) -> f64 {
    debug_assert!(!r.is_negative());
    let num = r.numer();
    let den = r.denom();
    if let (Some(n), Some(d)) = (num.to_u64(), den.to_u64()) {
        if n <= (1 << 53) && d <= (1 << 53) {
            return n as f64 / d as f64;
        }
    }
    let shift = (den.bits() as i64 - num.bits() as i64) + 63;
    let scaled: BigInt = if shift >= 0 {
        (num << shift as u64) / den
    } else {
        num / (den << (-shift) as u64)
    };
    scaled.to_f64().unwrap_or(0.0) * (-shift as f64).exp2()
}

/// Which status the product-limit estimator should treat as its jump event.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum JumpOn {
    Events,
    Censorings,
}

/// Shared product-limit core.
///
/// For the survival KM (`JumpOn::Events`) censored subjects at a tied time are
/// still at risk there; for the reverse KM (`JumpOn::Censorings`) deaths at a
/// tied time leave the risk set first.
fn product_limit(sample: &SurvivalSample, jump_on: JumpOn) -> StepCurve {
    let obs = sample.observations();
    let n = obs.len();
    let mut times = Vec::new();
    let mut values = Vec::new();
    let mut running = BigRational::one();
    let mut at_risk = n;
    let mut i = 0;
    while i < n {
        let t = obs[i].time();
        let mut events = 0usize;
        let mut censored = 0usize;
        let mut j = i;
        while j < n && obs[j].time() == t {
            if obs[j].is_event() {
                events += 1;
            } else {
                censored += 1;
            }
            j += 1;
        }
        let (jumps, risk) = match jump_on {
            JumpOn::Events => (events, at_risk),
            JumpOn::Censorings => (censored, at_risk - events),
        };
        if jumps > 0 {
            let factor = BigRational::new(
                BigInt::from(risk - jumps),
                BigInt::from(risk),
            );
            running *= factor;
            times.push(t);
            values.push(ratio_to_f64(&running));
        }
        at_risk -= events + censored;
        i = j;
    }
    StepCurve {
        jump_times: times,
        values,
    }
}

/// Kaplan-Meier estimator of the survival function.
pub fn km_fit(sample: &SurvivalSample) -> StepCurve {
    product_limit(sample, JumpOn::Events)
}

/// Reverse Kaplan-Meier estimator of the censoring survival function.
pub fn censoring_km(sample: &SurvivalSample) -> StepCurve {
    product_limit(sample, JumpOn::Censorings)
}

/// Empirical survival of the observed times, ignoring status:
/// `#{X_i > t} / n`.
pub fn empirical_observed_survival(sample: &SurvivalSample) -> StepCurve {
    let obs = sample.observations();
    let n = obs.len();
    let mut times = Vec::new();
    let mut values = Vec::new();
    let mut seen = 0usize;
    let mut i = 0;
    while i < n {
        let t = obs[i].time();
        let mut j = i;
        while j < n && obs[j].time() == t {
            j += 1;
        }
        seen += j - i;
        times.push(t);
        values.push((n - seen) as f64 / n as f64);
        i = j;
    }
    StepCurve {
        jump_times: times,
        values,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(spec: &[(f64, bool)]) -> SurvivalSample {
        let times: Vec<f64> = spec.iter().map(|&(t, _)| t).collect();
        let events: Vec<bool> = spec.iter().map(|&(_, e)| e).collect();
        SurvivalSample::from_parts("test", &times, &events).unwrap()
    }

    #[test]
    fn empty_sample_rejected() {
        assert!(SurvivalSample::new("x", vec![]).is_err());
    }

    #[test]
    fn nonpositive_times_rejected() {
        assert!(Observation::event(0.0).is_err());
        assert!(Observation::event(-1.0).is_err());
        assert!(Observation::event(f64::INFINITY).is_err());
    }

    #[test]
    fn risk_table_hand_example() {
        let s = sample(&[(1.0, true), (2.0, false), (3.0, true)]);
        let rt = risk_table(&s);
        assert_eq!(rt.rows.len(), 2);
        assert_eq!(
            rt.rows[0],
            RiskRow { time: 1.0, at_risk: 3, events: 1, censored_before: 0 }
        );
        assert_eq!(
            rt.rows[1],
            RiskRow { time: 3.0, at_risk: 1, events: 1, censored_before: 1 }
        );
    }

    #[test]
    fn risk_table_all_censored_is_empty() {
        let s = sample(&[(1.0, false), (2.0, false)]);
        assert!(risk_table(&s).rows.is_empty());
        assert_eq!(risk_table(&s).at_risk_after_last(), 2);
    }

    #[test]
    fn risk_table_aggregates_ties() {
        let s = sample(&[(2.0, true), (2.0, true), (5.0, false)]);
        let rt = risk_table(&s);
        assert_eq!(rt.rows.len(), 1);
        assert_eq!(
            rt.rows[0],
            RiskRow { time: 2.0, at_risk: 3, events: 2, censored_before: 0 }
        );
    }

    #[test]
    fn risk_table_counts_conserve() {
        let s = sample(&[
            (1.0, true), (1.0, false), (2.0, false), (3.0, true), (3.0, true), (4.0, false),
        ]);
        let rt = risk_table(&s);
        let d: usize = rt.rows.iter().map(|r| r.events).sum();
        let c: usize = rt.rows.iter().map(|r| r.censored_before).sum();
        assert_eq!(d + c + rt.at_risk_after_last(), s.len());
    }

    #[test]
    fn km_hand_example() {
        let s = sample(&[(1.0, true), (2.0, false), (3.0, true)]);
        let km = km_fit(&s);
        assert_eq!(km.eval(1.0), 2.0 / 3.0);
        assert_eq!(km.eval(2.5), 2.0 / 3.0);
        assert_eq!(km.eval(3.0), 0.0);
        assert_eq!(km.eval(0.5), 1.0);
    }

    #[test]
    fn km_all_censored_is_one() {
        let s = sample(&[(1.0, false), (2.0, false)]);
        let km = km_fit(&s);
        assert_eq!(km.eval(10.0), 1.0);
        assert!(km.jump_times().is_empty());
    }

    #[test]
    fn km_no_censoring_equals_one_minus_ecdf_exactly() {
        let s = sample(&[(0.3, true), (1.7, true), (1.7, true), (2.9, true), (7.0, true)]);
        let km = km_fit(&s);
        let emp = empirical_observed_survival(&s);
        for &t in &[0.0, 0.3, 1.0, 1.7, 2.9, 3.0, 7.0, 9.0] {
            assert_eq!(km.eval(t), emp.eval(t), "t = {t}");
        }
    }

    #[test]
    fn censoring_km_hand_example() {
        let s = sample(&[(1.0, true), (2.0, false), (3.0, true)]);
        let h = censoring_km(&s);
        assert_eq!(h.jump_times(), &[2.0]);
        assert_eq!(h.eval(2.0), 0.5);
        assert_eq!(h.eval(1.9), 1.0);
    }

    #[test]
    fn censoring_km_no_censoring_is_one() {
        let s = sample(&[(1.0, true), (2.0, true)]);
        assert!(censoring_km(&s).jump_times().is_empty());
    }

    #[test]
    fn censoring_km_all_censored_equals_one_minus_ecdf() {
        let s = sample(&[(1.0, false), (2.0, false), (2.0, false), (5.0, false)]);
        let h = censoring_km(&s);
        let emp = empirical_observed_survival(&s);
        for &t in &[0.5, 1.0, 2.0, 3.0, 5.0, 6.0] {
            assert_eq!(h.eval(t), emp.eval(t));
        }
    }

    #[test]
    fn censoring_km_tie_order_deaths_leave_first() {
        // At t=2 one death and one censoring: the censoring's risk set
        // excludes the death, so H jumps to 1 - 1/1 = 0.
        let s = sample(&[(2.0, true), (2.0, false)]);
        let h = censoring_km(&s);
        assert_eq!(h.eval(2.0), 0.0);
    }

    #[test]
    fn empirical_survival_counting() {
        let s = sample(&[(1.0, true), (2.0, false), (3.0, true)]);
        let e = empirical_observed_survival(&s);
        assert_eq!(e.eval(1.5), 2.0 / 3.0);
        assert_eq!(e.eval(0.5), 1.0);
        assert_eq!(e.eval(3.0), 0.0);
        assert_eq!(e.eval(99.0), 0.0);
    }

    #[test]
    fn step_curve_eval_conventions() {
        let c = StepCurve::new(vec![1.0, 2.0], vec![0.6, 0.2]).unwrap();
        assert_eq!(c.eval(0.0), 1.0);
        assert_eq!(c.eval(1.0), 0.6); // post-jump at the jump time
        assert_eq!(c.left_limit(1.0), 1.0); // pre-jump just before
        assert_eq!(c.left_limit(1.5), 0.6);
        assert_eq!(c.eval(5.0), 0.2); // beyond last jump
    }

    #[test]
    fn step_curve_validation() {
        assert!(StepCurve::new(vec![1.0, 1.0], vec![0.5, 0.4]).is_err());
        assert!(StepCurve::new(vec![2.0, 1.0], vec![0.5, 0.4]).is_err());
        assert!(StepCurve::new(vec![1.0], vec![1.5]).is_err());
        assert!(StepCurve::new(vec![1.0, 2.0], vec![0.4, 0.5]).is_err());
    }

    #[test]
    fn jump_masses_sum_to_one_minus_last() {
        let s = sample(&[(1.0, true), (2.0, false), (3.0, true), (4.0, false)]);
        let km = km_fit(&s);
        let total: f64 = km.jumps().iter().map(|&(_, m)| m).sum();
        assert!((total - (1.0 - km.last_value())).abs() < 1e-15);
    }

    #[test]
    fn sample_sorted_with_events_first_at_ties() {
        let s = sample(&[(2.0, false), (2.0, true), (1.0, false)]);
        let statuses: Vec<_> = s.observations().iter().map(|o| (o.time(), o.is_event())).collect();
        assert_eq!(statuses, vec![(1.0, false), (2.0, true), (2.0, false)]);
    }
}
