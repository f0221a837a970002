use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use super::run::{CompactSet, Trace};
use crate::error::{Error, Result};

/// `e^{-1}`, the capacity of the collision channel.
pub const CAPACITY: f64 = std::f64::consts::E.recip();

/// Index of the first record at or after slot `warmup`.
fn first_after(trace: &Trace, warmup: u64) -> usize {
    trace.records.partition_point(|r| r.slot < warmup)
}

/// Successes per slot over slots `warmup..end`.
///
/// The window starts at the first recorded slot not before `warmup`, so with
/// a coarse stride the effective warmup rounds up to a stride multiple.
/// Returns 0 when no slot lies past the warmup.
pub fn estimate_throughput(trace: &Trace, warmup: u64) -> f64 {
    let i = first_after(trace, warmup);
    let Some(r) = trace.records.get(i) else {
        return 0.0;
    };
    let slots = trace.summary.slots.saturating_sub(r.slot);
    if slots == 0 {
        return 0.0;
    }
    (trace.summary.successes - r.cum_successes) as f64 / slots as f64
}

/// Visits of the recorded chain to a compact set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecurrenceStats {
    /// Recorded slots at which the chain was inside the set.
    pub hits: u64,
    /// Gaps, in slots, between consecutive hits.
    pub return_times: Vec<u64>,
    pub mean: Option<f64>,
    pub max: Option<u64>,
}

impl RecurrenceStats {
    fn from_slots(slots: impl Iterator<Item = u64>) -> Self {
        let mut hits = 0;
        let mut prev: Option<u64> = None;
        let mut return_times = Vec::new();
        for s in slots {
            hits += 1;
            if let Some(p) = prev {
                return_times.push(s - p);
            }
            prev = Some(s);
        }
        let mean = (!return_times.is_empty())
            .then(|| return_times.iter().sum::<u64>() as f64 / return_times.len() as f64);
        let max = return_times.iter().copied().max();
        Self {
            hits,
            return_times,
            mean,
            max,
        }
    }
}

/// Hits of `k` at the recorded slots of `trace`; resolution is the trace stride.
pub fn recurrence_times(trace: &Trace, k: &CompactSet) -> RecurrenceStats {
    recurrence_after(trace, k, 0)
}

/// As [`recurrence_times`], restricted to slots at or after `warmup`.
pub fn recurrence_after(trace: &Trace, k: &CompactSet, warmup: u64) -> RecurrenceStats {
    let i = first_after(trace, warmup);
    RecurrenceStats::from_slots(
        trace.records[i..]
            .iter()
            .filter(|r| k.contains(r.backlog, r.estimator))
            .map(|r| r.slot),
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClassifierConfig {
    /// Arrival rate; sets the transience threshold when above capacity.
    pub lambda: Option<f64>,
    pub warmup_fraction: f64,
    pub compact_set: CompactSet,
    /// Slope below which a run may be called stable, and the transience
    /// threshold when `lambda` does not exceed capacity.
    pub stable_slope: f64,
    pub min_hits_per_1e5: f64,
    /// Two-sided confidence level of the slope interval.
    pub confidence: f64,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        Self {
            lambda: None,
            warmup_fraction: 0.25,
            compact_set: CompactSet {
                max_backlog: 100,
                max_estimator: 1e3,
            },
            stable_slope: 1e-4,
            min_hits_per_1e5: 1.0,
            confidence: 0.95,
        }
    }
}

impl ClassifierConfig {
    /// `(lambda - e^{-1})/4` above capacity, `stable_slope` otherwise.
    pub fn slope_min(&self) -> f64 {
        match self.lambda {
            Some(l) if l > CAPACITY => (l - CAPACITY) / 4.0,
            _ => self.stable_slope,
        }
    }

    fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.warmup_fraction) {
            return Err(Error::invalid("warmup_fraction", "must lie in [0, 1)"));
        }
        if !(self.confidence > 0.0 && self.confidence < 1.0) {
            return Err(Error::invalid("confidence", "must lie in (0, 1)"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StabilityClass {
    Stable,
    Transient,
    Inconclusive,
}

impl StabilityClass {
    pub fn as_str(self) -> &'static str {
        match self {
            StabilityClass::Stable => "stable",
            StabilityClass::Transient => "transient",
            StabilityClass::Inconclusive => "inconclusive",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "stable" => Some(Self::Stable),
            "transient" => Some(Self::Transient),
            "inconclusive" => Some(Self::Inconclusive),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityVerdict {
    pub class: StabilityClass,
    /// Mean over replications of the OLS slope of `N` against slot.
    pub slope: f64,
    pub slope_ci: (f64, f64),
    pub slope_min: f64,
    /// Post-warmup hits of the compact set, summed over replications.
    pub recurrences: u64,
    pub hits_per_1e5: f64,
    pub mean_return: Option<f64>,
    /// Post-warmup successes per slot, pooled over replications.
    pub throughput: f64,
    pub replications: usize,
    pub post_warmup_slots: u64,
    pub any_diverged: bool,
}

/// Ordinary least squares slope of `ys` against `xs`; `None` with fewer than
/// two distinct abscissae.
pub fn ols_slope(xs: &[f64], ys: &[f64]) -> Option<f64> {
    let n = xs.len().min(ys.len());
    if n < 2 {
        return None;
    }
    let mx = xs[..n].iter().sum::<f64>() / n as f64;
    let my = ys[..n].iter().sum::<f64>() / n as f64;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        let dx = x - mx;
        sxy += dx * (y - my);
        sxx += dx * dx;
    }
    (sxx > 0.0).then(|| sxy / sxx)
}

/// Two-sided Student-t interval for the mean of `v`.
fn mean_ci(v: &[f64], confidence: f64) -> (f64, (f64, f64)) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let se = (var / n).sqrt();
    if se == 0.0 {
        return (mean, (mean, mean));
    }
    let t = StudentsT::new(0.0, 1.0, n - 1.0)
        .map(|d| d.inverse_cdf(0.5 + confidence / 2.0))
        .unwrap_or(f64::INFINITY);
    (mean, (mean - t * se, mean + t * se))
}

/// Classifies replicated traces of one configuration.
///
/// Each replication contributes the OLS slope of its post-warmup backlog
/// samples; the interval comes from the spread of those slopes across
/// replications, which sidesteps within-trace autocorrelation.
///
/// * transient: lower slope bound above [`ClassifierConfig::slope_min`];
/// * stable: upper slope bound below `stable_slope` and at least
///   `min_hits_per_1e5` compact-set hits per `10^5` post-warmup slots;
/// * inconclusive otherwise.
///
/// Null and positive recurrence are not told apart.
pub fn classify_stability(traces: &[Trace], cfg: &ClassifierConfig) -> Result<StabilityVerdict> {
    cfg.validate()?;
    if traces.len() < 3 {
        return Err(Error::TooFewTraces {
            needed: 3,
            got: traces.len(),
        });
    }
    let mut slopes = Vec::with_capacity(traces.len());
    let (mut hits, mut slots, mut successes) = (0u64, 0u64, 0u64);
    let (mut ret_sum, mut ret_n) = (0u64, 0usize);
    let mut any_diverged = false;
    for tr in traces {
        any_diverged |= tr.summary.diverged;
        let warmup = (tr.summary.slots as f64 * cfg.warmup_fraction).floor() as u64;
        let i = first_after(tr, warmup);
        let post = &tr.records[i..];
        let xs: Vec<f64> = post.iter().map(|r| r.slot as f64).collect();
        let ys: Vec<f64> = post.iter().map(|r| r.backlog as f64).collect();
        if let Some(s) = ols_slope(&xs, &ys) {
            slopes.push(s);
        }
        if let Some(r) = post.first() {
            slots += tr.summary.slots - r.slot;
            successes += tr.summary.successes - r.cum_successes;
        }
        let rec = recurrence_after(tr, &cfg.compact_set, warmup);
        hits += rec.hits;
        ret_sum += rec.return_times.iter().sum::<u64>();
        ret_n += rec.return_times.len();
    }
    let slope_min = cfg.slope_min();
    let hits_per_1e5 = if slots > 0 {
        hits as f64 * 1e5 / slots as f64
    } else {
        0.0
    };
    let (slope, slope_ci) = if slopes.len() >= 3 {
        mean_ci(&slopes, cfg.confidence)
    } else {
        (f64::NAN, (f64::NAN, f64::NAN))
    };
    let class = if slope_ci.0 > slope_min {
        StabilityClass::Transient
    } else if slope_ci.1 < cfg.stable_slope && hits_per_1e5 >= cfg.min_hits_per_1e5 {
        StabilityClass::Stable
    } else {
        StabilityClass::Inconclusive
    };
    Ok(StabilityVerdict {
        class,
        slope,
        slope_ci,
        slope_min,
        recurrences: hits,
        hits_per_1e5,
        mean_return: (ret_n > 0).then(|| ret_sum as f64 / ret_n as f64),
        throughput: if slots > 0 {
            successes as f64 / slots as f64
        } else {
            0.0
        },
        replications: traces.len(),
        post_warmup_slots: slots,
        any_diverged,
    })
}
