use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{step, ArrivalProcess, RngStream, SystemState};
use crate::protocols::ProtocolSpec;

/// Region `{N <= max_backlog, S <= max_estimator}` used for recurrence counts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CompactSet {
    pub max_backlog: u64,
    pub max_estimator: f64,
}

impl CompactSet {
    /// `N* = 100`, `S* = 10` times the protocol's estimator jump scale.
    pub fn default_for(spec: &ProtocolSpec) -> Self {
        Self {
            max_backlog: 100,
            max_estimator: 10.0 * spec.estimator_scale().max(1.0),
        }
    }

    #[inline]
    pub fn contains(&self, backlog: u64, estimator: f64) -> bool {
        backlog <= self.max_backlog && estimator <= self.max_estimator
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub horizon: u64,
    pub replications: usize,
    pub seed: u64,
    pub initial_backlog: u64,
    /// Overrides the protocol's initial estimator.
    pub initial_estimator: Option<f64>,
    pub stride: u64,
    pub warmup_fraction: f64,
    /// Defaults to [`CompactSet::default_for`] the protocol.
    pub compact_set: Option<CompactSet>,
    /// Runs stop and are marked diverged once the backlog exceeds this.
    pub backlog_guard: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            horizon: 200_000,
            replications: 10,
            seed: 1,
            initial_backlog: 0,
            initial_estimator: None,
            stride: 10,
            warmup_fraction: 0.25,
            compact_set: None,
            backlog_guard: 1_000_000_000,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if self.replications == 0 {
            return Err(Error::invalid("replications", "must be at least 1"));
        }
        if self.stride == 0 {
            return Err(Error::invalid("stride", "must be at least 1"));
        }
        if !(0.0..1.0).contains(&self.warmup_fraction) {
            return Err(Error::invalid("warmup_fraction", "must lie in [0, 1)"));
        }
        if let Some(k) = &self.compact_set {
            if k.max_backlog < 1 || !(k.max_estimator >= 1.0) {
                return Err(Error::invalid("compact_set", "thresholds must be at least 1"));
            }
        }
        Ok(())
    }

    pub fn warmup_slots(&self) -> u64 {
        (self.horizon as f64 * self.warmup_fraction).floor() as u64
    }

    pub fn compact_set_for(&self, spec: &ProtocolSpec) -> CompactSet {
        self.compact_set.unwrap_or_else(|| CompactSet::default_for(spec))
    }
}

/// State at the start of slot `slot` together with that slot's draws.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub slot: u64,
    pub backlog: u64,
    pub estimator: f64,
    pub prob: f64,
    pub transmitted: u64,
    pub success: bool,
    /// Successes over slots `0..slot`.
    pub cum_successes: u64,
    /// Arrivals over slots `0..slot`.
    pub cum_arrivals: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct TraceSummary {
    pub slots: u64,
    pub successes: u64,
    pub arrivals: u64,
    pub initial_backlog: u64,
    pub final_backlog: u64,
    pub final_estimator: f64,
    pub max_backlog: u64,
    pub diverged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trace {
    pub stream: RngStream,
    pub stride: u64,
    pub records: Vec<TraceRecord>,
    pub summary: TraceSummary,
}

impl Trace {
    /// `N_end = N_0 + arrivals - successes`.
    pub fn conserves_messages(&self) -> bool {
        let s = &self.summary;
        s.initial_backlog + s.arrivals == s.final_backlog + s.successes
    }
}

/// Simulates one chain for `cfg.horizon` slots, recording every `cfg.stride`-th slot.
pub fn run(spec: &ProtocolSpec, proc: &ArrivalProcess, cfg: &RunConfig, stream: RngStream) -> Result<Trace> {
    spec.validate()?;
    proc.validate()?;
    cfg.validate()?;
    let s0 = cfg.initial_estimator.unwrap_or_else(|| spec.initial_estimator());
    let mut state = SystemState::new(cfg.initial_backlog, s0)?;
    let mut rng = stream.rng();
    let mut summary = TraceSummary {
        initial_backlog: state.backlog,
        final_backlog: state.backlog,
        final_estimator: state.estimator,
        max_backlog: state.backlog,
        ..TraceSummary::default()
    };
    let mut records = Vec::with_capacity((cfg.horizon / cfg.stride) as usize + 1);
    for n in 0..cfg.horizon {
        let (next, out) = step(&state, spec, proc, &mut rng)?;
        if n % cfg.stride == 0 {
            records.push(TraceRecord {
                slot: n,
                backlog: state.backlog,
                estimator: state.estimator,
                prob: out.prob,
                transmitted: out.transmitted,
                success: out.success(),
                cum_successes: summary.successes,
                cum_arrivals: summary.arrivals,
            });
        }
        summary.slots += 1;
        summary.successes += u64::from(out.success());
        summary.arrivals += out.arrivals;
        summary.max_backlog = summary.max_backlog.max(next.backlog);
        state = next;
        if state.backlog > cfg.backlog_guard {
            summary.diverged = true;
            break;
        }
    }
    summary.final_backlog = state.backlog;
    summary.final_estimator = state.estimator;
    Ok(Trace {
        stream,
        stride: cfg.stride,
        records,
        summary,
    })
}

/// Runs `cfg.replications` independent chains for sweep cell `cell` on a pool
/// of `jobs` threads. Output order is the replication index.
pub fn run_replications(
    spec: &ProtocolSpec,
    proc: &ArrivalProcess,
    cfg: &RunConfig,
    cell: usize,
    jobs: usize,
) -> Result<Vec<Trace>> {
    with_pool(jobs, || replicate(spec, proc, cfg, cell))
}

/// Replications of one cell on whichever pool is current.
pub(crate) fn replicate(spec: &ProtocolSpec, proc: &ArrivalProcess, cfg: &RunConfig, cell: usize) -> Result<Vec<Trace>> {
    (0..cfg.replications)
        .into_par_iter()
        .map(|rep| run(spec, proc, cfg, RngStream::for_cell(cfg.seed, cell, rep)))
        .collect()
}

pub(crate) fn with_pool<R: Send>(jobs: usize, f: impl FnOnce() -> R + Send) -> R {
    match rayon::ThreadPoolBuilder::new().num_threads(jobs.max(1)).build() {
        Ok(pool) => pool.install(f),
        Err(_) => f(),
    }
}
