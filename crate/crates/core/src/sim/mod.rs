//! Replicated Monte Carlo runs, stability classification and sweeps.

mod run;
mod stats;
mod sweep;

pub use run::{run, run_replications, CompactSet, RunConfig, Trace, TraceRecord, TraceSummary};
pub use stats::{
    classify_stability, estimate_throughput, ols_slope, recurrence_after, recurrence_times, ClassifierConfig,
    RecurrenceStats, StabilityClass, StabilityVerdict, CAPACITY,
};
pub use sweep::{
    explore_conjectures, sweep, ConjectureFamily, Exploration, SweepAxes, SweepCell, SweepResult,
    SWEEP_SCHEMA_VERSION,
};
