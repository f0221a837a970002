//! CSV output and schema-checking readers.
//!
//! Floats are written with 17 significant digits (`{:.16e}`), which is enough
//! for every `f64` to parse back to the same bits. Missing values are empty
//! fields.

use std::io::{Read, Write};

use crate::error::{Error, Result};
use crate::fluid::{DriftSample, FluidTrajectory};
use crate::sim::{StabilityClass, SweepResult, Trace, TraceSummary};

pub const SWEEP_HEADER: [&str; 12] = [
    "cell",
    "lambda",
    "d",
    "beta",
    "verdict",
    "slope",
    "slope_ci_lo",
    "slope_ci_hi",
    "recurrences",
    "mean_return",
    "throughput",
    "error",
];
pub const TRAJECTORY_HEADER: [&str; 5] = ["traj", "t", "x", "y", "status"];
pub const FIELD_HEADER: [&str; 4] = ["x", "y", "a", "b"];
pub const TRACE_HEADER: [&str; 6] = ["n", "N", "S", "p", "B", "J"];
pub const SUMMARY_HEADER: [&str; 9] = [
    "rep",
    "slots",
    "successes",
    "arrivals",
    "initial_backlog",
    "final_backlog",
    "max_backlog",
    "final_estimator",
    "diverged",
];

#[inline]
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(fmt_f64).unwrap_or_default()
}

fn schema(file: &'static str, msg: impl Into<String>) -> Error {
    Error::invalid(file, msg)
}

fn check_header(file: &'static str, got: &csv::StringRecord, want: &[&str]) -> Result<()> {
    if got.iter().ne(want.iter().copied()) {
        return Err(schema(
            file,
            format!("header {:?} does not match {want:?}", got.iter().collect::<Vec<_>>()),
        ));
    }
    Ok(())
}

fn parse<T: std::str::FromStr>(file: &'static str, line: u64, col: &str, s: &str) -> Result<T> {
    s.parse()
        .map_err(|_| schema(file, format!("line {line}: column {col}: cannot parse {s:?}")))
}

fn parse_opt(file: &'static str, line: u64, col: &str, s: &str) -> Result<Option<f64>> {
    if s.is_empty() {
        Ok(None)
    } else {
        parse(file, line, col, s).map(Some)
    }
}

/// Reads rows after checking the header and field count.
fn rows<R: Read>(file: &'static str, r: R, header: &[&str]) -> Result<Vec<(u64, csv::StringRecord)>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(r);
    check_header(file, rdr.headers()?, header)?;
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.len() != header.len() {
            return Err(schema(file, format!("line {line}: expected {} fields", header.len())));
        }
        out.push((line, rec));
    }
    Ok(out)
}

/// One row of the sweep table.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub cell: usize,
    pub lambda: f64,
    pub d: Option<f64>,
    pub beta: Option<f64>,
    pub verdict: Option<StabilityClass>,
    pub slope: Option<f64>,
    pub slope_ci_lo: Option<f64>,
    pub slope_ci_hi: Option<f64>,
    pub recurrences: Option<u64>,
    pub mean_return: Option<f64>,
    pub throughput: Option<f64>,
    pub error: Option<String>,
}

impl SweepRow {
    pub fn from_result(res: &SweepResult) -> Vec<SweepRow> {
        res.cells
            .iter()
            .map(|c| {
                let v = c.verdict.as_ref();
                SweepRow {
                    cell: c.index,
                    lambda: c.lambda,
                    d: c.d,
                    beta: c.beta,
                    verdict: v.map(|v| v.class),
                    slope: v.map(|v| v.slope),
                    slope_ci_lo: v.map(|v| v.slope_ci.0),
                    slope_ci_hi: v.map(|v| v.slope_ci.1),
                    recurrences: v.map(|v| v.recurrences),
                    mean_return: v.and_then(|v| v.mean_return),
                    throughput: v.map(|v| v.throughput),
                    error: c.error.clone(),
                }
            })
            .collect()
    }
}

pub fn write_sweep_rows<W: Write>(w: W, rows: &[SweepRow]) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(SWEEP_HEADER)?;
    for r in rows {
        wr.write_record([
            r.cell.to_string(),
            fmt_f64(r.lambda),
            fmt_opt(r.d),
            fmt_opt(r.beta),
            r.verdict.map(|v| v.as_str().to_string()).unwrap_or_default(),
            fmt_opt(r.slope),
            fmt_opt(r.slope_ci_lo),
            fmt_opt(r.slope_ci_hi),
            r.recurrences.map(|n| n.to_string()).unwrap_or_default(),
            fmt_opt(r.mean_return),
            fmt_opt(r.throughput),
            r.error.clone().unwrap_or_default(),
        ])?;
    }
    wr.flush()?;
    Ok(())
}

pub fn write_sweep_csv<W: Write>(w: W, res: &SweepResult) -> Result<()> {
    write_sweep_rows(w, &SweepRow::from_result(res))
}

pub fn read_sweep_csv<R: Read>(r: R) -> Result<Vec<SweepRow>> {
    const F: &str = "sweep csv";
    rows(F, r, &SWEEP_HEADER)?
        .into_iter()
        .map(|(line, rec)| {
            let verdict = match &rec[4] {
                "" => None,
                s => Some(
                    StabilityClass::parse(s)
                        .ok_or_else(|| schema(F, format!("line {line}: unknown verdict {s:?}")))?,
                ),
            };
            Ok(SweepRow {
                cell: parse(F, line, "cell", &rec[0])?,
                lambda: parse(F, line, "lambda", &rec[1])?,
                d: parse_opt(F, line, "d", &rec[2])?,
                beta: parse_opt(F, line, "beta", &rec[3])?,
                verdict,
                slope: parse_opt(F, line, "slope", &rec[5])?,
                slope_ci_lo: parse_opt(F, line, "slope_ci_lo", &rec[6])?,
                slope_ci_hi: parse_opt(F, line, "slope_ci_hi", &rec[7])?,
                recurrences: match &rec[8] {
                    "" => None,
                    s => Some(parse(F, line, "recurrences", s)?),
                },
                mean_return: parse_opt(F, line, "mean_return", &rec[9])?,
                throughput: parse_opt(F, line, "throughput", &rec[10])?,
                error: (!rec[11].is_empty()).then(|| rec[11].to_string()),
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryRow {
    pub traj: usize,
    pub t: f64,
    pub x: f64,
    pub y: f64,
    pub status: String,
}

/// All trajectories in one table, keyed by their index.
pub fn write_trajectories_csv<W: Write>(w: W, trajs: &[FluidTrajectory<f64>]) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(TRAJECTORY_HEADER)?;
    for (i, tr) in trajs.iter().enumerate() {
        for p in &tr.points {
            wr.write_record([
                i.to_string(),
                fmt_f64(p.t),
                fmt_f64(p.x),
                fmt_f64(p.y),
                tr.status.as_str().to_string(),
            ])?;
        }
    }
    wr.flush()?;
    Ok(())
}

pub fn read_trajectories_csv<R: Read>(r: R) -> Result<Vec<TrajectoryRow>> {
    const F: &str = "trajectory csv";
    rows(F, r, &TRAJECTORY_HEADER)?
        .into_iter()
        .map(|(line, rec)| {
            Ok(TrajectoryRow {
                traj: parse(F, line, "traj", &rec[0])?,
                t: parse(F, line, "t", &rec[1])?,
                x: parse(F, line, "x", &rec[2])?,
                y: parse(F, line, "y", &rec[3])?,
                status: match &rec[4] {
                    s @ ("converged" | "horizon_exceeded" | "diverged") => s.to_string(),
                    s => return Err(schema(F, format!("line {line}: unknown status {s:?}"))),
                },
            })
        })
        .collect()
}

pub fn write_field_csv<W: Write>(w: W, field: &[DriftSample<f64>]) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(FIELD_HEADER)?;
    for s in field {
        wr.write_record([fmt_f64(s.x), fmt_f64(s.y), fmt_f64(s.a), fmt_f64(s.b)])?;
    }
    wr.flush()?;
    Ok(())
}

pub fn read_field_csv<R: Read>(r: R) -> Result<Vec<DriftSample<f64>>> {
    const F: &str = "field csv";
    rows(F, r, &FIELD_HEADER)?
        .into_iter()
        .map(|(line, rec)| {
            Ok(DriftSample {
                x: parse(F, line, "x", &rec[0])?,
                y: parse(F, line, "y", &rec[1])?,
                a: parse(F, line, "a", &rec[2])?,
                b: parse(F, line, "b", &rec[3])?,
            })
        })
        .collect()
}

/// `(n, N, S, p, B, J)` per recorded slot.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRow {
    pub n: u64,
    pub backlog: u64,
    pub estimator: f64,
    pub prob: f64,
    pub transmitted: u64,
    pub success: bool,
}

pub fn write_trace_csv<W: Write>(w: W, trace: &Trace) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(TRACE_HEADER)?;
    for r in &trace.records {
        wr.write_record([
            r.slot.to_string(),
            r.backlog.to_string(),
            fmt_f64(r.estimator),
            fmt_f64(r.prob),
            r.transmitted.to_string(),
            u8::from(r.success).to_string(),
        ])?;
    }
    wr.flush()?;
    Ok(())
}

pub fn read_trace_csv<R: Read>(r: R) -> Result<Vec<TraceRow>> {
    const F: &str = "trace csv";
    rows(F, r, &TRACE_HEADER)?
        .into_iter()
        .map(|(line, rec)| {
            Ok(TraceRow {
                n: parse(F, line, "n", &rec[0])?,
                backlog: parse(F, line, "N", &rec[1])?,
                estimator: parse(F, line, "S", &rec[2])?,
                prob: parse(F, line, "p", &rec[3])?,
                transmitted: parse(F, line, "B", &rec[4])?,
                success: match &rec[5] {
                    "0" => false,
                    "1" => true,
                    s => return Err(schema(F, format!("line {line}: column J: expected 0 or 1, got {s:?}"))),
                },
            })
        })
        .collect()
}

/// One line per replication from [`TraceSummary`](crate::sim::TraceSummary).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SummaryRow {
    pub rep: usize,
    pub summary: TraceSummary,
}

pub fn write_summaries_csv<W: Write>(w: W, traces: &[Trace]) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(SUMMARY_HEADER)?;
    for (i, t) in traces.iter().enumerate() {
        let s = &t.summary;
        wr.write_record([
            i.to_string(),
            s.slots.to_string(),
            s.successes.to_string(),
            s.arrivals.to_string(),
            s.initial_backlog.to_string(),
            s.final_backlog.to_string(),
            s.max_backlog.to_string(),
            fmt_f64(s.final_estimator),
            s.diverged.to_string(),
        ])?;
    }
    wr.flush()?;
    Ok(())
}

pub fn read_summaries_csv<R: Read>(r: R) -> Result<Vec<SummaryRow>> {
    const F: &str = "summary csv";
    rows(F, r, &SUMMARY_HEADER)?
        .into_iter()
        .map(|(line, rec)| {
            Ok(SummaryRow {
                rep: parse(F, line, "rep", &rec[0])?,
                summary: TraceSummary {
                    slots: parse(F, line, "slots", &rec[1])?,
                    successes: parse(F, line, "successes", &rec[2])?,
                    arrivals: parse(F, line, "arrivals", &rec[3])?,
                    initial_backlog: parse(F, line, "initial_backlog", &rec[4])?,
                    final_backlog: parse(F, line, "final_backlog", &rec[5])?,
                    max_backlog: parse(F, line, "max_backlog", &rec[6])?,
                    final_estimator: parse(F, line, "final_estimator", &rec[7])?,
                    diverged: parse(F, line, "diverged", &rec[8])?,
                },
            })
        })
        .collect()
}
