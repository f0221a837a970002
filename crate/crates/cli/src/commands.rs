use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context as _};
use binfeed_core::fluid::{
    derive_params as derive, drift_field as field, integrate_fluid, simplex_directions, verify_lemma as verify,
    DeriveOptions, DerivedParams, FluidParams, LemmaReport, TrajectoryStatus,
};
use binfeed_core::protocols::{A1Params, ProtocolSpec};
use binfeed_core::report;
use binfeed_core::sim::{self, ClassifierConfig, SweepCell, SweepResult, SWEEP_SCHEMA_VERSION};
use binfeed_core::Error;
use serde::Serialize;

use crate::config::{ConfigError, ExperimentConfig};
use crate::{BandArgs, Status};

/// Line to stdout; a closed pipe is not an error worth reporting.
macro_rules! say {
    ($($t:tt)*) => {{
        use std::io::Write as _;
        let _ = writeln!(std::io::stdout().lock(), $($t)*);
    }};
}

pub struct Context {
    /// `--out` was passed; JSON-only commands then also write their report.
    pub out_given: bool,
    pub jobs: usize,
}

fn apply_band(cfg: &mut ExperimentConfig, b: &BandArgs) -> Result<(), ConfigError> {
    let a = &mut cfg.analysis;
    if let Some(v) = b.lambda0 {
        a.lambda0 = v;
    }
    if let Some(v) = b.lambda1 {
        a.lambda1 = v;
    }
    a.beta = b.beta.or(a.beta);
    a.c = b.c.or(a.c);
    a.d = b.d.or(a.d);
    cfg.validate()
}

fn derive_for(cfg: &ExperimentConfig) -> binfeed_core::Result<DerivedParams<f64>> {
    let a = &cfg.analysis;
    derive(
        a.lambda0,
        a.lambda1,
        &DeriveOptions {
            c: a.c,
            beta: a.beta,
            d: a.d,
            beta_step: a.beta_step,
            lambda_grid: a.lambda_grid,
        },
    )
}

/// Derived `(C, beta, D)`, except that an explicit `D` is taken as given
/// rather than raised to the derived lower bound.
fn fluid_params_for(cfg: &ExperimentConfig, lambda: f64) -> anyhow::Result<FluidParams<f64>> {
    let d = derive_for(cfg)?;
    Ok(FluidParams::new(lambda, d.beta, d.c, cfg.analysis.d.unwrap_or(d.d))?)
}

/// The configured protocol, or class 1 with derived parameters.
pub fn protocol_for(cfg: &ExperimentConfig) -> anyhow::Result<ProtocolSpec> {
    if let Some(p) = &cfg.protocol {
        return Ok(p.clone());
    }
    let d = derive_for(cfg).context("deriving class-1 parameters for the default protocol")?;
    Ok(ProtocolSpec::A1(A1Params::new(d.c, d.d, d.beta, 1.0)?))
}

fn out_dir(cfg: &ExperimentConfig) -> anyhow::Result<&Path> {
    let dir = cfg.output.dir.as_path();
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    Ok(dir)
}

fn create(dir: &Path, name: &str) -> anyhow::Result<(PathBuf, BufWriter<File>)> {
    let path = dir.join(name);
    let f = File::create(&path).with_context(|| format!("creating {}", path.display()))?;
    Ok((path, BufWriter::new(f)))
}

fn write_json<T: Serialize>(dir: &Path, name: &str, v: &T) -> anyhow::Result<PathBuf> {
    let (path, mut w) = create(dir, name)?;
    serde_json::to_writer_pretty(&mut w, v)?;
    use std::io::Write;
    writeln!(w)?;
    w.flush()?;
    Ok(path)
}

fn wrote(path: &Path) {
    eprintln!("wrote {}", path.display());
}

pub fn derive_params(ctx: &Context, mut cfg: ExperimentConfig, b: &BandArgs) -> anyhow::Result<Status> {
    apply_band(&mut cfg, b)?;
    let d = derive_for(&cfg)?;
    say!("{}", serde_json::to_string_pretty(&d)?);
    if ctx.out_given {
        wrote(&write_json(out_dir(&cfg)?, "derived_params.json", &d)?);
    }
    Ok(Status::Ok)
}

#[derive(Serialize)]
struct LemmaSuite {
    schema_version: u32,
    lambda0: f64,
    lambda1: f64,
    params: FluidParams<f64>,
    passed: bool,
    reports: Vec<LemmaReport<f64>>,
}

pub fn verify_lemma(ctx: &Context, mut cfg: ExperimentConfig, b: &BandArgs) -> anyhow::Result<Status> {
    apply_band(&mut cfg, b)?;
    let (l0, l1) = (cfg.analysis.lambda0, cfg.analysis.lambda1);
    let params = fluid_params_for(&cfg, l0)?;
    let n = cfg.analysis.band_points;
    let mut reports = Vec::with_capacity(n);
    for i in 0..n {
        let lambda = if n == 1 {
            (l0 + l1) / 2.0
        } else {
            l0 + (l1 - l0) * i as f64 / (n - 1) as f64
        };
        reports.push(verify(&params.with_lambda(lambda)?, Some((l0, l1))));
    }
    let passed = reports.iter().all(|r| r.passed());
    for r in reports.iter().filter(|r| !r.passed()) {
        eprintln!("lambda = {}: failed {}", r.params.lambda, r.failures().join(", "));
    }
    let suite = LemmaSuite {
        schema_version: binfeed_core::fluid::SCHEMA_VERSION,
        lambda0: l0,
        lambda1: l1,
        params,
        passed,
        reports,
    };
    say!("{}", serde_json::to_string_pretty(&suite)?);
    if ctx.out_given {
        wrote(&write_json(out_dir(&cfg)?, "lemma.json", &suite)?);
    }
    Ok(if passed { Status::Ok } else { Status::CheckFailed })
}

#[derive(Serialize)]
struct FluidSummary {
    schema_version: u32,
    params: FluidParams<f64>,
    starts: Vec<(f64, f64)>,
    statuses: Vec<&'static str>,
    final_times: Vec<f64>,
    all_converged: bool,
}

pub fn fluid(
    _ctx: &Context,
    mut cfg: ExperimentConfig,
    b: &BandArgs,
    lambda: Option<f64>,
) -> anyhow::Result<Status> {
    apply_band(&mut cfg, b)?;
    let lambda = lambda.unwrap_or(cfg.analysis.lambda);
    let params = fluid_params_for(&cfg, lambda)?;
    let starts = simplex_directions::<f64>(cfg.analysis.directions);
    if starts.is_empty() {
        return Err(Error::EmptyGrid).context("analysis.directions");
    }
    let field = field(&params, &cfg.analysis.field).context("analysis.field")?;
    let trajs = starts
        .iter()
        .map(|&(x, y)| integrate_fluid(x, y, &params, &cfg.analysis.fluid))
        .collect::<binfeed_core::Result<Vec<_>>>()?;
    let dir = out_dir(&cfg)?;
    let (p, w) = create(dir, "trajectories.csv")?;
    report::write_trajectories_csv(w, &trajs)?;
    wrote(&p);
    let (p, w) = create(dir, "field.csv")?;
    report::write_field_csv(w, &field)?;
    wrote(&p);
    let all_converged = trajs.iter().all(|t| t.status == TrajectoryStatus::Converged);
    let summary = FluidSummary {
        schema_version: binfeed_core::fluid::SCHEMA_VERSION,
        params,
        starts,
        statuses: trajs.iter().map(|t| t.status.as_str()).collect(),
        final_times: trajs.iter().map(|t| t.final_time).collect(),
        all_converged,
    };
    wrote(&write_json(dir, "fluid.json", &summary)?);
    say!(
        "{} of {} trajectories converged",
        trajs.iter().filter(|t| t.status == TrajectoryStatus::Converged).count(),
        trajs.len()
    );
    Ok(if all_converged { Status::Ok } else { Status::CheckFailed })
}

pub fn drift_field(
    _ctx: &Context,
    mut cfg: ExperimentConfig,
    b: &BandArgs,
    lambda: Option<f64>,
) -> anyhow::Result<Status> {
    apply_band(&mut cfg, b)?;
    let params = fluid_params_for(&cfg, lambda.unwrap_or(cfg.analysis.lambda))?;
    let f = field(&params, &cfg.analysis.field).context("analysis.field")?;
    let (p, w) = create(out_dir(&cfg)?, "field.csv")?;
    report::write_field_csv(w, &f)?;
    wrote(&p);
    Ok(Status::Ok)
}

pub fn simulate(ctx: &Context, cfg: ExperimentConfig) -> anyhow::Result<Status> {
    let spec = protocol_for(&cfg)?;
    let traces = sim::run_replications(&spec, &cfg.arrival, &cfg.run, 0, ctx.jobs)?;
    let lambda = cfg.arrival.mean();
    let verdict = sim::classify_stability(
        &traces,
        &ClassifierConfig {
            lambda: Some(lambda),
            warmup_fraction: cfg.run.warmup_fraction,
            compact_set: cfg.run.compact_set_for(&spec),
            ..ClassifierConfig::default()
        },
    )?;
    let (d, beta) = match &spec {
        ProtocolSpec::A1(p) => (Some(p.d), Some(p.beta)),
        ProtocolSpec::A2 { beta, .. } => (None, Some(*beta)),
        _ => (None, None),
    };
    let result = SweepResult {
        schema_version: SWEEP_SCHEMA_VERSION,
        axes: Default::default(),
        seed: cfg.run.seed,
        cells: vec![SweepCell {
            index: 0,
            lambda,
            d,
            beta,
            verdict: Some(verdict.clone()),
            error: None,
        }],
    };
    let dir = out_dir(&cfg)?;
    let (p, w) = create(dir, "simulate.csv")?;
    report::write_sweep_csv(w, &result)?;
    wrote(&p);
    let (p, w) = create(dir, "summaries.csv")?;
    report::write_summaries_csv(w, &traces)?;
    wrote(&p);
    if cfg.output.traces {
        for (i, t) in traces.iter().enumerate() {
            let (p, w) = create(dir, &format!("trace_{i}.csv"))?;
            report::write_trace_csv(w, t)?;
            wrote(&p);
        }
    }
    #[derive(Serialize)]
    struct Out<'a> {
        schema_version: u32,
        protocol: &'a ProtocolSpec,
        lambda: f64,
        verdict: &'a sim::StabilityVerdict,
    }
    let out = Out {
        schema_version: SWEEP_SCHEMA_VERSION,
        protocol: &spec,
        lambda,
        verdict: &verdict,
    };
    wrote(&write_json(dir, "verdict.json", &out)?);
    say!(
        "{}: slope {:.3e} [{:.3e}, {:.3e}], throughput {:.4}, {} recurrences",
        verdict.class.as_str(),
        verdict.slope,
        verdict.slope_ci.0,
        verdict.slope_ci.1,
        verdict.throughput,
        verdict.recurrences
    );
    Ok(Status::Ok)
}

pub fn sweep(ctx: &Context, cfg: ExperimentConfig) -> anyhow::Result<Status> {
    let spec = protocol_for(&cfg)?;
    let res = sim::sweep(&cfg.sweep, &spec, &cfg.arrival, &cfg.run, ctx.jobs).context("sweep")?;
    let dir = out_dir(&cfg)?;
    let (p, w) = create(dir, "sweep.csv")?;
    report::write_sweep_csv(w, &res)?;
    wrote(&p);
    wrote(&write_json(dir, "sweep.json", &res)?);
    for c in &res.cells {
        match (&c.verdict, &c.error) {
            (Some(v), _) => say!("cell {}: lambda {} -> {}", c.index, c.lambda, v.class.as_str()),
            (None, Some(e)) => say!("cell {}: lambda {} -> error: {e}", c.index, c.lambda),
            _ => {}
        }
    }
    Ok(Status::Ok)
}

pub fn explore(ctx: &Context, cfg: ExperimentConfig) -> anyhow::Result<Status> {
    let Some(x) = &cfg.explore else {
        bail!("configuration has no explore block");
    };
    match sim::explore_conjectures(&x.family, &x.lambdas, &cfg.arrival, &cfg.run, &x.validation, ctx.jobs) {
        Ok(res) => {
            let dir = out_dir(&cfg)?;
            let (p, w) = create(dir, "explore.csv")?;
            report::write_sweep_csv(w, &res.sweep)?;
            wrote(&p);
            wrote(&write_json(dir, "explore.json", &res)?);
            for c in &res.sweep.cells {
                if let Some(v) = &c.verdict {
                    say!("{}: lambda {} -> {}", res.label, c.lambda, v.class.as_str());
                }
            }
            Ok(Status::Ok)
        }
        Err(e @ Error::ClassValidation { .. }) => {
            eprintln!("rejected: {e}");
            Ok(Status::CheckFailed)
        }
        Err(e) => Err(e.into()),
    }
}
