use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::run::{replicate, with_pool, RunConfig};
use super::stats::{classify_stability, ClassifierConfig, StabilityVerdict};
use crate::error::{Error, Result};
use crate::model::ArrivalProcess;
use crate::protocols::{
    geometric_grid, validate_eps, validate_h, EpsFunction, HFunction, ProtocolSpec, ValidationOptions,
    ValidityReport,
};

pub const SWEEP_SCHEMA_VERSION: u32 = 1;

/// Grid axes; an empty axis keeps the template's value.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SweepAxes {
    pub lambda: Vec<f64>,
    pub d: Vec<f64>,
    pub beta: Vec<f64>,
}

impl SweepAxes {
    pub fn is_empty(&self) -> bool {
        self.lambda.is_empty() && self.d.is_empty() && self.beta.is_empty()
    }

    /// Grid points in row-major order `(lambda, d, beta)`.
    pub fn points(&self) -> Vec<(Option<f64>, Option<f64>, Option<f64>)> {
        fn axis(v: &[f64]) -> Vec<Option<f64>> {
            if v.is_empty() {
                vec![None]
            } else {
                v.iter().copied().map(Some).collect()
            }
        }
        let mut out = Vec::new();
        for &l in &axis(&self.lambda) {
            for &d in &axis(&self.d) {
                for &b in &axis(&self.beta) {
                    out.push((l, d, b));
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepCell {
    pub index: usize,
    pub lambda: f64,
    /// `D` of a class-1 template; `None` for other classes.
    pub d: Option<f64>,
    pub beta: Option<f64>,
    pub verdict: Option<StabilityVerdict>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub schema_version: u32,
    pub axes: SweepAxes,
    pub seed: u64,
    pub cells: Vec<SweepCell>,
}

/// Template with the cell's `D` and `beta` substituted.
fn cell_spec(template: &ProtocolSpec, d: Option<f64>, beta: Option<f64>) -> Result<ProtocolSpec> {
    let mut spec = template.clone();
    match &mut spec {
        ProtocolSpec::A1(p) => {
            if let Some(d) = d {
                p.d = d;
            }
            if let Some(b) = beta {
                p.beta = b;
            }
        }
        ProtocolSpec::A2 { beta: pb, .. } => {
            if d.is_some() {
                return Err(Error::invalid("d", "the D axis applies to class-1 protocols only"));
            }
            if let Some(b) = beta {
                *pb = b;
            }
        }
        _ => {
            if d.is_some() || beta.is_some() {
                return Err(Error::invalid("axes", "D and beta axes need a class-1 or class-2 protocol"));
            }
        }
    }
    spec.validate()?;
    Ok(spec)
}

fn spec_d_beta(spec: &ProtocolSpec) -> (Option<f64>, Option<f64>) {
    match spec {
        ProtocolSpec::A1(p) => (Some(p.d), Some(p.beta)),
        ProtocolSpec::A2 { beta, .. } => (None, Some(*beta)),
        _ => (None, None),
    }
}

fn run_cell(
    index: usize,
    point: (Option<f64>, Option<f64>, Option<f64>),
    template: &ProtocolSpec,
    proc: &ArrivalProcess,
    cfg: &RunConfig,
) -> SweepCell {
    let (l, d, b) = point;
    let lambda = l.unwrap_or_else(|| proc.mean());
    let (td, tb) = spec_d_beta(template);
    let mut cell = SweepCell {
        index,
        lambda,
        d: d.or(td),
        beta: b.or(tb),
        verdict: None,
        error: None,
    };
    let outcome = (|| -> Result<StabilityVerdict> {
        let spec = cell_spec(template, d, b)?;
        let p = match l {
            Some(l) => proc.with_mean(l)?,
            None => proc.clone(),
        };
        let traces = replicate(&spec, &p, cfg, index)?;
        let cls = ClassifierConfig {
            lambda: Some(lambda),
            warmup_fraction: cfg.warmup_fraction,
            compact_set: cfg.compact_set_for(&spec),
            ..ClassifierConfig::default()
        };
        classify_stability(&traces, &cls)
    })();
    match outcome {
        Ok(v) => cell.verdict = Some(v),
        Err(e) => cell.error = Some(e.to_string()),
    }
    cell
}

/// Classifies every grid cell. Cell `i`, replication `r` always draws from
/// stream `(cfg.seed, i, r)`, so results do not depend on `jobs`. A failing
/// cell records its error and the sweep continues.
pub fn sweep(
    axes: &SweepAxes,
    template: &ProtocolSpec,
    proc: &ArrivalProcess,
    cfg: &RunConfig,
    jobs: usize,
) -> Result<SweepResult> {
    if axes.is_empty() {
        return Err(Error::EmptyGrid);
    }
    cfg.validate()?;
    proc.validate()?;
    let points = axes.points();
    let cells = with_pool(jobs, || {
        points
            .par_iter()
            .enumerate()
            .map(|(i, &pt)| run_cell(i, pt, template, proc, cfg))
            .collect::<Vec<_>>()
    });
    Ok(SweepResult {
        schema_version: SWEEP_SCHEMA_VERSION,
        axes: axes.clone(),
        seed: cfg.seed,
        cells,
    })
}

/// Protocol families whose stability is conjectured rather than proved.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum ConjectureFamily {
    A2 {
        c: f64,
        beta: f64,
        h: HFunction,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        h_down: Option<HFunction>,
    },
    A3 {
        c: f64,
        h: HFunction,
        eps: EpsFunction,
    },
}

impl ConjectureFamily {
    pub fn spec(&self) -> ProtocolSpec {
        match self.clone() {
            ConjectureFamily::A2 { c, beta, h, h_down } => ProtocolSpec::A2 {
                c,
                beta,
                h,
                h_down,
                s_init: 1.0,
            },
            ConjectureFamily::A3 { c, h, eps } => ProtocolSpec::A3 { c, h, eps, s_init: 1.0 },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Exploration {
    /// Always `"conjecture evidence"`: verdicts are finite-sample observations.
    pub label: String,
    pub family: ConjectureFamily,
    pub validation: Vec<ValidityReport>,
    pub sweep: SweepResult,
}

/// Runs the class validators, then a rate sweep over `lambdas`.
///
/// Step functions outside the admissible class are refused before any
/// simulation happens.
pub fn explore_conjectures(
    family: &ConjectureFamily,
    lambdas: &[f64],
    proc: &ArrivalProcess,
    cfg: &RunConfig,
    vopts: &ValidationOptions,
    jobs: usize,
) -> Result<Exploration> {
    let grid = geometric_grid(1.0, vopts.x_max, vopts.points_per_decade);
    let mut validation = Vec::new();
    let mut check = |kind: &'static str, rep: ValidityReport| -> Result<()> {
        let failed = rep.failures().join(", ");
        validation.push(rep);
        if failed.is_empty() {
            Ok(())
        } else {
            Err(Error::ClassValidation { kind, failed })
        }
    };
    match family {
        ConjectureFamily::A2 { h, h_down, .. } => {
            check("h", validate_h(h, &grid, vopts))?;
            if let Some(hd) = h_down {
                check("h_down", validate_h(hd, &grid, vopts))?;
            }
        }
        ConjectureFamily::A3 { h, eps, .. } => {
            check("h", validate_h(h, &grid, vopts))?;
            check("eps", validate_eps(h, eps, &grid, vopts))?;
        }
    }
    let axes = SweepAxes {
        lambda: lambdas.to_vec(),
        ..SweepAxes::default()
    };
    let sweep = sweep(&axes, &family.spec(), proc, cfg, jobs)?;
    Ok(Exploration {
        label: "conjecture evidence".into(),
        family: family.clone(),
        validation,
        sweep,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::protocols::A1Params;
    use crate::sim::StabilityClass;

    fn small_cfg() -> RunConfig {
        RunConfig {
            horizon: 20_000,
            replications: 3,
            initial_backlog: 50,
            ..RunConfig::default()
        }
    }

    fn a1() -> ProtocolSpec {
        ProtocolSpec::A1(A1Params::new(2.2, 50.0, 0.85, 1.0).unwrap())
    }

    #[test]
    fn empty_axes_rejected() {
        let r = sweep(&SweepAxes::default(), &a1(), &ArrivalProcess::default(), &small_cfg(), 1);
        assert_eq!(r, Err(Error::EmptyGrid));
    }

    #[test]
    fn grid_is_cartesian_and_ordered() {
        let axes = SweepAxes {
            lambda: vec![0.1, 0.2],
            d: vec![],
            beta: vec![0.8, 0.9, 0.95],
        };
        let pts = axes.points();
        assert_eq!(pts.len(), 6);
        assert_eq!(pts[0], (Some(0.1), None, Some(0.8)));
        assert_eq!(pts[5], (Some(0.2), None, Some(0.95)));
    }

    #[test]
    fn bad_cell_is_recorded_not_fatal() {
        let axes = SweepAxes {
            lambda: vec![0.2],
            d: vec![-1.0, 50.0],
            beta: vec![],
        };
        let r = sweep(&axes, &a1(), &ArrivalProcess::default(), &small_cfg(), 2).unwrap();
        assert_eq!(r.cells.len(), 2);
        assert!(r.cells[0].error.is_some() && r.cells[0].verdict.is_none());
        assert!(r.cells[1].verdict.is_some(), "{:?}", r.cells[1]);
        assert_eq!(r.cells[1].d, Some(50.0));
    }

    #[test]
    fn supercritical_cell_is_transient() {
        let axes = SweepAxes {
            lambda: vec![0.6],
            ..SweepAxes::default()
        };
        let r = sweep(&axes, &a1(), &ArrivalProcess::default(), &small_cfg(), 1).unwrap();
        let v = r.cells[0].verdict.as_ref().unwrap();
        assert_eq!(v.class, StabilityClass::Transient);
        assert!(v.slope > 0.15);
    }

    #[test]
    fn sweep_ignores_thread_count() {
        let axes = SweepAxes {
            lambda: vec![0.2, 0.4],
            beta: vec![0.8, 0.9],
            ..SweepAxes::default()
        };
        let a = sweep(&axes, &a1(), &ArrivalProcess::default(), &small_cfg(), 1).unwrap();
        let b = sweep(&axes, &a1(), &ArrivalProcess::default(), &small_cfg(), 3).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn linear_step_refused_before_simulation() {
        let fam = ConjectureFamily::A2 {
            c: 2.0,
            beta: 0.9,
            h: HFunction::Linear { slope: 2.0 },
            h_down: None,
        };
        let cfg = RunConfig {
            replications: 0,
            ..small_cfg()
        };
        let r = explore_conjectures(&fam, &[0.3], &ArrivalProcess::default(), &cfg, &Default::default(), 1);
        match r {
            Err(Error::ClassValidation { kind, failed }) => {
                assert_eq!(kind, "h");
                assert!(failed.contains("h(1) = 0") || failed.contains("h(x)/x -> 0"), "{failed}");
            }
            other => panic!("expected rejection, got {other:?}"),
        }
    }

    #[test]
    fn admissible_family_is_labelled_evidence() {
        let fam = ConjectureFamily::A3 {
            c: 2.0,
            h: HFunction::SqrtMinusOne,
            eps: EpsFunction::PowerDecay { gamma: 0.125 },
        };
        let r = explore_conjectures(&fam, &[0.2], &ArrivalProcess::default(), &small_cfg(), &Default::default(), 1)
            .unwrap();
        assert_eq!(r.label, "conjecture evidence");
        assert_eq!(r.validation.len(), 2);
        assert!(r.validation.iter().all(|v| v.passed()));
        assert_eq!(r.sweep.cells.len(), 1);
    }
}
