//! The single JSON document that drives every subcommand.

use std::path::{Path, PathBuf};

use binfeed_core::fluid::{FieldGrid, FluidOptions};
use binfeed_core::model::ArrivalProcess;
use binfeed_core::protocols::{ProtocolSpec, ValidationOptions};
use binfeed_core::sim::{ConjectureFamily, RunConfig, SweepAxes, CAPACITY};
use serde::{Deserialize, Serialize};

pub const CONFIG_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    /// Protocol to simulate; class 1 with parameters derived from the
    /// analysis band when absent.
    pub protocol: Option<ProtocolSpec>,
    pub arrival: ArrivalProcess,
    pub run: RunConfig,
    pub analysis: AnalysisConfig,
    pub sweep: SweepAxes,
    pub explore: Option<ExploreConfig>,
    pub output: OutputConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalysisConfig {
    pub lambda0: f64,
    pub lambda1: f64,
    /// Requested `C`, `beta`, `D`; derived when absent.
    pub c: Option<f64>,
    pub beta: Option<f64>,
    pub d: Option<f64>,
    pub beta_step: f64,
    pub lambda_grid: usize,
    /// Rates checked by `verify-lemma`, spread evenly over the band.
    pub band_points: usize,
    /// Arrival rate of the fluid model.
    pub lambda: f64,
    /// Starting points on the unit simplex for `fluid`.
    pub directions: usize,
    pub fluid: FluidOptions<f64>,
    pub field: FieldGrid<f64>,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        Self {
            lambda0: 0.25,
            lambda1: 0.35,
            c: None,
            beta: None,
            d: None,
            beta_step: 1e-3,
            lambda_grid: 200,
            band_points: 21,
            lambda: 0.3,
            directions: 20,
            fluid: FluidOptions::default(),
            field: FieldGrid::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExploreConfig {
    #[serde(flatten)]
    pub family: ConjectureFamily,
    pub lambdas: Vec<f64>,
    #[serde(default)]
    pub validation: ValidationOptions,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: PathBuf,
    /// Also write the full record table of every replication.
    pub traces: bool,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("out"),
            traces: false,
        }
    }
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            schema_version: CONFIG_SCHEMA_VERSION,
            protocol: None,
            arrival: ArrivalProcess::Poisson { rate: 0.3 },
            run: RunConfig {
                horizon: 2_000_000,
                initial_backlog: 10_000,
                initial_estimator: Some(10_000.0),
                ..RunConfig::default()
            },
            analysis: AnalysisConfig::default(),
            sweep: SweepAxes {
                lambda: vec![0.25, 0.3, 0.35],
                ..SweepAxes::default()
            },
            explore: None,
            output: OutputConfig::default(),
        }
    }
}

/// Problem in a configuration document, with a `path:line:column` prefix
/// when the offending key can be found in the source text.
#[derive(Debug)]
pub struct ConfigError(pub String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

/// Position of the last key of `path`, searching each key after the
/// previous one.
fn locate(text: &str, path: &[&str]) -> Option<(usize, usize)> {
    let mut from = 0;
    for key in path {
        let needle = format!("\"{key}\"");
        let mut search = from;
        loop {
            let at = search + text[search..].find(&needle)?;
            let rest = text[at + needle.len()..].trim_start();
            if rest.starts_with(':') {
                from = at;
                break;
            }
            search = at + needle.len();
        }
    }
    let line = text[..from].matches('\n').count() + 1;
    let col = from - text[..from].rfind('\n').map_or(0, |i| i + 1) + 1;
    Some((line, col))
}

struct Source<'a> {
    name: &'a str,
    text: Option<&'a str>,
}

impl Source<'_> {
    fn err(&self, path: &[&str], msg: impl std::fmt::Display) -> ConfigError {
        let key = path.join(".");
        match self.text.and_then(|t| locate(t, path)) {
            Some((l, c)) => ConfigError(format!("{}:{l}:{c}: {key}: {msg}", self.name)),
            None => ConfigError(format!("{}: {key}: {msg}", self.name)),
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError(format!("{}: cannot read: {e}", path.display())))?;
        Self::parse(&text, &path.display().to_string())
    }

    pub fn parse(text: &str, name: &str) -> Result<Self, ConfigError> {
        let cfg: Self = serde_json::from_str(text)
            .map_err(|e| ConfigError(format!("{name}:{}:{}: {e}", e.line(), e.column())))?;
        cfg.check(&Source { name, text: Some(text) })?;
        Ok(cfg)
    }

    /// Cross-field checks on a configuration built in code or altered by
    /// command-line flags.
    pub fn validate(&self) -> Result<(), ConfigError> {
        self.check(&Source {
            name: "configuration",
            text: None,
        })
    }

    fn check(&self, src: &Source<'_>) -> Result<(), ConfigError> {
        if self.schema_version != CONFIG_SCHEMA_VERSION {
            return Err(src.err(
                &["schema_version"],
                format!("unsupported version {}, expected {CONFIG_SCHEMA_VERSION}", self.schema_version),
            ));
        }
        let a = &self.analysis;
        if !(a.lambda0 > 0.0) {
            return Err(src.err(&["analysis", "lambda0"], format!("{} must be positive", a.lambda0)));
        }
        if !(a.lambda0 < a.lambda1) {
            return Err(src.err(
                &["analysis", "lambda1"],
                format!("need lambda0 < lambda1, got {} >= {}", a.lambda0, a.lambda1),
            ));
        }
        if !(a.lambda1 < CAPACITY) {
            return Err(src.err(
                &["analysis", "lambda1"],
                format!("{} is not below the channel capacity e^-1 = {CAPACITY:.6}", a.lambda1),
            ));
        }
        if !(a.lambda > 0.0 && a.lambda < 1.0) {
            return Err(src.err(&["analysis", "lambda"], format!("{} outside (0, 1)", a.lambda)));
        }
        if !(a.beta_step > 0.0 && a.beta_step < 1.0) {
            return Err(src.err(&["analysis", "beta_step"], "must lie in (0, 1)"));
        }
        if a.lambda_grid < 2 {
            return Err(src.err(&["analysis", "lambda_grid"], "need at least 2 points"));
        }
        if a.band_points == 0 {
            return Err(src.err(&["analysis", "band_points"], "need at least 1 point"));
        }
        for (key, v) in [("c", a.c), ("beta", a.beta), ("d", a.d)] {
            if let Some(v) = v {
                if !(v > 0.0 && v.is_finite()) {
                    return Err(src.err(&["analysis", key], format!("{v} is not positive")));
                }
            }
        }
        if let Some(b) = a.beta {
            if b >= 1.0 {
                return Err(src.err(&["analysis", "beta"], format!("{b} outside (0, 1)")));
            }
        }
        let f = &a.fluid;
        if !(f.dt > 0.0 && f.horizon > 0.0 && f.eps_stop > 0.0 && f.eps_stop < 1.0 && f.guard > 1.0) {
            return Err(src.err(
                &["analysis", "fluid"],
                "need dt > 0, horizon > 0, eps_stop in (0, 1), guard > 1",
            ));
        }
        if let Some(p) = &self.protocol {
            p.validate().map_err(|e| src.err(&["protocol"], e))?;
        }
        self.arrival.validate().map_err(|e| src.err(&["arrival"], e))?;
        self.run.validate().map_err(|e| src.err(&["run"], e))?;
        for &l in &self.sweep.lambda {
            if !(l > 0.0) {
                return Err(src.err(&["sweep", "lambda"], format!("rate {l} is not positive")));
            }
        }
        if let Some(x) = &self.explore {
            if x.lambdas.iter().any(|&l| !(l > 0.0)) {
                return Err(src.err(&["explore", "lambdas"], "rates must be positive"));
            }
        }
        Ok(())
    }
}
