//! Transmission-probability and estimator-update rules.
//!
//! Binary-feedback classes:
//!
//! * `A1(C, D, beta)`: coin `I` picks `p = beta/S` or `p = 1/S`; the estimator
//!   grows by `C` on failure, by `C*D` on a success under `I = 0` and shrinks by
//!   `C*D` (clamped at 1) on a success under `I = 1`.
//! * `A2(C, h, beta)`: as `A1` with the success step `C*D` replaced by `h(S)`.
//! * `A3(C, h, eps)`: as `A2` with `beta` replaced by `1 - eps(S)`.
//!
//! Ternary baselines adapt `p` directly from empty/success/collision feedback.
//! They keep `S = 1/p` in the chain state so every protocol shares one state
//! layout, but they never interpret `S` as a backlog estimate.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{BinaryFeedback, ChannelFeedback, Coin};
use crate::scalar::Scalar;

/// `beta/S` for coin 0, `1/S` for coin 1.
pub fn a1_probability<T: Scalar>(estimator: T, coin: Coin, beta: T) -> Result<T> {
    if !(estimator >= T::one()) {
        return Err(Error::EstimatorBelowOne(estimator.as_f64()));
    }
    Ok(match coin {
        Coin::Zero => beta / estimator,
        Coin::One => estimator.recip(),
    })
}

pub fn a1_update<T: Scalar>(estimator: T, fb: BinaryFeedback, coin: Coin, c: T, d: T) -> T {
    binary_update(estimator, fb, coin, c, c * d, c * d)
}

/// Shared estimator rule: `+c` on failure, `+up` on success with coin 0,
/// `max(S - down, 1)` on success with coin 1.
#[inline]
fn binary_update<T: Scalar>(estimator: T, fb: BinaryFeedback, coin: Coin, c: T, up: T, down: T) -> T {
    match (fb, coin) {
        (BinaryFeedback::Failure, _) => estimator + c,
        (BinaryFeedback::Success, Coin::Zero) => estimator + up,
        (BinaryFeedback::Success, Coin::One) => (estimator - down).max(T::one()),
    }
}

pub fn a2_update(estimator: f64, fb: BinaryFeedback, coin: Coin, c: f64, h: &HFunction) -> f64 {
    a2_update_split(estimator, fb, coin, c, h, h)
}

/// Generalized class-2 rule with separate up and down step functions.
pub fn a2_update_split(
    estimator: f64,
    fb: BinaryFeedback,
    coin: Coin,
    c: f64,
    h_up: &HFunction,
    h_down: &HFunction,
) -> f64 {
    match (fb, coin) {
        (BinaryFeedback::Failure, _) => estimator + c,
        (BinaryFeedback::Success, Coin::Zero) => estimator + h_up.eval(estimator),
        (BinaryFeedback::Success, Coin::One) => (estimator - h_down.eval(estimator)).max(1.0),
    }
}

pub fn a3_probability(estimator: f64, coin: Coin, eps: &EpsFunction) -> Result<f64> {
    if !(estimator >= 1.0) {
        return Err(Error::EstimatorBelowOne(estimator));
    }
    Ok(match coin {
        Coin::Zero => (1.0 - eps.eval(estimator)) / estimator,
        Coin::One => 1.0 / estimator,
    })
}

/// Parameters of an `A1(C, D, beta)` protocol.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct A1Params {
    pub c: f64,
    pub d: f64,
    pub beta: f64,
    #[serde(default = "one")]
    pub s_init: f64,
}

fn one() -> f64 {
    1.0
}

impl A1Params {
    pub fn new(c: f64, d: f64, beta: f64, s_init: f64) -> Result<Self> {
        let p = Self { c, d, beta, s_init };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        positive("c", self.c)?;
        positive("d", self.d)?;
        if !(self.beta > 0.0 && self.beta < 1.0) {
            return Err(Error::invalid("beta", format!("{} outside (0, 1)", self.beta)));
        }
        at_least_one("s_init", self.s_init)
    }
}

fn positive(name: &'static str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::invalid(name, format!("{v} is not a finite positive number")))
    }
}

fn at_least_one(name: &'static str, v: f64) -> Result<()> {
    if v >= 1.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::invalid(name, format!("{v} is below 1")))
    }
}

/// Step-size function `h: [1, inf) -> [0, inf)` for classes 2 and 3.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum HFunction {
    /// `sqrt(x) - 1`
    SqrtMinusOne,
    /// `ln x`
    Log,
    /// `x^alpha - 1`, `alpha` in (0, 1)
    PowerMinusOne { alpha: f64 },
    /// `slope * x`; never in the class (ratio to `x` does not vanish).
    Linear { slope: f64 },
    /// Constant step, e.g. `C*D` to mimic class 1; never in the class (`h(1) != 0`).
    Constant { value: f64 },
    /// Piecewise-linear through `(xs, ys)`, extrapolated with the end slopes.
    Tabulated { xs: Vec<f64>, ys: Vec<f64> },
}

impl HFunction {
    pub fn eval(&self, x: f64) -> f64 {
        match self {
            HFunction::SqrtMinusOne => x.sqrt() - 1.0,
            HFunction::Log => x.ln(),
            HFunction::PowerMinusOne { alpha } => x.powf(*alpha) - 1.0,
            HFunction::Linear { slope } => slope * x,
            HFunction::Constant { value } => *value,
            HFunction::Tabulated { xs, ys } => interpolate(xs, ys, x),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            HFunction::PowerMinusOne { alpha } if !(*alpha > 0.0 && *alpha < 1.0) => {
                Err(Error::invalid("alpha", format!("{alpha} outside (0, 1)")))
            }
            HFunction::Tabulated { xs, ys } => check_table(xs, ys),
            _ => Ok(()),
        }
    }
}

/// Perturbation `eps: [1, inf) -> (0, 1/2]` used by class 3.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EpsFunction {
    /// `min(x^-gamma, 1/2)`
    PowerDecay { gamma: f64 },
    Constant { value: f64 },
    Tabulated { xs: Vec<f64>, ys: Vec<f64> },
}

impl EpsFunction {
    pub fn eval(&self, x: f64) -> f64 {
        match self {
            EpsFunction::PowerDecay { gamma } => x.powf(-gamma).min(0.5),
            EpsFunction::Constant { value } => *value,
            EpsFunction::Tabulated { xs, ys } => interpolate(xs, ys, x),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            EpsFunction::PowerDecay { gamma } if !(*gamma > 0.0 && *gamma < 0.5) => {
                Err(Error::invalid("gamma", format!("{gamma} outside (0, 1/2)")))
            }
            EpsFunction::Tabulated { xs, ys } => check_table(xs, ys),
            _ => Ok(()),
        }
    }
}

fn check_table(xs: &[f64], ys: &[f64]) -> Result<()> {
    if xs.len() < 2 || xs.len() != ys.len() {
        return Err(Error::invalid("xs", "table needs at least two points and equal-length columns"));
    }
    if xs.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::invalid("xs", "table abscissae must be strictly increasing"));
    }
    Ok(())
}

fn interpolate(xs: &[f64], ys: &[f64], x: f64) -> f64 {
    let n = xs.len();
    let i = match xs.partition_point(|&v| v <= x) {
        0 => 0,
        k if k >= n => n - 2,
        k => k - 1,
    };
    let t = (x - xs[i]) / (xs[i + 1] - xs[i]);
    ys[i] + t * (ys[i + 1] - ys[i])
}

/// Every protocol the simulator can run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "class", rename_all = "snake_case")]
pub enum ProtocolSpec {
    A1(A1Params),
    A2 {
        c: f64,
        beta: f64,
        h: HFunction,
        /// Separate step for the down branch; `h` is used when absent.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        h_down: Option<HFunction>,
        #[serde(default = "one")]
        s_init: f64,
    },
    A3 {
        c: f64,
        h: HFunction,
        eps: EpsFunction,
        #[serde(default = "one")]
        s_init: f64,
    },
    TernaryMultiplicative {
        up: f64,
        down: f64,
        #[serde(default = "TernaryBounds::default")]
        bounds: TernaryBounds,
        p_init: f64,
    },
    TernaryAdditive {
        up: f64,
        down: f64,
        #[serde(default = "TernaryBounds::default")]
        bounds: TernaryBounds,
        p_init: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TernaryBounds {
    pub p_min: f64,
    pub p_max: f64,
}

impl Default for TernaryBounds {
    fn default() -> Self {
        Self { p_min: 1e-9, p_max: 1.0 }
    }
}

impl TernaryBounds {
    #[inline]
    fn clamp(&self, p: f64) -> f64 {
        p.clamp(self.p_min, self.p_max)
    }
}

/// Ternary-feedback rules.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TernaryRule {
    Multiplicative { up: f64, down: f64 },
    Additive { up: f64, down: f64 },
}

/// Raises `p` after an empty slot, keeps it after a success, lowers it after
/// a collision.
pub fn ternary_update(p: f64, fb: ChannelFeedback, rule: TernaryRule, bounds: TernaryBounds) -> f64 {
    let next = match (rule, fb) {
        (_, ChannelFeedback::Success) => p,
        (TernaryRule::Multiplicative { up, .. }, ChannelFeedback::Empty) => p * up,
        (TernaryRule::Multiplicative { down, .. }, ChannelFeedback::Collision) => p * down,
        (TernaryRule::Additive { up, .. }, ChannelFeedback::Empty) => p + up,
        (TernaryRule::Additive { down, .. }, ChannelFeedback::Collision) => p - down,
    };
    bounds.clamp(next)
}

impl Default for ProtocolSpec {
    fn default() -> Self {
        ProtocolSpec::A1(A1Params {
            c: 2.2,
            d: 400.0,
            beta: 0.85,
            s_init: 1.0,
        })
    }
}

impl ProtocolSpec {
    pub fn validate(&self) -> Result<()> {
        match self {
            ProtocolSpec::A1(p) => p.validate(),
            ProtocolSpec::A2 {
                c,
                beta,
                h,
                h_down,
                s_init,
            } => {
                positive("c", *c)?;
                if !(*beta > 0.0 && *beta < 1.0) {
                    return Err(Error::invalid("beta", format!("{beta} outside (0, 1)")));
                }
                h.validate()?;
                if let Some(hd) = h_down {
                    hd.validate()?;
                }
                at_least_one("s_init", *s_init)
            }
            ProtocolSpec::A3 { c, h, eps, s_init } => {
                positive("c", *c)?;
                h.validate()?;
                eps.validate()?;
                at_least_one("s_init", *s_init)
            }
            ProtocolSpec::TernaryMultiplicative {
                up,
                down,
                bounds,
                p_init,
            } => {
                if !(*up > 1.0 && *down > 0.0 && *down < 1.0) {
                    return Err(Error::invalid("up/down", "multiplicative rule needs up > 1 > down > 0"));
                }
                check_bounds(bounds, *p_init)
            }
            ProtocolSpec::TernaryAdditive {
                up,
                down,
                bounds,
                p_init,
            } => {
                positive("up", *up)?;
                positive("down", *down)?;
                check_bounds(bounds, *p_init)
            }
        }
    }

    /// Initial value of the chain's estimator slot.
    pub fn initial_estimator(&self) -> f64 {
        match self {
            ProtocolSpec::A1(p) => p.s_init,
            ProtocolSpec::A2 { s_init, .. } | ProtocolSpec::A3 { s_init, .. } => *s_init,
            ProtocolSpec::TernaryMultiplicative { p_init, .. } | ProtocolSpec::TernaryAdditive { p_init, .. } => {
                1.0 / p_init
            }
        }
    }

    /// Characteristic size of estimator jumps, used to scale the default
    /// recurrence set.
    pub fn estimator_scale(&self) -> f64 {
        match self {
            ProtocolSpec::A1(p) => p.c * p.d,
            ProtocolSpec::A2 { c, .. } | ProtocolSpec::A3 { c, .. } => *c,
            _ => 1.0,
        }
    }

    pub fn is_ternary(&self) -> bool {
        matches!(
            self,
            ProtocolSpec::TernaryMultiplicative { .. } | ProtocolSpec::TernaryAdditive { .. }
        )
    }

    /// Transmission probability for the current slot.
    pub fn probability(&self, estimator: f64, coin: Coin) -> Result<f64> {
        match self {
            ProtocolSpec::A1(p) => a1_probability(estimator, coin, p.beta),
            ProtocolSpec::A2 { beta, .. } => a1_probability(estimator, coin, *beta),
            ProtocolSpec::A3 { eps, .. } => a3_probability(estimator, coin, eps),
            ProtocolSpec::TernaryMultiplicative { .. } | ProtocolSpec::TernaryAdditive { .. } => {
                if !(estimator >= 1.0) {
                    return Err(Error::EstimatorBelowOne(estimator));
                }
                Ok(1.0 / estimator)
            }
        }
    }

    /// Next estimator value. Binary classes see only success/failure.
    pub fn update(&self, estimator: f64, fb: ChannelFeedback, coin: Coin) -> f64 {
        match self {
            ProtocolSpec::A1(p) => a1_update(estimator, fb.binary(), coin, p.c, p.d),
            ProtocolSpec::A2 { c, h, h_down, .. } => {
                a2_update_split(estimator, fb.binary(), coin, *c, h, h_down.as_ref().unwrap_or(h))
            }
            ProtocolSpec::A3 { c, h, .. } => a2_update(estimator, fb.binary(), coin, *c, h),
            ProtocolSpec::TernaryMultiplicative { up, down, bounds, .. } => {
                let rule = TernaryRule::Multiplicative { up: *up, down: *down };
                1.0 / ternary_update(1.0 / estimator, fb, rule, *bounds)
            }
            ProtocolSpec::TernaryAdditive { up, down, bounds, .. } => {
                let rule = TernaryRule::Additive { up: *up, down: *down };
                1.0 / ternary_update(1.0 / estimator, fb, rule, *bounds)
            }
        }
    }
}

fn check_bounds(bounds: &TernaryBounds, p_init: f64) -> Result<()> {
    if !(bounds.p_min > 0.0 && bounds.p_min <= bounds.p_max && bounds.p_max <= 1.0) {
        return Err(Error::invalid("bounds", "need 0 < p_min <= p_max <= 1"));
    }
    if !(bounds.p_min..=bounds.p_max).contains(&p_init) {
        return Err(Error::invalid("p_init", format!("{p_init} outside the probability bounds")));
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Class validators
// ---------------------------------------------------------------------------

/// Finite-grid surrogates for the limit conditions on `h` and `eps`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ValidationOptions {
    /// Upper end of the geometric grid on `[1, x_max]`.
    pub x_max: f64,
    pub points_per_decade: usize,
    /// `h(x)/x` must be below this at `x_max`.
    pub ratio_threshold: f64,
    /// Width of the trailing window (in decades) used by trend tests.
    pub tail_decades: f64,
}

impl Default for ValidationOptions {
    fn default() -> Self {
        Self {
            x_max: 1e8,
            points_per_decade: 20,
            ratio_threshold: 0.05,
            tail_decades: 1.0,
        }
    }
}

impl ValidationOptions {
    pub fn grid(&self) -> Vec<f64> {
        geometric_grid(1.0, self.x_max, self.points_per_decade)
    }
}

/// Geometric grid on `[lo, hi]` with both end points included exactly.
pub fn geometric_grid(lo: f64, hi: f64, points_per_decade: usize) -> Vec<f64> {
    let decades = (hi / lo).log10();
    let n = ((decades * points_per_decade as f64).ceil() as usize).max(1);
    let mut g: Vec<f64> = (0..=n).map(|i| lo * 10f64.powf(decades * i as f64 / n as f64)).collect();
    g[0] = lo;
    g[n] = hi;
    g
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionCheck {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidityReport {
    pub subject: String,
    pub checks: Vec<ConditionCheck>,
}

impl ValidityReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failures(&self) -> Vec<&str> {
        self.checks.iter().filter(|c| !c.passed).map(|c| c.name.as_str()).collect()
    }

    fn push(&mut self, name: &str, passed: bool, detail: String) {
        self.checks.push(ConditionCheck {
            name: name.to_string(),
            passed,
            detail,
        });
    }
}

fn tail_start(grid: &[f64], decades: f64) -> usize {
    let last = *grid.last().expect("nonempty grid");
    let cut = last / 10f64.powf(decades);
    grid.partition_point(|&x| x < cut).min(grid.len().saturating_sub(2))
}

fn nondecreasing(vals: &[f64]) -> Option<usize> {
    vals.windows(2)
        .position(|w| w[1] < w[0] - 1e-12 * w[0].abs().max(1.0))
}

fn strictly_increasing(vals: &[f64]) -> bool {
    vals.windows(2).all(|w| w[1] > w[0])
}

fn strictly_decreasing(vals: &[f64]) -> bool {
    vals.windows(2).all(|w| w[1] < w[0])
}

/// Checks membership of `h` in the step-function class on a sorted grid.
pub fn validate_h(h: &HFunction, grid: &[f64], opts: &ValidationOptions) -> ValidityReport {
    let mut rep = ValidityReport {
        subject: format!("{h:?}"),
        checks: Vec::new(),
    };
    if grid.is_empty() {
        rep.push("grid", false, "empty grid".into());
        return rep;
    }
    let hv: Vec<f64> = grid.iter().map(|&x| h.eval(x)).collect();
    let h1 = h.eval(1.0);
    rep.push("h(1) = 0", h1 == 0.0, format!("h(1) = {h1}"));

    let min = hv.iter().cloned().fold(f64::INFINITY, f64::min);
    rep.push("h >= 0", min >= 0.0 && hv.iter().all(|v| v.is_finite()), format!("min h = {min}"));

    let bad = nondecreasing(&hv);
    rep.push(
        "h nondecreasing",
        bad.is_none(),
        bad.map_or("ok".into(), |i| format!("decreases after x = {}", grid[i])),
    );

    let tail = tail_start(grid, opts.tail_decades);
    rep.push(
        "h unbounded",
        strictly_increasing(&hv[tail..]),
        format!("h grows from {} to {} over the last decade", hv[tail], hv[hv.len() - 1]),
    );

    let rest: Vec<f64> = grid.iter().zip(&hv).map(|(x, v)| x - v).collect();
    let bad = nondecreasing(&rest);
    rep.push(
        "x - h(x) nondecreasing",
        bad.is_none(),
        bad.map_or("ok".into(), |i| format!("decreases after x = {}", grid[i])),
    );

    let ratio: Vec<f64> = grid.iter().zip(&hv).map(|(x, v)| v / x).collect();
    let end = ratio[ratio.len() - 1];
    let decreasing = strictly_decreasing(&ratio[tail..]);
    rep.push(
        "h(x)/x -> 0",
        end < opts.ratio_threshold && decreasing,
        format!(
            "h(x)/x = {end} at x = {}, decreasing over tail: {decreasing}",
            grid[grid.len() - 1]
        ),
    );
    rep
}

/// Checks membership of `eps` in the perturbation class attached to `h`.
pub fn validate_eps(h: &HFunction, eps: &EpsFunction, grid: &[f64], opts: &ValidationOptions) -> ValidityReport {
    let mut rep = ValidityReport {
        subject: format!("{eps:?} with {h:?}"),
        checks: Vec::new(),
    };
    if grid.is_empty() {
        rep.push("grid", false, "empty grid".into());
        return rep;
    }
    let ev: Vec<f64> = grid.iter().map(|&x| eps.eval(x)).collect();
    let out = ev.iter().position(|&e| !(e > 0.0 && e <= 0.5));
    rep.push(
        "eps in (0, 1/2]",
        out.is_none(),
        out.map_or("ok".into(), |i| format!("eps({}) = {}", grid[i], ev[i])),
    );

    let tail = tail_start(grid, opts.tail_decades);
    let bad = nondecreasing(&ev.iter().map(|e| -e).collect::<Vec<_>>());
    let decreasing = strictly_decreasing(&ev[tail..]);
    rep.push(
        "eps -> 0",
        bad.is_none() && decreasing,
        format!("eps = {} at x = {}, decreasing over tail: {decreasing}", ev[ev.len() - 1], grid[grid.len() - 1]),
    );

    let prod: Vec<f64> = grid.iter().zip(&ev).map(|(&x, e)| h.eval(x) * e * e).collect();
    rep.push(
        "h * eps^2 -> inf",
        strictly_increasing(&prod[tail..]),
        format!("h*eps^2 goes from {} to {} over the last decade", prod[tail], prod[prod.len() - 1]),
    );
    rep
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn opts() -> ValidationOptions {
        ValidationOptions::default()
    }

    #[test]
    fn a1_probability_examples() {
        assert_eq!(a1_probability(1.0f64, Coin::One, 0.9).unwrap(), 1.0);
        assert!((a1_probability(10.0f64, Coin::Zero, 0.9).unwrap() - 0.09).abs() < 1e-15);
        assert!((a1_probability(10.0f64, Coin::One, 0.9).unwrap() - 0.1).abs() < 1e-15);
        assert_eq!(a1_probability(0.5f64, Coin::One, 0.9), Err(Error::EstimatorBelowOne(0.5)));
        assert!((a1_probability(10.0f32, Coin::Zero, 0.9f32).unwrap() - 0.09).abs() < 1e-7);
    }

    #[test]
    fn a1_update_examples() {
        use BinaryFeedback::*;
        assert_eq!(a1_update(10.0, Failure, Coin::Zero, 3.0, 5.0), 13.0);
        assert_eq!(a1_update(10.0, Success, Coin::Zero, 3.0, 5.0), 25.0);
        assert_eq!(a1_update(2.0, Success, Coin::One, 3.0, 5.0), 1.0);
        assert_eq!(a1_update(100.0, Success, Coin::One, 3.0, 5.0), 85.0);
    }

    #[test]
    fn a2_update_examples() {
        use BinaryFeedback::*;
        assert_eq!(a2_update(1.0, Success, Coin::One, 2.0, &HFunction::Log), 1.0);
        let e2 = std::f64::consts::E.powi(2);
        assert!((a2_update(e2, Success, Coin::Zero, 2.0, &HFunction::Log) - (e2 + 2.0)).abs() < 1e-12);
        assert_eq!(a2_update(5.0, Failure, Coin::Zero, 2.0, &HFunction::Linear { slope: 9.0 }), 7.0);
    }

    #[test]
    fn split_update_uses_separate_down_step() {
        let spec = ProtocolSpec::A2 {
            c: 1.0,
            beta: 0.9,
            h: HFunction::Log,
            h_down: Some(HFunction::SqrtMinusOne),
            s_init: 1.0,
        };
        assert!((spec.update(100.0, ChannelFeedback::Success, Coin::Zero) - (100.0 + 100f64.ln())).abs() < 1e-12);
        assert_eq!(spec.update(100.0, ChannelFeedback::Success, Coin::One), 91.0);
    }

    #[test]
    fn a3_probability_examples() {
        let eps = EpsFunction::PowerDecay { gamma: 0.25 };
        assert_eq!(a3_probability(1.0, Coin::One, &eps).unwrap(), 1.0);
        let p = a3_probability(100.0, Coin::Zero, &eps).unwrap();
        assert!((p - 0.006_837_722_339_831_62).abs() < 1e-12, "{p}");
        assert_eq!(a3_probability(100.0, Coin::One, &eps).unwrap(), 0.01);
    }

    #[test]
    fn ternary_rules() {
        let b = TernaryBounds::default();
        let mult = TernaryRule::Multiplicative { up: 2.0, down: 0.5 };
        assert!((ternary_update(0.1, ChannelFeedback::Empty, mult, b) - 0.2).abs() < 1e-15);
        assert_eq!(ternary_update(0.1, ChannelFeedback::Success, mult, b), 0.1);
        assert_eq!(ternary_update(0.1, ChannelFeedback::Collision, mult, b), 0.05);
        assert_eq!(ternary_update(0.8, ChannelFeedback::Empty, mult, b), 1.0);
        let add = TernaryRule::Additive { up: 0.01, down: 0.01 };
        assert_eq!(ternary_update(0.005, ChannelFeedback::Collision, add, b), 1e-9);
    }

    #[test]
    fn ternary_spec_round_trips_through_estimator() {
        let spec = ProtocolSpec::TernaryMultiplicative {
            up: 2.0,
            down: 0.5,
            bounds: TernaryBounds::default(),
            p_init: 0.25,
        };
        spec.validate().unwrap();
        let s = spec.initial_estimator();
        assert_eq!(spec.probability(s, Coin::Zero).unwrap(), 0.25);
        let s2 = spec.update(s, ChannelFeedback::Empty, Coin::Zero);
        assert!((spec.probability(s2, Coin::One).unwrap() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn h_validator_accepts_class_members() {
        let grid = opts().grid();
        for h in [HFunction::SqrtMinusOne, HFunction::Log, HFunction::PowerMinusOne { alpha: 0.5 }] {
            let rep = validate_h(&h, &grid, &opts());
            assert!(rep.passed(), "{h:?}: {:?}", rep.failures());
        }
    }

    #[test]
    fn h_validator_rejects_linear_and_constant() {
        let grid = opts().grid();
        let rep = validate_h(&HFunction::Linear { slope: 2.0 }, &grid, &opts());
        assert!(rep.failures().contains(&"h(x)/x -> 0"));
        // Class 1's constant step is not an admissible h.
        let rep = validate_h(&HFunction::Constant { value: 15.0 }, &grid, &opts());
        assert!(rep.failures().contains(&"h(1) = 0"));
    }

    #[test]
    fn eps_validator_examples() {
        let grid = opts().grid();
        let ok = validate_eps(&HFunction::SqrtMinusOne, &EpsFunction::PowerDecay { gamma: 0.125 }, &grid, &opts());
        assert!(ok.passed(), "{:?}", ok.failures());
        let bad = validate_eps(&HFunction::Log, &EpsFunction::PowerDecay { gamma: 0.5 }, &grid, &opts());
        assert_eq!(bad.failures(), vec!["h * eps^2 -> inf"]);
        let range = validate_eps(&HFunction::SqrtMinusOne, &EpsFunction::Constant { value: 0.6 }, &grid, &opts());
        assert!(range.failures().contains(&"eps in (0, 1/2]"));
    }

    #[test]
    fn tabulated_interpolates_and_extrapolates() {
        let h = HFunction::Tabulated {
            xs: vec![1.0, 2.0, 4.0],
            ys: vec![0.0, 1.0, 2.0],
        };
        h.validate().unwrap();
        assert_eq!(h.eval(1.5), 0.5);
        assert_eq!(h.eval(3.0), 1.5);
        assert_eq!(h.eval(8.0), 4.0);
    }

    #[test]
    fn geometric_grid_endpoints() {
        let g = geometric_grid(1.0, 1e8, 20);
        assert_eq!(g.len(), 161);
        assert_eq!(g[0], 1.0);
        assert_eq!(*g.last().unwrap(), 1e8);
    }

    fn specs() -> Vec<ProtocolSpec> {
        vec![
            ProtocolSpec::A1(A1Params::new(2.2, 400.0, 0.85, 1.0).unwrap()),
            ProtocolSpec::A2 {
                c: 2.0,
                beta: 0.95,
                h: HFunction::SqrtMinusOne,
                h_down: None,
                s_init: 1.0,
            },
            ProtocolSpec::A3 {
                c: 2.0,
                h: HFunction::Log,
                eps: EpsFunction::PowerDecay { gamma: 0.125 },
                s_init: 1.0,
            },
            ProtocolSpec::TernaryAdditive {
                up: 0.01,
                down: 0.02,
                bounds: TernaryBounds::default(),
                p_init: 0.5,
            },
        ]
    }

    fn fb_strategy() -> impl Strategy<Value = ChannelFeedback> {
        prop_oneof![
            Just(ChannelFeedback::Empty),
            Just(ChannelFeedback::Success),
            Just(ChannelFeedback::Collision)
        ]
    }

    proptest! {
        #[test]
        fn probability_in_unit_interval_and_estimator_stays_above_one(
            s in 1.0f64..1e9, coin in any::<bool>(), fb in fb_strategy(), which in 0usize..4
        ) {
            let spec = &specs()[which];
            let coin = if coin { Coin::One } else { Coin::Zero };
            let p = spec.probability(s, coin).unwrap();
            prop_assert!(p > 0.0 && p <= 1.0);
            let s2 = spec.update(s, fb, coin);
            prop_assert!(s2 >= 1.0);
        }

        #[test]
        fn a1_increments_are_restricted(s in 1.0f64..1e9, coin in any::<bool>(), fb in fb_strategy()) {
            let (c, d) = (3.0, 5.0);
            let coin = if coin { Coin::One } else { Coin::Zero };
            let delta = a1_update(s, fb.binary(), coin, c, d) - s;
            let allowed = [c, c * d, -c * d, 1.0 - s];
            prop_assert!(allowed.iter().any(|a| (delta - a).abs() <= 1e-9 * s.max(1.0)), "delta {}", delta);
        }

        #[test]
        fn binary_classes_ignore_empty_vs_collision(s in 1.0f64..1e9, coin in any::<bool>(), which in 0usize..3) {
            let spec = &specs()[which];
            let coin = if coin { Coin::One } else { Coin::Zero };
            prop_assert_eq!(
                spec.update(s, ChannelFeedback::Empty, coin),
                spec.update(s, ChannelFeedback::Collision, coin)
            );
        }
    }
}
