//! Root-structure verification and construction of stabilizing class-1
//! parameters for a band of input rates `[lambda0, lambda1]`.

use serde::{Deserialize, Serialize};

use super::roots::{branch_gap_at_z1, find_roots_a, find_roots_b, find_roots_r, ARoots, BRoots, RRoots};
use super::{compute_m_beta, j, j1, j2, FluidParams};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub const SCHEMA_VERSION: u32 = 1;

/// Outcome of checking the four structural properties of `a`, `b` and `r`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LemmaReport<T> {
    pub schema_version: u32,
    pub params: FluidParams<T>,
    pub a_roots: Option<ARoots<T>>,
    pub b_roots: Option<BRoots<T>>,
    pub r_roots: Option<RRoots<T>>,
    /// `a` has two distinct positive roots `z1 < z2`.
    pub two_a_roots: bool,
    /// `b` has two positive roots `t1 < t2`.
    pub two_b_roots: bool,
    /// `0 < t1 < z1 < t2 < z2`.
    pub ordering: bool,
    /// `r > 0` on `(0, z1]`, `r < 0` beyond `t2`, all roots of `r` in `(z1, t2)`.
    pub r_sign_structure: bool,
    pub max_residual: T,
    /// Rate band the parameters were derived for, if known.
    pub band: Option<(T, T)>,
    pub in_band: Option<bool>,
    pub notes: Vec<String>,
}

impl<T: Scalar> LemmaReport<T> {
    pub fn passed(&self) -> bool {
        self.two_a_roots && self.two_b_roots && self.ordering && self.r_sign_structure
    }

    /// Names of failed checks.
    pub fn failures(&self) -> Vec<&'static str> {
        [
            ("two_a_roots", self.two_a_roots),
            ("two_b_roots", self.two_b_roots),
            ("ordering", self.ordering),
            ("r_sign_structure", self.r_sign_structure),
        ]
        .into_iter()
        .filter(|(_, ok)| !ok)
        .map(|(n, _)| n)
        .collect()
    }
}

/// Checks the root structure of the drift functions at `params`. Failures are
/// report content, not errors.
pub fn verify_lemma<T: Scalar>(params: &FluidParams<T>, band: Option<(T, T)>) -> LemmaReport<T> {
    let mut notes = Vec::new();
    let a_roots = match find_roots_a(params.lambda, params.beta) {
        Ok(r) => Some(r),
        Err(e) => {
            notes.push(format!("a: {e}"));
            None
        }
    };
    let b_roots = match find_roots_b(params.beta, params.d) {
        Ok(r) => Some(r),
        Err(e) => {
            notes.push(format!("b: {e}"));
            None
        }
    };
    let tol = T::lit(1e-10).max(T::residual_tol());
    let two_a_roots = a_roots
        .as_ref()
        .is_some_and(|r| !r.degenerate && r.z1 > T::zero() && r.z1 < r.z2 && r.max_residual < tol);
    let two_b_roots = b_roots.as_ref().is_some_and(|r| {
        let b_res = r.max_residual * params.c;
        r.t1 > T::zero() && r.t1 < r.t2 && b_res < tol
    });
    if let Some(b) = &b_roots {
        if b.sign_changes != 2 {
            notes.push(format!("b1 grid scan saw {} sign changes", b.sign_changes));
        }
    }
    let ordering = match (&a_roots, &b_roots) {
        (Some(a), Some(b)) if two_a_roots && two_b_roots => {
            T::zero() < b.t1 && b.t1 < a.z1 && a.z1 < b.t2 && b.t2 < a.z2
        }
        _ => false,
    };
    let r_roots = match (&a_roots, &b_roots) {
        (Some(a), Some(b)) if two_a_roots && two_b_roots => match find_roots_r(params, a, b) {
            Ok(r) => Some(r),
            Err(e) => {
                notes.push(format!("r: {e}"));
                None
            }
        },
        _ => None,
    };
    let r_sign_structure = r_roots
        .as_ref()
        .is_some_and(|r| r.positive_below_z1 && r.negative_above_t2 && r.all_in_band && !r.roots.is_empty());

    let mut max_residual = T::zero();
    if let Some(a) = &a_roots {
        max_residual = max_residual.max(a.max_residual);
    }
    if let Some(b) = &b_roots {
        max_residual = max_residual.max(b.max_residual * params.c);
    }
    if let Some(r) = &r_roots {
        max_residual = max_residual.max(r.max_residual);
    }

    let in_band = band.map(|(lo, hi)| params.lambda >= lo && params.lambda <= hi);
    if in_band == Some(false) {
        notes.push(format!("lambda = {} lies outside the derivation band", params.lambda));
    }
    LemmaReport {
        schema_version: SCHEMA_VERSION,
        params: *params,
        a_roots,
        b_roots,
        r_roots,
        two_a_roots,
        two_b_roots,
        ordering,
        r_sign_structure,
        max_residual,
        band,
        in_band,
        notes,
    }
}

/// Knobs for [`derive_params`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeriveOptions<T> {
    /// Requested `C`; raised to the lower bound when smaller.
    pub c: Option<T>,
    /// Requested `beta`; must exceed the derived threshold. Defaults to the
    /// midpoint between the threshold and 1.
    pub beta: Option<T>,
    /// Requested `D`; raised to the lower bound when smaller.
    pub d: Option<T>,
    pub beta_step: T,
    /// Points in the rate grid used for infima over `[lambda0, lambda1]`.
    pub lambda_grid: usize,
}

impl<T: Scalar> Default for DeriveOptions<T> {
    fn default() -> Self {
        Self {
            c: None,
            beta: None,
            d: None,
            beta_step: T::lit(1e-3),
            lambda_grid: 200,
        }
    }
}

/// Class-1 parameters shown to stabilize every rate in `[lambda0, lambda1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DerivedParams<T> {
    pub schema_version: u32,
    pub lambda0: T,
    pub lambda1: T,
    /// `(lambda1 + 1) / (1 - 1/e)`.
    pub c1: T,
    pub c: T,
    /// Margin required of `m(beta)` above `lambda1`.
    pub eps_margin: T,
    pub beta1: T,
    pub m_beta1: T,
    pub beta: T,
    /// `2 / inf_lambda (j2(z1) - j1(z1))`.
    pub d0: T,
    /// Smallest `D` with `t1 <= lambda0 / (2 (C + 1))`.
    pub d1: T,
    pub t1_target: T,
    pub d: T,
}

impl<T: Scalar> DerivedParams<T> {
    pub fn fluid_params(&self, lambda: T) -> Result<FluidParams<T>> {
        FluidParams::new(lambda, self.beta, self.c, self.d)
    }
}

fn lambda_grid<T: Scalar>(lo: T, hi: T, n: usize) -> Vec<T> {
    let n = n.max(2);
    (0..n)
        .map(|i| lo + (hi - lo) * T::lit(i as f64 / (n - 1) as f64))
        .collect()
}

/// Builds `(C, beta, D)` for the band `[lambda0, lambda1]`:
///
/// * `C = max(C1, requested)` with `C1 = (lambda1 + 1)/(1 - 1/e)`;
/// * `beta1` is the smallest grid value with `m(beta1) >= lambda1 + margin`
///   and `beta1 z2(beta1, lambda) > 1` across the band, margin `(1/e - lambda1)/4`;
/// * `D0 = 2 / inf (j2(z1) - j1(z1))` over a rate grid at the chosen `beta`;
/// * `D1` is the smallest `D` pushing `t1` below `lambda0 / (2 (C + 1))`,
///   found by doubling then bisection.
pub fn derive_params<T: Scalar>(lambda0: T, lambda1: T, opts: &DeriveOptions<T>) -> Result<DerivedParams<T>> {
    let e_inv = (-T::one()).exp();
    if !(lambda0 > T::zero() && lambda0 < lambda1) {
        return Err(Error::invalid("lambda0/lambda1", "need 0 < lambda0 < lambda1"));
    }
    if !(lambda1 < e_inv) {
        return Err(Error::Infeasible(format!(
            "lambda1 = {lambda1} is not below the capacity 1/e = {e_inv}"
        )));
    }
    let c1 = (lambda1 + T::one()) / (T::one() - e_inv);
    let c = opts.c.map_or(c1, |c| c.max(c1));
    let eps_margin = (e_inv - lambda1) / T::lit(4.0);
    let grid = lambda_grid(lambda0, lambda1, opts.lambda_grid);

    let beta_ok = |beta: T| -> Option<T> {
        let m = compute_m_beta(beta);
        if m < lambda1 + eps_margin {
            return None;
        }
        let all_above = grid
            .iter()
            .all(|&l| find_roots_a(l, beta).is_ok_and(|r| !r.degenerate && beta * r.z2 > T::one()));
        all_above.then_some(m)
    };

    let steps = (T::one() / opts.beta_step).to_usize().unwrap_or(1000);
    let (beta1, m_beta1) = (1..steps)
        .map(|k| opts.beta_step * T::lit(k as f64))
        .filter(|&b| b < T::one())
        .find_map(|b| beta_ok(b).map(|m| (b, m)))
        .ok_or_else(|| {
            Error::Infeasible(format!(
                "no beta below 1 gives m(beta) >= lambda1 + {eps_margin}; lambda1 is too close to 1/e"
            ))
        })?;

    let beta = match opts.beta {
        Some(b) if b > beta1 && b < T::one() => b,
        Some(b) => {
            return Err(Error::invalid(
                "beta",
                format!("{b} must lie strictly between beta1 = {beta1} and 1"),
            ))
        }
        None => (beta1 + T::one()) / T::lit(2.0),
    };
    if beta_ok(beta).is_none() {
        return Err(Error::Infeasible(format!(
            "beta = {beta} does not satisfy the root conditions"
        )));
    }

    let mut gap = T::infinity();
    for &l in &grid {
        gap = gap.min(branch_gap_at_z1(l, beta)?);
    }
    if !(gap > T::zero()) {
        return Err(Error::Infeasible(format!("j2(z1) - j1(z1) = {gap} is not positive")));
    }
    let d0 = T::lit(2.0) / gap;

    let t1_target = lambda0 / (T::lit(2.0) * (c + T::one()));
    let d1 = smallest_d_for_t1(beta, t1_target)?;

    let d = d0.max(d1).max(opts.d.unwrap_or(T::zero()));
    Ok(DerivedParams {
        schema_version: SCHEMA_VERSION,
        lambda0,
        lambda1,
        c1,
        c,
        eps_margin,
        beta1,
        m_beta1,
        beta,
        d0,
        d1,
        t1_target,
        d,
    })
}

/// Doubling then bisection for the smallest `D` with `t1(D) <= target`.
fn smallest_d_for_t1<T: Scalar>(beta: T, target: T) -> Result<T> {
    let ok = |d: T| find_roots_b(beta, d).is_ok_and(|r| r.t1 <= target);
    let two = T::lit(2.0);
    let mut hi = T::one();
    let mut doublings = 0;
    while !ok(hi) {
        hi = hi * two;
        doublings += 1;
        if doublings > 200 || !hi.is_finite() {
            return Err(Error::Infeasible(format!("no D reaches t1 <= {target}")));
        }
    }
    let mut lo = hi / two;
    if ok(lo) {
        return Ok(lo);
    }
    for _ in 0..200 {
        if hi - lo <= hi * T::lit(1e-12).max(T::epsilon() * T::lit(4.0)) {
            break;
        }
        let mid = (lo + hi) / two;
        if ok(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

/// Closed-form inverse of `b1(t) = 0` in `D`: `D = (1 - j(t)) / (j2(t) - j1(t))`.
pub fn d_for_root<T: Scalar>(beta: T, t: T) -> T {
    (T::one() - j(t, beta)) / (j2(t) - j1(t, beta))
}
