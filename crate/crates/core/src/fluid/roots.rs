//! Bracketing root finders and the root structure of `a`, `b` and `r`.

use serde::{Deserialize, Serialize};

use super::{b1, compute_m_beta, j, j1, j2, maximize_j, FluidParams};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Bisection on a sign-changing bracket. Runs until the bracket cannot be
/// split further in floating point and returns the end point with the
/// smaller residual.
pub fn bisect<T, F>(f: F, lo: T, hi: T, name: &'static str) -> Result<T>
where
    T: Scalar,
    F: Fn(T) -> T,
{
    let (mut lo, mut hi) = if lo <= hi { (lo, hi) } else { (hi, lo) };
    let mut flo = f(lo);
    let fhi = f(hi);
    if flo == T::zero() {
        return Ok(lo);
    }
    if fhi == T::zero() {
        return Ok(hi);
    }
    if flo.signum() == fhi.signum() || flo.is_nan() || fhi.is_nan() {
        return Err(Error::NoBracket {
            function: name,
            lo: lo.as_f64(),
            hi: hi.as_f64(),
        });
    }
    let mut fhi = fhi;
    let two = T::lit(2.0);
    for _ in 0..400 {
        let mid = lo + (hi - lo) / two;
        if mid <= lo || mid >= hi {
            break;
        }
        let fm = f(mid);
        if fm == T::zero() {
            return Ok(mid);
        }
        if fm.signum() == flo.signum() {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
            fhi = fm;
        }
    }
    Ok(if flo.abs() <= fhi.abs() { lo } else { hi })
}

/// Golden-section minimization on `[lo, hi]` for a unimodal `f`.
pub fn golden_section_min<T, F>(f: F, lo: T, hi: T, tol: T) -> (T, T)
where
    T: Scalar,
    F: Fn(T) -> T,
{
    let inv_phi = (T::lit(5.0).sqrt() - T::one()) / T::lit(2.0);
    let (mut a, mut b) = (lo, hi);
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..300 {
        if (b - a).abs() <= tol {
            break;
        }
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }
    let x = (a + b) / T::lit(2.0);
    let fx = f(x);
    // The bracket end points can beat the midpoint when the minimum sits on the boundary.
    [(x, fx), (lo, f(lo)), (hi, f(hi))]
        .into_iter()
        .fold((x, fx), |best, cand| if cand.1 < best.1 { cand } else { best })
}

/// Roots `z1 < 1 < z2` of `j(z, beta) = lambda`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ARoots<T> {
    pub z1: T,
    pub z2: T,
    /// `lambda` sits at the peak of `j`: the two roots coincide.
    pub degenerate: bool,
    pub beta_z2_above_one: bool,
    pub max_residual: T,
}

/// Finds both roots of `a(z) = lambda - j(z, beta) = 0`.
///
/// Requires `lambda < m(beta)`, which puts `z1` in `(0, 1]` and `z2` beyond
/// `1/beta`. A `lambda` equal to the peak of `j` yields a flagged double root.
pub fn find_roots_a<T: Scalar>(lambda: T, beta: T) -> Result<ARoots<T>> {
    if !(lambda > T::zero()) || !(beta > T::zero() && beta <= T::one()) {
        return Err(Error::invalid("lambda/beta", "need lambda > 0 and beta in (0, 1]"));
    }
    let inv_beta = beta.recip();
    let (z_peak, j_peak) = maximize_j(beta, T::one(), inv_beta.max(T::one() + T::epsilon()));
    let tol = T::residual_tol() * T::lit(1e-2);
    if (lambda - j_peak).abs() <= tol {
        return Ok(ARoots {
            z1: z_peak,
            z2: z_peak,
            degenerate: true,
            beta_z2_above_one: beta * z_peak > T::one(),
            max_residual: (lambda - j_peak).abs(),
        });
    }
    let m = compute_m_beta(beta);
    if !(lambda < m) {
        return Err(Error::NoBracket {
            function: "a",
            lo: 0.0,
            hi: inv_beta.as_f64(),
        });
    }
    let f = |z: T| j(z, beta) - lambda;
    let z1 = bisect(f, T::zero(), T::one(), "a")?;
    let mut hi = inv_beta * T::lit(2.0);
    while f(hi) >= T::zero() {
        hi = hi * T::lit(2.0);
        if !hi.is_finite() {
            return Err(Error::NoBracket {
                function: "a",
                lo: inv_beta.as_f64(),
                hi: f64::INFINITY,
            });
        }
    }
    let z2 = bisect(f, inv_beta, hi, "a")?;
    Ok(ARoots {
        z1,
        z2,
        degenerate: false,
        beta_z2_above_one: beta * z2 > T::one(),
        max_residual: f(z1).abs().max(f(z2).abs()),
    })
}

/// Roots `t1 < t2` of `b1(z) = 1 - j + D (j1 - j2) = 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BRoots<T> {
    pub t1: T,
    pub t2: T,
    /// Location and value of the minimum of `b1`.
    pub z_min: T,
    pub b1_min: T,
    /// Sign changes seen by the grid scan.
    pub sign_changes: usize,
    pub max_residual: T,
}

/// Point where `j1 = j2`, i.e. `beta exp(-beta z) = exp(-z)`. `b1 > 0` beyond it.
pub fn branch_crossing<T: Scalar>(beta: T) -> Option<T> {
    if beta < T::one() {
        Some(-beta.ln() / (T::one() - beta))
    } else {
        None
    }
}

pub fn find_roots_b<T: Scalar>(beta: T, d: T) -> Result<BRoots<T>> {
    let no_change = |hi: T| Error::NoBracket {
        function: "b",
        lo: 0.0,
        hi: hi.as_f64(),
    };
    if !(d > T::zero()) {
        return Err(Error::invalid("d", "must be positive"));
    }
    // With beta = 1 the two branches coincide and b1 = 1 - j > 0 everywhere.
    let z_cross = branch_crossing(beta).ok_or_else(|| no_change(T::lit(f64::INFINITY)))?;
    let f = |z: T| b1(z, beta, d);

    let n = 10_000usize;
    let step = z_cross / T::lit(n as f64);
    let mut changes = 0usize;
    let mut prev = f(T::zero());
    let (mut best_i, mut best) = (0usize, prev);
    for i in 1..=n {
        let v = f(step * T::lit(i as f64));
        if v.signum() != prev.signum() {
            changes += 1;
        }
        if v < best {
            best = v;
            best_i = i;
        }
        prev = v;
    }
    let l = step * T::lit(best_i.saturating_sub(1) as f64);
    let h = (step * T::lit(best_i as f64 + 1.0)).min(z_cross);
    let (z_min, b_min) = golden_section_min(f, l, h, T::epsilon().sqrt() * step);
    let (z_min, b_min) = if b_min < best { (z_min, b_min) } else { (step * T::lit(best_i as f64), best) };
    if !(b_min < T::zero()) {
        return Err(no_change(z_cross));
    }
    let t1 = bisect(f, T::zero(), z_min, "b")?;
    let t2 = bisect(f, z_min, z_cross, "b")?;
    Ok(BRoots {
        t1,
        t2,
        z_min,
        b1_min: b_min,
        sign_changes: changes,
        max_residual: (f(t1).abs()).max(f(t2).abs()),
    })
}

/// Roots of `r` and the sign checks around them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RRoots<T> {
    pub roots: Vec<T>,
    /// `r > 0` on `(0, z1]`.
    pub positive_below_z1: bool,
    /// `r < 0` on `[t2, 2 z2]`.
    pub negative_above_t2: bool,
    /// Every root lies in `(z1, t2)`.
    pub all_in_band: bool,
    pub max_residual: T,
}

/// Sign scan of `r` on `(0, 2 z2]` with bisection at every sign change.
pub fn find_roots_r<T: Scalar>(params: &FluidParams<T>, a: &ARoots<T>, b: &BRoots<T>) -> Result<RRoots<T>> {
    let upper = a.z2 * T::lit(2.0);
    let n = 10_000usize;
    let step = upper / T::lit(n as f64);
    let r = |z: T| params.r(z);

    let mut roots = Vec::new();
    let mut positive_below_z1 = r(a.z1) > T::zero();
    let mut negative_above_t2 = r(b.t2) < T::zero();
    let mut prev_z = T::zero();
    let mut prev = r(prev_z);
    for i in 1..=n {
        let z = step * T::lit(i as f64);
        let v = r(z);
        if z <= a.z1 && !(v > T::zero()) {
            positive_below_z1 = false;
        }
        if z >= b.t2 && !(v < T::zero()) {
            negative_above_t2 = false;
        }
        if v == T::zero() {
            roots.push(z);
        } else if prev != T::zero() && v.signum() != prev.signum() {
            roots.push(bisect(r, prev_z, z, "r")?);
        }
        prev = v;
        prev_z = z;
    }
    let all_in_band = roots.iter().all(|&z| z > a.z1 && z < b.t2);
    let max_residual = roots.iter().fold(T::zero(), |m, &z| m.max(r(z).abs()));
    Ok(RRoots {
        roots,
        positive_below_z1,
        negative_above_t2,
        all_in_band,
        max_residual,
    })
}

/// `j2(z) - j1(z)` at the lower root `z1`, the quantity bounding `D` from below.
pub(crate) fn branch_gap_at_z1<T: Scalar>(lambda: T, beta: T) -> Result<T> {
    let a = find_roots_a(lambda, beta)?;
    Ok(j2(a.z1) - j1(a.z1, beta))
}
