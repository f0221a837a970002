//! Fluid-limit numerics for the class-1 protocol.
//!
//! With `z = N/S` the scaled backlog-to-estimator ratio, the mean success
//! probability of one slot tends to
//!
//! ```text
//! j(z, beta) = (beta z / 2) exp(-beta z) + (z / 2) exp(-z)
//! ```
//!
//! and the fluid trajectory `(x, y)` of `(N, S)` solves `x' = a(x/y)`,
//! `y' = b(x/y)` with
//!
//! ```text
//! a(z) = lambda - j(z)
//! b(z) = C (1 - j(z)) + C D (j1(z) - j2(z))
//! r(z) = a(z) - z b(z)
//! ```
//!
//! The ratio obeys `z' = r(z)/y`, so the sign structure of `r` decides where
//! the direction of the trajectory settles.

mod drift;
mod lemma;
mod ode;
mod roots;

pub use drift::{exact_drift_a, exact_drift_b, exact_drift_j, EstimatorDrift};
pub use lemma::{d_for_root, SCHEMA_VERSION, derive_params, verify_lemma, DeriveOptions, DerivedParams, LemmaReport};
pub use ode::{
    drift_field, integrate_fluid, simplex_directions, DriftSample, FieldGrid, FluidOptions, FluidPoint,
    FluidTrajectory, TrajectoryStatus,
};
pub use roots::{
    bisect, find_roots_a, find_roots_b, find_roots_r, golden_section_min, ARoots, BRoots, RRoots,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Success probability contributed by the `beta/S` branch.
#[inline]
pub fn j1<T: Scalar>(z: T, beta: T) -> T {
    let bz = beta * z;
    bz / T::lit(2.0) * (-bz).exp()
}

/// Success probability contributed by the `1/S` branch.
#[inline]
pub fn j2<T: Scalar>(z: T) -> T {
    z / T::lit(2.0) * (-z).exp()
}

#[inline]
pub fn j<T: Scalar>(z: T, beta: T) -> T {
    j1(z, beta) + j2(z)
}

/// `dj/dz`.
#[inline]
pub fn j_prime<T: Scalar>(z: T, beta: T) -> T {
    let half = T::lit(0.5);
    let bz = beta * z;
    half * beta * (-bz).exp() * (T::one() - bz) + half * (-z).exp() * (T::one() - z)
}

/// `b / C`, independent of `C`.
#[inline]
pub fn b1<T: Scalar>(z: T, beta: T, d: T) -> T {
    T::one() - j(z, beta) + d * (j1(z, beta) - j2(z))
}

/// `(lambda, beta, C, D)` for the limiting drift field.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FluidParams<T> {
    pub lambda: T,
    pub beta: T,
    pub c: T,
    pub d: T,
}

/// Drift of `(N, S)` per slot along one direction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DriftVector<T> {
    pub a: T,
    pub b: T,
}

impl<T: Scalar> FluidParams<T> {
    pub fn new(lambda: T, beta: T, c: T, d: T) -> Result<Self> {
        let p = Self { lambda, beta, c, d };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda > T::zero() && self.lambda < T::one()) {
            return Err(Error::invalid("lambda", format!("{} outside (0, 1)", self.lambda)));
        }
        if !(self.beta > T::zero() && self.beta <= T::one()) {
            return Err(Error::invalid("beta", format!("{} outside (0, 1]", self.beta)));
        }
        if !(self.c > T::zero() && self.c.is_finite()) {
            return Err(Error::invalid("c", format!("{} is not positive", self.c)));
        }
        if !(self.d > T::zero() && self.d.is_finite()) {
            return Err(Error::invalid("d", format!("{} is not positive", self.d)));
        }
        Ok(())
    }

    #[inline]
    pub fn j(&self, z: T) -> T {
        j(z, self.beta)
    }

    #[inline]
    pub fn a(&self, z: T) -> T {
        self.lambda - j(z, self.beta)
    }

    #[inline]
    pub fn b(&self, z: T) -> T {
        let (u, v) = (j1(z, self.beta), j2(z));
        self.c * (T::one() - (u + v)) + self.c * self.d * (u - v)
    }

    #[inline]
    pub fn b1(&self, z: T) -> T {
        b1(z, self.beta, self.d)
    }

    #[inline]
    pub fn r(&self, z: T) -> T {
        self.a(z) - z * self.b(z)
    }

    #[inline]
    pub fn drift(&self, z: T) -> DriftVector<T> {
        DriftVector {
            a: self.a(z),
            b: self.b(z),
        }
    }

    pub fn with_lambda(&self, lambda: T) -> Result<Self> {
        Self::new(lambda, self.beta, self.c, self.d)
    }
}

/// Maximizer and maximum of `z exp(-z)`, i.e. of `j(z, 1)`.
///
/// Golden-section search brackets the peak, then the sign change of `dj/dz`
/// pins the location to machine precision.
pub fn capacity<T: Scalar>() -> (T, T) {
    maximize_j(T::one(), T::zero(), T::lit(10.0))
}

/// Maximizes `j(., beta)` on `[lo, hi]`, assuming a single interior peak.
pub fn maximize_j<T: Scalar>(beta: T, lo: T, hi: T) -> (T, T) {
    let (zg, _) = golden_section_min(|z| -j(z, beta), lo, hi, T::epsilon().sqrt());
    let w = (hi - lo) * T::lit(1e-3) + T::epsilon().sqrt();
    let (l, h) = ((zg - w).max(lo), (zg + w).min(hi));
    let dl = j_prime(l, beta);
    let dh = j_prime(h, beta);
    let z = if dl > T::zero() && dh < T::zero() {
        bisect(|z| j_prime(z, beta), l, h, "dj/dz").unwrap_or(zg)
    } else {
        zg
    };
    (z, j(z, beta))
}

/// `m(beta) = min_{z in [1, 1/beta]} j(z, beta)`: dense grid, then
/// golden-section refinement around the best grid cell.
pub fn compute_m_beta<T: Scalar>(beta: T) -> T {
    let lo = T::one();
    let hi = beta.recip();
    if !(hi > lo) {
        return j(lo, beta);
    }
    let n = 1000usize;
    let step = (hi - lo) / T::lit(n as f64);
    let (mut best_i, mut best) = (0usize, j(lo, beta));
    for i in 1..=n {
        let v = j(lo + step * T::lit(i as f64), beta);
        if v < best {
            best = v;
            best_i = i;
        }
    }
    let l = (lo + step * T::lit(best_i as f64 - 1.0)).max(lo);
    let h = (lo + step * T::lit(best_i as f64 + 1.0)).min(hi);
    let (_, v) = golden_section_min(|z| j(z, beta), l, h, T::lit(1e-10).max(T::epsilon()));
    v.min(best)
}
