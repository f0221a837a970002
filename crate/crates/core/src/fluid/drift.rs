//! Exact one-step drifts of the class-1 chain at a finite state `(m, s)`.

use serde::{Deserialize, Serialize};

use super::FluidParams;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// `(1 - x)^(m - 1)` for `x` in `[0, 1]`, exact at the `x = 1` corner.
fn survival<T: Scalar>(x: T, m: u64) -> T {
    if m <= 1 {
        return T::one();
    }
    if x >= T::one() {
        return T::zero();
    }
    (T::lit((m - 1) as f64) * (-x).ln_1p()).exp()
}

/// Success probability of the branch that transmits with probability `q/s`,
/// weighted by the coin probability 1/2.
fn branch_success<T: Scalar>(m: u64, s: T, q: T) -> T {
    if m == 0 {
        return T::zero();
    }
    let p = q / s;
    T::lit(m as f64) * p / T::lit(2.0) * survival(p, m)
}

fn check_estimator<T: Scalar>(s: T) -> Result<()> {
    if s >= T::one() {
        Ok(())
    } else {
        Err(Error::EstimatorBelowOne(s.as_f64()))
    }
}

/// `E[J | N = m, S = s]` for the class-1 protocol.
pub fn exact_drift_j<T: Scalar>(m: u64, s: T, beta: T) -> Result<T> {
    check_estimator(s)?;
    Ok(branch_success(m, s, beta) + branch_success(m, s, T::one()))
}

/// `E[N' - N | N = m, S = s] = lambda - E[J]`.
pub fn exact_drift_a<T: Scalar>(m: u64, s: T, params: &FluidParams<T>) -> Result<T> {
    Ok(params.lambda - exact_drift_j(m, s, params.beta)?)
}

/// Estimator drift at `(m, s)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimatorDrift<T> {
    /// Closed form that ignores the clamp at 1.
    pub closed_form: T,
    /// True expectation including the clamp.
    pub exact: T,
    /// `s < C D + 1`: a down-step can hit the clamp, so `closed_form` is only
    /// a lower bound.
    pub clamp_active: bool,
}

/// `E[S' - S | N = m, S = s]`.
pub fn exact_drift_b<T: Scalar>(m: u64, s: T, params: &FluidParams<T>) -> Result<EstimatorDrift<T>> {
    check_estimator(s)?;
    let up = branch_success(m, s, params.beta);
    let down = branch_success(m, s, T::one());
    let cd = params.c * params.d;
    let fail = T::one() - up - down;
    let closed_form = params.c * fail + cd * (up - down);
    let clamp_active = s < cd + T::one();
    let down_step = if clamp_active { s - T::one() } else { cd };
    let exact = params.c * fail + cd * up - down_step * down;
    Ok(EstimatorDrift {
        closed_form,
        exact,
        clamp_active,
    })
}
