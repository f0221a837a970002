//! RK4 integration of the fluid limit and drift-field sampling.

use serde::{Deserialize, Serialize};

use super::FluidParams;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FluidOptions<T> {
    pub dt: T,
    /// Time horizon `T`.
    pub horizon: T,
    /// Converged once `x + y <= (1 - eps_stop) (x0 + y0)` with both drift
    /// components negative.
    pub eps_stop: T,
    /// Diverged once `x + y > guard (x0 + y0)`.
    pub guard: T,
    /// Floor on `y`; `z = x/y` is singular at `y = 0`.
    pub y_floor: T,
    /// Keep every `record_every`-th step.
    pub record_every: usize,
}

impl<T: Scalar> Default for FluidOptions<T> {
    fn default() -> Self {
        Self {
            dt: T::lit(1e-3),
            horizon: T::lit(100.0),
            eps_stop: T::lit(0.1),
            guard: T::lit(5.0),
            y_floor: T::lit(1e-6),
            record_every: 10,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrajectoryStatus {
    Converged,
    HorizonExceeded,
    Diverged,
}

impl TrajectoryStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            TrajectoryStatus::Converged => "converged",
            TrajectoryStatus::HorizonExceeded => "horizon_exceeded",
            TrajectoryStatus::Diverged => "diverged",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FluidPoint<T> {
    pub t: T,
    pub x: T,
    pub y: T,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FluidTrajectory<T> {
    pub points: Vec<FluidPoint<T>>,
    pub status: TrajectoryStatus,
    /// Time at which the run stopped.
    pub final_time: T,
}

impl<T: Scalar> FluidTrajectory<T> {
    pub fn last(&self) -> FluidPoint<T> {
        *self.points.last().expect("trajectory has at least the initial point")
    }
}

#[inline]
fn field<T: Scalar>(p: &FluidParams<T>, x: T, y: T, floor: T) -> (T, T) {
    let z = x.max(T::zero()) / y.max(floor);
    let d = p.drift(z);
    (d.a, d.b)
}

/// Both coordinates decrease along the current direction. Under the root
/// ordering `t1 < z1 < t2 < z2` the set of such directions, `(z1, t2)`, is
/// invariant, so mass keeps shrinking from there on. A bare mass test would
/// also fire during the transient collapse of `y` that supercritical
/// trajectories show before they turn outward.
fn inward<T: Scalar>(p: &FluidParams<T>, x: T, y: T, floor: T) -> bool {
    let (a, b) = field(p, x, y, floor);
    a < T::zero() && b < T::zero()
}

/// Integrates `x' = a(x/y)`, `y' = b(x/y)` from `(x0, y0)`.
pub fn integrate_fluid<T: Scalar>(
    x0: T,
    y0: T,
    params: &FluidParams<T>,
    opts: &FluidOptions<T>,
) -> Result<FluidTrajectory<T>> {
    if !(x0 >= T::zero() && y0 >= T::zero() && x0 + y0 > T::zero()) {
        return Err(Error::invalid("x0/y0", "need x0 >= 0, y0 >= 0 and x0 + y0 > 0"));
    }
    if !(opts.dt > T::zero() && opts.horizon > T::zero()) {
        return Err(Error::invalid("dt/horizon", "must be positive"));
    }
    let floor = opts.y_floor;
    let mass0 = x0 + y0;
    let stop = (T::one() - opts.eps_stop) * mass0;
    let guard = opts.guard * mass0;
    let every = opts.record_every.max(1);
    let half = T::lit(0.5);
    let sixth = T::lit(1.0 / 6.0);
    let two = T::lit(2.0);
    let dt = opts.dt;

    let (mut x, mut y) = (x0, y0.max(floor));
    let mut t = T::zero();
    let mut points = vec![FluidPoint { t, x, y }];
    let mut k = 0usize;
    let status = loop {
        if x + y <= stop && inward(params, x, y, floor) {
            break TrajectoryStatus::Converged;
        }
        if x + y > guard || !(x + y).is_finite() {
            break TrajectoryStatus::Diverged;
        }
        if t >= opts.horizon {
            break TrajectoryStatus::HorizonExceeded;
        }
        let (k1x, k1y) = field(params, x, y, floor);
        let (k2x, k2y) = field(params, x + half * dt * k1x, y + half * dt * k1y, floor);
        let (k3x, k3y) = field(params, x + half * dt * k2x, y + half * dt * k2y, floor);
        let (k4x, k4y) = field(params, x + dt * k3x, y + dt * k3y, floor);
        x = (x + dt * sixth * (k1x + two * k2x + two * k3x + k4x)).max(T::zero());
        y = (y + dt * sixth * (k1y + two * k2y + two * k3y + k4y)).max(floor);
        k += 1;
        t = dt * T::lit(k as f64);
        if k % every == 0 {
            points.push(FluidPoint { t, x, y });
        }
    };
    if points.last().map(|p| p.t) != Some(t) {
        points.push(FluidPoint { t, x, y });
    }
    Ok(FluidTrajectory {
        points,
        status,
        final_time: t,
    })
}

/// `n` starting points `(k/(n-1), 1 - k/(n-1))` spread over the unit simplex.
pub fn simplex_directions<T: Scalar>(n: usize) -> Vec<(T, T)> {
    match n {
        0 => Vec::new(),
        1 => vec![(T::lit(0.5), T::lit(0.5))],
        _ => (0..n)
            .map(|k| {
                let x = T::lit(k as f64 / (n - 1) as f64);
                (x, T::one() - x)
            })
            .collect(),
    }
}

/// Rectangular grid `x in [0, x_max]`, `y in (0, y_max]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FieldGrid<T> {
    pub x_max: T,
    pub y_max: T,
    pub nx: usize,
    pub ny: usize,
}

impl<T: Scalar> Default for FieldGrid<T> {
    fn default() -> Self {
        Self {
            x_max: T::one(),
            y_max: T::one(),
            nx: 21,
            ny: 20,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DriftSample<T> {
    pub x: T,
    pub y: T,
    pub a: T,
    pub b: T,
}

/// Samples the limiting drift `(a(x/y), b(x/y))` on a grid.
pub fn drift_field<T: Scalar>(params: &FluidParams<T>, grid: &FieldGrid<T>) -> Result<Vec<DriftSample<T>>> {
    if grid.nx == 0 || grid.ny == 0 {
        return Err(Error::EmptyGrid);
    }
    if !(grid.x_max >= T::zero() && grid.y_max > T::zero()) {
        return Err(Error::invalid("grid", "need x_max >= 0 and y_max > 0"));
    }
    let mut out = Vec::with_capacity(grid.nx * grid.ny);
    for iy in 1..=grid.ny {
        let y = grid.y_max * T::lit(iy as f64 / grid.ny as f64);
        for ix in 0..grid.nx {
            let x = if grid.nx == 1 {
                grid.x_max
            } else {
                grid.x_max * T::lit(ix as f64 / (grid.nx - 1) as f64)
            };
            let d = params.drift(x / y);
            out.push(DriftSample { x, y, a: d.a, b: d.b });
        }
    }
    Ok(out)
}
