//! Simulation and fluid-limit analysis of slotted random access with binary
//! success/failure feedback and doubly randomized transmission protocols.
//!
//! The fluid module is generic over the scalar type; the aliases below fix
//! it to `f64`, which is what the simulator and the reports use.

pub mod error;
pub mod fluid;
pub mod model;
pub mod protocols;
pub mod report;
pub mod scalar;
pub mod sim;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type FluidParams64 = fluid::FluidParams<f64>;
pub type DerivedParams64 = fluid::DerivedParams<f64>;
pub type DeriveOptions64 = fluid::DeriveOptions<f64>;
pub type LemmaReport64 = fluid::LemmaReport<f64>;
pub type FluidOptions64 = fluid::FluidOptions<f64>;
pub type FluidTrajectory64 = fluid::FluidTrajectory<f64>;
pub type FieldGrid64 = fluid::FieldGrid<f64>;
