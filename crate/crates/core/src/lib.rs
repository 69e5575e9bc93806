//! Weighted singularly perturbed energies on `[0, 1]`.
//!
//! * [`sharp`]: `E_ε(u) = ∫ ε t^α |u''| + t^-β u²` over slope-±1 sawtooth
//!   profiles, evaluated exactly and minimized over jump positions and counts.
//! * [`diffuse`]: `F_ε(u) = ∫ ε² t^α (u'')² + W(u') + t^-β u²` on a graded
//!   mesh, with an exact gradient and a Hessian-preconditioned quasi-Newton
//!   minimizer.
//! * [`asymptotics`]: sawtooth family, cell problem, window functional and
//!   empirical period extraction.

pub mod asymptotics;
pub mod diffuse;
pub mod error;
pub mod model;
pub mod optim;
pub mod quad;
pub mod sharp;

pub use error::{ModelError, Result};
pub use model::{
    integrate_weighted_square, validate_weights, AffineSegment, EnergyBreakdown, SawtoothProfile,
    Slope, WeightParams, WeightReport,
};
