//! Numerical laboratory for multi-soliton families of the L²-supercritical
//! one-dimensional nonlinear Schrödinger equation
//! `i u_t + u_xx + |u|^{p-1} u = 0`, `p > 5`.

pub mod construct;
pub mod diagnostics;
pub mod error;
pub mod evolve;
pub mod field;
pub mod linspec;
pub mod soliton;

pub use construct::{ModeSet, ShootingConfig, ShootingProblem, ShootingResult, Target};
pub use diagnostics::{ProjectionSeries, RateFit};
pub use error::{Error, Result};
pub use evolve::{IntegratorConfig, Scheme, Trajectory};
pub use field::{ComplexField, Grid};
pub use linspec::{LinearizedSpectrum, ScaledMode};
pub use num_complex::Complex64;
pub use soliton::{ConservedTriple, Exponent, SolitonFamily, SolitonParams};
