//! Adaptive k-nearest-neighbor kernel estimation of multivariate density and
//! regression functions, plus a seeded Monte Carlo laboratory that measures
//! sup-norm error scaling against the corresponding theoretical rates.
//!
//! The crate is organized bottom-up:
//!
//! * [`summation`], [`quadrature`]: numeric primitives (compensated sums,
//!   Gauss-Legendre tensor rules).
//! * [`kernels`]: kernel construction plus numerical certification of
//!   boundedness, symmetry, moment order, and radial monotonicity.
//! * [`neighbor_index`]: exact k-nearest-neighbor queries via a kd-tree,
//!   cross-validated against a brute-force oracle.
//! * [`estimators`]: the density, numerator, and regression estimators with
//!   their tuning schedules.
//! * [`synthetic_models`]: ground-truth models with closed-form densities and
//!   regression functions plus seeded samplers.
//! * [`rate_lab`]: scaling studies, sandwich-bound diagnostics, and the
//!   smoothing-bias oracle.
//! * [`cli`]: the command-line front end.

pub mod cli;
pub mod error;
pub mod estimators;
pub mod kernels;
pub mod neighbor_index;
pub mod quadrature;
pub mod rate_lab;
pub mod summation;
pub mod synthetic_models;

pub use error::{Error, Result};
