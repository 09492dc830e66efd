// `!(x > 0.0)` is used on purpose throughout: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod field;
pub mod spectral;

pub use error::{Error, Result};
pub use field::{integrate, GridSpec, ScalarField3D};
pub use spectral::{wavenumber_grids, Spectral};
pub mod config;
pub mod energy;
pub mod integrators;
pub mod io;
pub mod oracles;
pub mod runner;
pub mod scenarios;
pub mod verification;
