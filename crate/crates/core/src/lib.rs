//! Lagrangian simulation of the two-dimensional Euler equations on circular
//! sectors, with diagnostics for the growth of the vorticity gradient at the
//! corner.
//!
//! The velocity is recovered from the vorticity through the exact Dirichlet
//! Green function of the sector, obtained by pulling back the four-image
//! Green function of the unit upper half-disk through the power map
//! `z -> (z / R)^(pi / theta)`.

pub mod biot_savart;
pub mod cli;
pub mod conformal;
pub mod diagnostics;
pub mod error;
pub mod greens;
pub mod output;
pub mod scenarios;
pub mod transport;

pub use error::{Error, Result};
