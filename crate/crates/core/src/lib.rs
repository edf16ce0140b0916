//! Nuclear spin diffusion in dilute cubic crystals.
//!
//! Lattice dipolar sums and moment-based zero-quantum line widths give the
//! spin-diffusion coefficient; a radial finite-volume model of a core-shell
//! particle uses it to fit polarization build-up and decay curves.

pub mod crystal;
pub mod diffusion;
pub mod dipolar;
pub mod error;
pub mod linewidth;
pub mod oracle;
mod par;
pub mod particle;
pub mod rng;
pub mod scaling;

pub use error::{Error, Result};
