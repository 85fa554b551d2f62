//! Collisional decoherence and alignment decay of molecular superrotors.
//!
//! A fast rotor in a dilute buffer gas loses coherence between rotational
//! levels through long-range van der Waals collisions. This crate evaluates
//! the eikonal forward amplitudes of those collisions, turns them into
//! decoherence rates, and propagates rotor density matrices under the
//! resulting Lindblad master equation.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::excessive_precision)]

pub mod error;
pub mod io;
pub mod lindblad;
pub mod mathkit;
pub mod params;
pub mod rates;
pub mod scattering;
pub mod validation;

pub use error::{Error, Result};
