//! Numerical core for the renormalization dynamics of harmonic quadratic
//! blow-ups near singular free-boundary points of `Δu = -χ_{u>0}`.
//!
//! Everything here is `no_std` with `alloc`; IO and the command line live in
//! the companion `blowup-lab` crate.
#![cfg_attr(not(test), no_std)]
// `!(x > 0.0)` style checks are deliberate: they reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

pub mod error;
pub mod gridproj;
pub mod km;
pub mod numeric;
pub mod quadratic;
pub mod renorm;
pub mod moments;
pub mod sphere;

pub use error::{Error, Result};
