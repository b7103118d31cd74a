//! Command-line laboratory around `blowup-core`: file formats, parallel
//! drivers, the acceptance suite and the `blowup` binary.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod acceptance;
pub mod cli;
pub mod error;
pub mod formats;
pub mod parallel;

pub use error::{LabError, LabResult};
