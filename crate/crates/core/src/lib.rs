//! Simulation and analysis of chirp-based homonuclear mixing in a pair of
//! scalar-coupled spin-1/2 nuclei.
//!
//! * [`spinops`]: rotation generators, product operators, matrix exponentials
//! * [`waveform`]: chirps, supercycles and composite-pulse sequences
//! * [`propagate`]: Bloch and two-spin propagation, transfer efficiency
//! * [`effham`]: interaction-frame coupling buildup and inversion errors
//! * [`scan`]: offset-grid transfer maps and bandwidth summaries
//! * [`verify`]: self-consistency property checks

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod effham;
pub mod error;
pub mod propagate;
pub mod scan;
pub mod spinops;
pub mod verify;
pub mod waveform;

pub use error::{Error, Result};
