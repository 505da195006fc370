//! Quasi-static time-series simulation of radial unbalanced feeders with
//! local extremum-seeking adaptive-droop Volt-VAR control.
//!
//! The crate is organised bottom-up:
//!
//! - [`feeder`]: network data model, JSON format, validation, regulators.
//! - [`powerflow`]: backward/forward sweep solver and branch losses.
//! - [`control`]: droop, hysteresis, extremum seeking, offset adaptation.
//! - [`convexity`]: analytic and numeric convexity checks.
//! - [`scenario`]: profiles, time-series engine, oracle, metrics, output.
//! - [`cli`]: command-line front end used by the `localvvo` binary.

// NaN must fail validation, so `!(x > 0.0)` is intended; phase loops index 3x3 matrices.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop, clippy::too_many_arguments)]

pub mod cli;
pub mod control;
pub mod convexity;
pub mod feeder;
pub mod powerflow;
pub mod scenario;
