//! Experiment harness: configuration, trial generation, metrics, sweeps and
//! reporting around `isac_core`.

// NaN-rejecting `!(x > 0)` guards and index loops over paired arrays are
// deliberate in the numeric kernels.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod config;
pub mod metrics;
pub mod scenario;
pub mod plot;
pub mod report;
pub mod sweep;
pub mod validate;
