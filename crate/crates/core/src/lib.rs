//! Joint scattering-environment sensing and channel estimation for
//! massive MIMO-OFDM integrated sensing and communication.
//!
//! The crate synthesizes radar-echo and uplink-pilot observations from a
//! planar scene and recovers target/scatterer positions together with both
//! channels. Inference alternates a turbo sparse-Bayesian E-step (LMMSE
//! module plus an exact sum-product module over a joint spike-and-slab
//! support prior) with a gradient-ascent M-step over a dynamic position grid,
//! the user position and the receiver time offset.
//!
//! All numerics are generic over [`Real`] (`f32` or `f64`); the `*64`
//! aliases below fix the scalar to `f64`, which is what the simulation
//! harness uses.

// NaN-rejecting `!(x > 0)` guards and index loops over paired arrays are
// deliberate in the numeric kernels.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod baselines;
pub mod channel;
pub mod error;
pub mod geometry;
pub mod linalg;
pub mod measurement;
pub mod mstep;
pub mod oracle;
pub mod prior;
pub mod scalar;
pub mod solver;
pub mod turbo;

pub use error::{Error, Result};
pub use scalar::{Cx, Real};

pub type Position64 = geometry::Position<f64>;
pub type Area64 = geometry::Area<f64>;
pub type GridSpec64 = geometry::GridSpec<f64>;
pub type CMatrix64 = linalg::CMatrix<f64>;
pub type Scene64 = channel::Scene<f64>;
pub type SensingParams64 = channel::SensingParams<f64>;
pub type PilotSet64 = channel::PilotSet<f64>;
pub type Observation64 = channel::Observation<f64>;
pub type SystemGeometry64 = channel::SystemGeometry<f64>;
pub type PriorHyperParams64 = prior::PriorHyperParams<f64>;
pub type GaussianMessage64 = turbo::GaussianMessage<f64>;
pub type PosteriorState64 = turbo::PosteriorState<f64>;
pub type SolverConfig64 = solver::SolverConfig<f64>;
pub type Estimates64 = solver::Estimates<f64>;
pub type XiPrior64 = mstep::XiPrior<f64>;
