//! Satellite tracking with linear filters.
//!
//! A unit-mass satellite on a near-circular orbit is described by its
//! deviation from the nominal circle, `x = [r − R, ṙ, R(θ − ωt), R(θ̇ − ω)]`.
//! The crate provides the linearized and sampled model ([`orbit`]), seeded
//! noise ([`noise`]), a covariance-form Kalman filter, its information-form
//! equivalent and the Riccati steady state ([`filters`]), error statistics
//! ([`metrics`]), and a Monte Carlo driver ([`harness`]).

pub mod cli;
pub mod filters;
pub mod harness;
pub mod metrics;
pub mod noise;
pub mod orbit;
pub mod par;
pub mod smallmat;

pub use filters::{FilterError, FilterEstimate, FilterModel, SteadyState};
pub use harness::{ExperimentConfig, HarnessError, MonteCarloResult, RunResult};
pub use metrics::{AmseeRecord, ErrorTrace, MseeRecord};
pub use orbit::{MeasurementType, OrbitParams};
pub use smallmat::{Matrix4, RowVector4, Vector4};
