//! Calibration toolkit for Orthoglide-type 3-d.o.f. translational parallel
//! manipulators.
//!
//! The manipulator is modelled as three rigid legs (PSS chains) driven by
//! mutually orthogonal prismatic joints. Six geometric parameters — three
//! encoder offsets and three leg lengths — are identified from twelve
//! leg-parallelism deviations read off dial gauges while the tool centre
//! point visits seven characteristic postures (mechanical Zero plus the
//! Max/Min travel posture of each axis).
//!
//! # Pipeline
//!
//! 1. [`kinematics`] — exact inverse/direct kinematics of the three-leg model.
//! 2. [`differential`] — analytic Jacobians of TCP position w.r.t. the six
//!    parameters, general and specialised to the calibration postures.
//! 3. [`measurement`] — the gauge model: station placement, leg lines,
//!    linearised and fully nonlinear deviation predictors, and a seeded
//!    noisy-measurement simulator.
//! 4. [`identification`] — the 12x6 calibration system, linear (SVD) and
//!    damped nonlinear least-squares solvers, residual reporting.
//! 5. [`accuracy`] — analytic and Monte Carlo covariance of the identified
//!    parameters under correlated gauge noise.
//!
//! All lengths are millimetres and all angles radians. Every operation is a
//! pure function of its inputs; the only randomness is an explicit seed.

pub mod accuracy;
pub mod axis;
pub mod datasets;
pub mod differential;
pub mod identification;
pub mod kinematics;
pub mod measurement;

pub use axis::Axis;
pub use differential::{ParameterJacobian, Posture};
pub use identification::{
    CalibrationResult, CalibrationSystem, ParameterSubset, SolveMethod,
};
pub use kinematics::{
    CartesianPoint, ConfigurationIndices, GeometryConfig, JointVector, ParameterDeltas,
    ParameterSet,
};
pub use measurement::{Measurement, MeasurementSet, PostureSign, Provenance};
