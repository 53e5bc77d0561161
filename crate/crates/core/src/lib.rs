//! Simulation, observability analysis and moving-horizon estimation for a
//! three-segment double-hinge chain that carries gyroscopes on its two outer
//! segments only.
//!
//! - [`quat`]: quaternion, vector and matrix algebra.
//! - [`chain`]: the chain geometry, constraint residuals and propagation.
//! - [`csvio`]: the CSV file formats.
//! - [`sim`]: ground-truth motions and gyroscope measurements.
//! - [`observability`]: the excitation condition and its brute-force check.
//! - [`mhe`]: the moving-horizon estimator.
//! - [`scenario`]: scenario files.
//! - [`study`]: the acceptance study over generated data.

pub mod chain;
pub mod csvio;
pub mod error;
pub mod mhe;
pub mod observability;
pub mod par;
pub mod quat;
pub mod scenario;
pub mod sim;
pub mod study;

pub use chain::{ChainConfig, ChainState};
pub use error::{Error, Result};
pub use mhe::{MheConfig, Mode};
pub use quat::{Mat3, UnitQuaternion, Vec3};
pub use sim::{GyroRecord, Movement, NoiseSpec, TrajectorySample};
