//! Simulation, signal-processing, learning and statistics toolkit for a
//! magnetic tactile-sensorized soft pneumatic actuator.
//!
//! The crate is organised bottom-up:
//!
//! - [`magnetics`]: point-dipole field model, Hall-sensor synthesis, ferrite interference.
//! - [`actuator`]: reduced-order pneumatic actuator, contact mechanics and test-rig simulations.
//! - [`sigproc`]: Chebyshev filtering, cycle segmentation, spatial features and step metrics.
//! - [`neural`]: dense/LSTM networks, Adam, early stopping, gradient checking, persistence.
//! - [`decoupler`]: per-actuator pressure-to-flux model and parasitic subtraction.
//! - [`tactile`]: multi-task force/position network over flux windows.
//! - [`firmness`]: probing protocol, firmness score and experiment harnesses.
//! - [`analysis`]: Pearson statistics and correlation reports.
//! - [`harness`]: configuration, manifests, command orchestration and the verification suite.
//!
//! Data-parallel loops go through [`par`], which uses rayon when the `parallel`
//! feature is enabled and falls back to sequential iteration otherwise. Results
//! are identical either way.

pub mod actuator;
pub mod analysis;
pub mod config;
pub mod decoupler;
pub mod firmness;
pub mod harness;
pub mod magnetics;
pub mod neural;
pub mod par;
pub mod seed;
pub mod sigproc;
pub mod tactile;

pub use nalgebra::Vector3;
