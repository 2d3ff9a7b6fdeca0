//! Digital twin of an N-mode universal photonic processor — a rectangular
//! mesh of Mach-Zehnder interferometers with thermo-optic phase shifters —
//! together with the calibration pipeline that programs it: fringe-based
//! heater characterization, routing optimization, amplitude-only model
//! fitting with thermal crosstalk, unitary programming and fidelity
//! evaluation against Haar-random targets.
//!
//! Start from [`device::synth_device`] to fabricate a synthetic processor,
//! calibrate it with [`calibration`], and drive everything from the `upp`
//! binary or the runnable examples.

pub mod device;
pub mod error;
mod linalg;
pub mod mesh;
pub mod metrics;
pub mod thermal;
pub mod unitary;

pub use error::{Error, Result};
