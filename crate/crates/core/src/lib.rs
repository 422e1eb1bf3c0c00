//! Restoration of audio degraded by uniform quantization.
//!
//! The pipeline quantizes peak-normalized audio with a mid-riser quantizer,
//! then recovers an estimate of the original by minimizing the l1 norm of a
//! phase-corrected, time-differenced Gabor analysis under the constraint that
//! every sample stays inside its quantization interval (or a squared-distance
//! relaxation of it). A plain analysis-sparsity baseline solves the same
//! problem without the phase machinery. Quality is reported as
//! signal-to-distortion ratio against the clean reference.
//!
//! Modules follow the processing stages: [`signal`]/[`wav`] for I/O and
//! conditioning, [`quant`] for the quantizer and its feasible box, [`gabor`]
//! for the tight-frame transform, [`phase`] for the instantaneous-frequency
//! operators, [`solver`] for the primal-dual iterations, [`metrics`] for
//! evaluation, and [`experiment`] for the batch protocol behind the CLI.

pub mod error;
pub mod experiment;
pub mod gabor;
pub mod metrics;
pub mod phase;
pub mod quant;
pub mod signal;
pub mod solver;
pub mod wav;

pub use error::{Error, Result};
pub use signal::Signal;
