//! Waveform similarity metrics.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::signal::{l2_norm, Signal};
use crate::solver::SolverTrace;

/// Cap applied when the residual is exactly zero.
pub const SDR_CAP_DB: f64 = 300.0;

/// Signal-to-distortion ratio `20 log10(||ref|| / ||ref - est||)` in dB.
pub fn sdr(reference: &Signal, estimate: &Signal) -> Result<f64> {
    sdr_samples(&reference.samples, &estimate.samples)
}

pub fn sdr_samples(reference: &[f64], estimate: &[f64]) -> Result<f64> {
    if reference.len() != estimate.len() {
        return Err(Error::DimensionMismatch(format!(
            "reference length {} vs estimate length {}",
            reference.len(),
            estimate.len()
        )));
    }
    let ref_norm = l2_norm(reference);
    if ref_norm == 0.0 {
        return Err(Error::InvalidArgument(
            "sdr undefined for an all-zero reference".into(),
        ));
    }
    let residual: f64 = reference
        .iter()
        .zip(estimate)
        .map(|(r, e)| (r - e) * (r - e))
        .sum::<f64>()
        .sqrt();
    if residual == 0.0 {
        return Ok(SDR_CAP_DB);
    }
    Ok((20.0 * (ref_norm / residual).log10()).min(SDR_CAP_DB))
}

/// Evaluation summary for one restoration run.
#[derive(Debug, Clone, Serialize)]
pub struct EvalResult {
    pub method: String,
    pub wordlength: u8,
    /// SDR of the restored signal against the clean reference, dB.
    pub sdr_db: f64,
    /// SDR of the quantized input against the clean reference, dB.
    pub sdr_input_db: f64,
    /// `sdr_db - sdr_input_db`.
    pub delta_db: f64,
    /// Recorded iteration with the highest SDR.
    pub best_iter: usize,
}

impl EvalResult {
    pub fn new(
        method: impl Into<String>,
        wordlength: u8,
        sdr_db: f64,
        sdr_input_db: f64,
        best_iter: usize,
    ) -> Self {
        EvalResult {
            method: method.into(),
            wordlength,
            sdr_db,
            sdr_input_db,
            delta_db: sdr_db - sdr_input_db,
            best_iter,
        }
    }
}

/// Recorded iteration with the highest SDR; ties break toward the earliest.
pub fn best_iterate(trace: &SolverTrace) -> Result<(usize, f64)> {
    let mut best: Option<(usize, f64)> = None;
    for row in &trace.rows {
        let Some(s) = row.sdr else { continue };
        if best.is_none_or(|(_, b)| s > b) {
            best = Some((row.iter, s));
        }
    }
    best.ok_or_else(|| {
        Error::InvalidArgument("trace has no SDR entries (no reference was supplied)".into())
    })
}
