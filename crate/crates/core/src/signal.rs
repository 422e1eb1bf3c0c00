//! Sample-domain signal representation and basic conditioning.

use crate::error::{Error, Result};

/// A mono audio signal with dimensionless amplitudes, nominally in `[-1, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Signal {
    pub samples: Vec<f64>,
    pub sample_rate: u32,
}

impl Signal {
    /// Build a signal, rejecting empty or non-finite input.
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::EmptySignal);
        }
        if let Some(i) = samples.iter().position(|s| !s.is_finite()) {
            return Err(Error::NonFiniteSample(i));
        }
        Ok(Signal {
            samples,
            sample_rate,
        })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_secs(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }

    /// Largest absolute sample value.
    pub fn peak(&self) -> f64 {
        self.samples.iter().fold(0.0, |acc, s| acc.max(s.abs()))
    }

    /// Scale so the peak hits 1.0 exactly; returns the applied gain.
    ///
    /// All-zero signals are returned unchanged with gain 1, which keeps batch
    /// runs alive on silent inputs.
    pub fn peak_normalize(&self) -> (Signal, f64) {
        let peak = self.peak();
        if peak == 0.0 {
            return (self.clone(), 1.0);
        }
        // Dividing by the peak (rather than multiplying by 1/peak) makes the
        // new peak exactly 1.0.
        let gain = 1.0 / peak;
        let samples = self.samples.iter().map(|s| s / peak).collect();
        (
            Signal {
                samples,
                sample_rate: self.sample_rate,
            },
            gain,
        )
    }

    /// Keep the first `seconds` of the signal; shorter signals pass through whole.
    pub fn truncate(&self, seconds: f64) -> Result<Signal> {
        if seconds.is_nan() || seconds <= 0.0 {
            return Err(Error::InvalidArgument(format!(
                "truncation length must be positive, got {seconds}"
            )));
        }
        let keep = (seconds * self.sample_rate as f64).floor() as usize;
        let keep = keep.min(self.samples.len());
        if keep == 0 {
            return Err(Error::InvalidArgument(format!(
                "truncation to {seconds} s keeps zero samples at {} Hz",
                self.sample_rate
            )));
        }
        Ok(Signal {
            samples: self.samples[..keep].to_vec(),
            sample_rate: self.sample_rate,
        })
    }
}

/// Euclidean norm of a sample slice.
pub fn l2_norm(samples: &[f64]) -> f64 {
    samples.iter().map(|s| s * s).sum::<f64>().sqrt()
}

/// Zero-pad a sample vector to `len` (no-op if already that long).
pub fn pad_to(samples: &[f64], len: usize) -> Vec<f64> {
    let mut out = samples.to_vec();
    if out.len() < len {
        out.resize(len, 0.0);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn new_rejects_empty() {
        assert!(matches!(Signal::new(vec![], 44100), Err(Error::EmptySignal)));
    }

    #[test]
    fn new_rejects_non_finite() {
        let err = Signal::new(vec![0.0, f64::NAN], 44100).unwrap_err();
        assert!(matches!(err, Error::NonFiniteSample(1)));
    }

    #[test]
    fn peak_normalize_scales_to_unit_peak() {
        let s = Signal::new(vec![0.5, -0.25], 8000).unwrap();
        let (n, gain) = s.peak_normalize();
        assert_eq!(n.samples, vec![1.0, -0.5]);
        assert_eq!(gain, 2.0);
    }

    #[test]
    fn peak_normalize_zero_signal_is_identity() {
        let s = Signal::new(vec![0.0, 0.0, 0.0], 8000).unwrap();
        let (n, gain) = s.peak_normalize();
        assert_eq!(n.samples, s.samples);
        assert_eq!(gain, 1.0);
    }

    #[test]
    fn truncate_keeps_first_floor_of_rate_times_seconds() {
        let s = Signal::new(vec![0.1; 441000], 44100).unwrap();
        let t = s.truncate(7.0).unwrap();
        assert_eq!(t.len(), 308700);
    }

    #[test]
    fn truncate_shorter_signal_unchanged() {
        let s = Signal::new(vec![0.1; 3 * 44100], 44100).unwrap();
        let t = s.truncate(7.0).unwrap();
        assert_eq!(t.len(), s.len());
    }

    #[test]
    fn truncate_zero_errors() {
        let s = Signal::new(vec![0.1; 100], 44100).unwrap();
        assert!(s.truncate(0.0).is_err());
        assert!(s.truncate(-1.0).is_err());
    }

    #[test]
    fn truncate_is_idempotent() {
        let s = Signal::new((0..1000).map(|i| (i as f64).sin()).collect(), 100).unwrap();
        let once = s.truncate(3.5).unwrap();
        let twice = once.truncate(3.5).unwrap();
        assert_eq!(once, twice);
    }

    proptest! {
        #[test]
        fn peak_normalize_postcondition_and_idempotence(
            samples in proptest::collection::vec(-1000.0f64..1000.0, 1..200)
        ) {
            let s = Signal::new(samples, 48000).unwrap();
            let (n, _) = s.peak_normalize();
            if s.peak() > 0.0 {
                prop_assert_eq!(n.peak(), 1.0);
            }
            let (again, gain2) = n.peak_normalize();
            prop_assert_eq!(gain2, 1.0);
            prop_assert_eq!(again.samples, n.samples);
        }
    }
}
