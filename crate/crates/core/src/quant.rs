//! Mid-riser uniform quantization and the box of signals consistent with a
//! quantized observation.

use crate::error::{Error, Result};
use crate::signal::Signal;

/// Word length and the quantization step it implies.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct QuantSpec {
    wordlength: u8,
}

impl QuantSpec {
    /// `wordlength` is bits per sample, 2..=16.
    pub fn new(wordlength: u8) -> Result<Self> {
        if !(2..=16).contains(&wordlength) {
            return Err(Error::InvalidArgument(format!(
                "wordlength must be in 2..=16, got {wordlength}"
            )));
        }
        Ok(QuantSpec { wordlength })
    }

    pub fn wordlength(&self) -> u8 {
        self.wordlength
    }

    /// Step size `2^(1-w)`; a power of two, exact in binary floating point.
    pub fn delta(&self) -> f64 {
        2f64.powi(1 - self.wordlength as i32)
    }
}

/// Mid-riser quantization: snap each sample to `delta * (floor(s/delta) + 0.5)`,
/// clamping the extreme levels so outputs stay within `[-1 + delta/2, 1 - delta/2]`.
///
/// Inputs outside `[-1, 1]` are clamped first (with a warning).
pub fn quantize_midriser(s: &Signal, q: QuantSpec) -> Signal {
    let delta = q.delta();
    let top = 1.0 - delta / 2.0;
    let out_of_range = s.samples.iter().filter(|v| v.abs() > 1.0).count();
    if out_of_range > 0 {
        log::warn!("quantize_midriser: {out_of_range} sample(s) outside [-1, 1] clamped");
    }
    let samples = s
        .samples
        .iter()
        .map(|&v| {
            let v = v.clamp(-1.0, 1.0);
            let level = delta * ((v / delta).floor() + 0.5);
            level.clamp(-top, top)
        })
        .collect();
    Signal {
        samples,
        sample_rate: s.sample_rate,
    }
}

/// The set of signals consistent with a quantized observation: a closed box of
/// half-width `delta/2` around each observed sample.
#[derive(Debug, Clone)]
pub struct FeasibleSet {
    pub yq: Vec<f64>,
    pub delta: f64,
}

impl FeasibleSet {
    pub fn new(yq: Vec<f64>, delta: f64) -> Result<Self> {
        if yq.is_empty() {
            return Err(Error::EmptySignal);
        }
        if delta.is_nan() || delta <= 0.0 {
            return Err(Error::InvalidArgument(format!(
                "delta must be positive, got {delta}"
            )));
        }
        Ok(FeasibleSet { yq, delta })
    }

    pub fn from_quantized(yq: &Signal, q: QuantSpec) -> Result<Self> {
        FeasibleSet::new(yq.samples.clone(), q.delta())
    }

    pub fn len(&self) -> usize {
        self.yq.len()
    }

    pub fn is_empty(&self) -> bool {
        self.yq.is_empty()
    }

    fn check_len(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.yq.len() {
            return Err(Error::DimensionMismatch(format!(
                "signal length {} vs feasible set length {}",
                x.len(),
                self.yq.len()
            )));
        }
        Ok(())
    }
}

/// Euclidean projection onto the feasible box: per-sample clamp to
/// `[yq - delta/2, yq + delta/2]`.
pub fn project_gamma(x: &[f64], f: &FeasibleSet) -> Result<Vec<f64>> {
    f.check_len(x)?;
    let half = f.delta / 2.0;
    Ok(x.iter()
        .zip(&f.yq)
        .map(|(&v, &c)| v.clamp(c - half, c + half))
        .collect())
}

/// Prox of `alpha/2 * d^2_Gamma`: a convex combination of the point and its
/// projection, `(alpha * proj(x) + x) / (1 + alpha)`.
pub fn prox_sqdist(x: &[f64], f: &FeasibleSet, alpha: f64) -> Result<Vec<f64>> {
    if alpha.is_nan() || alpha <= 0.0 {
        return Err(Error::InvalidArgument(format!(
            "alpha must be positive, got {alpha}"
        )));
    }
    let proj = project_gamma(x, f)?;
    Ok(x.iter()
        .zip(&proj)
        .map(|(&v, &p)| (alpha * p + v) / (1.0 + alpha))
        .collect())
}

/// Worst-case box violation: `max_l max(0, |x[l] - yq[l]| - delta/2)`.
pub fn feasibility_violation(x: &[f64], f: &FeasibleSet) -> Result<f64> {
    f.check_len(x)?;
    let half = f.delta / 2.0;
    Ok(x.iter()
        .zip(&f.yq)
        .map(|(&v, &c)| ((v - c).abs() - half).max(0.0))
        .fold(0.0, f64::max))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sig(samples: Vec<f64>) -> Signal {
        Signal {
            samples,
            sample_rate: 44100,
        }
    }

    #[test]
    fn delta_is_power_of_two() {
        assert_eq!(QuantSpec::new(2).unwrap().delta(), 0.5);
        assert_eq!(QuantSpec::new(4).unwrap().delta(), 0.125);
        assert_eq!(QuantSpec::new(8).unwrap().delta(), 2f64.powi(-7));
    }

    #[test]
    fn wordlength_bounds() {
        assert!(QuantSpec::new(1).is_err());
        assert!(QuantSpec::new(17).is_err());
        assert!(QuantSpec::new(2).is_ok());
        assert!(QuantSpec::new(16).is_ok());
    }

    #[test]
    fn midriser_examples() {
        let q = QuantSpec::new(2).unwrap(); // delta 0.5
        let out = quantize_midriser(&sig(vec![0.3, 1.0, 0.0, -1.0]), q);
        assert_eq!(out.samples, vec![0.25, 0.75, 0.25, -0.75]);
    }

    #[test]
    fn midriser_is_idempotent() {
        let q = QuantSpec::new(5).unwrap();
        let s = sig((0..100).map(|i| (i as f64 * 0.7).sin()).collect());
        let once = quantize_midriser(&s, q);
        let twice = quantize_midriser(&once, q);
        assert_eq!(once.samples, twice.samples);
    }

    #[test]
    fn original_signal_is_always_feasible() {
        let q = QuantSpec::new(3).unwrap();
        let s = sig((0..256).map(|i| ((i * 37) % 101) as f64 / 101.0 - 0.5).collect());
        let yq = quantize_midriser(&s, q);
        let f = FeasibleSet::from_quantized(&yq, q).unwrap();
        assert_eq!(feasibility_violation(&s.samples, &f).unwrap(), 0.0);
    }

    #[test]
    fn projection_examples() {
        let f = FeasibleSet::new(vec![0.25, 0.25], 0.5).unwrap();
        // Already feasible: unchanged.
        let x = vec![0.3, 0.1];
        assert_eq!(project_gamma(&x, &f).unwrap(), x);
        // One step of delta above the level: clamped to the box edge.
        let out = project_gamma(&[0.75, 0.25], &f).unwrap();
        assert_eq!(out, vec![0.5, 0.25]);
    }

    #[test]
    fn projection_length_mismatch_errors() {
        let f = FeasibleSet::new(vec![0.25], 0.5).unwrap();
        assert!(project_gamma(&[0.1, 0.2], &f).is_err());
    }

    #[test]
    fn prox_examples() {
        let f = FeasibleSet::new(vec![0.25], 0.5).unwrap();
        // Feasible point is a fixed point.
        assert_eq!(prox_sqdist(&[0.3], &f, 1.0).unwrap(), vec![0.3]);
        // alpha = 1, x = yq + delta: halfway between x and proj(x).
        let out = prox_sqdist(&[0.75], &f, 1.0).unwrap();
        assert!((out[0] - (0.25 + 0.375)).abs() < 1e-15);
        // Large alpha approaches the projection.
        let out = prox_sqdist(&[0.75], &f, 1e9).unwrap();
        assert!((out[0] - 0.5).abs() < 1e-8);
        assert!(prox_sqdist(&[0.75], &f, 0.0).is_err());
    }

    #[test]
    fn violation_examples() {
        let f = FeasibleSet::new(vec![0.25, 0.25], 0.5).unwrap();
        assert_eq!(feasibility_violation(&[0.3, 0.2], &f).unwrap(), 0.0);
        let v = feasibility_violation(&[0.75, 0.25], &f).unwrap();
        assert!((v - 0.25).abs() < 1e-15);
    }

    #[test]
    fn quantized_sine_sdr_matches_rule_of_thumb() {
        // Full-scale sine through a w-bit mid-riser quantizer lands close to
        // 6.02 w + 1.76 dB.
        let rate = 44100u32;
        let n = rate as usize;
        let samples: Vec<f64> = (0..n)
            .map(|i| (2.0 * std::f64::consts::PI * 997.0 * i as f64 / rate as f64).sin())
            .collect();
        let s = sig(samples);
        for w in [4u8, 6, 8, 10] {
            let q = QuantSpec::new(w).unwrap();
            let yq = quantize_midriser(&s, q);
            let sdr = crate::metrics::sdr(&s, &yq).unwrap();
            let expected = 6.02 * w as f64 + 1.76;
            assert!(
                (sdr - expected).abs() <= 1.5,
                "w={w}: sdr {sdr:.2} dB vs rule {expected:.2} dB"
            );
        }
    }

    proptest! {
        #[test]
        fn quantizer_error_bound_and_feasibility(
            samples in proptest::collection::vec(-1.0f64..1.0, 1..200),
            w in 2u8..10,
        ) {
            let q = QuantSpec::new(w).unwrap();
            let s = sig(samples);
            let yq = quantize_midriser(&s, q);
            let half = q.delta() / 2.0;
            for (a, b) in s.samples.iter().zip(&yq.samples) {
                prop_assert!((a - b).abs() <= half + 1e-15);
                // Levels sit on odd multiples of delta/2 after clamping.
                let k = b / half;
                prop_assert!((k - k.round()).abs() < 1e-9);
                prop_assert_eq!((k.round() as i64).rem_euclid(2), 1);
            }
            let f = FeasibleSet::from_quantized(&yq, q).unwrap();
            prop_assert_eq!(feasibility_violation(&s.samples, &f).unwrap(), 0.0);
        }

        #[test]
        fn projection_is_idempotent_and_feasible(
            x in proptest::collection::vec(-2.0f64..2.0, 1..100),
            centers in proptest::collection::vec(-1.0f64..1.0, 1..100),
        ) {
            let n = x.len().min(centers.len());
            let f = FeasibleSet::new(centers[..n].to_vec(), 0.25).unwrap();
            let p = project_gamma(&x[..n], &f).unwrap();
            // Arbitrary real centers round the box edges by up to 1 ulp.
            prop_assert!(feasibility_violation(&p, &f).unwrap() <= 1e-15);
            let pp = project_gamma(&p, &f).unwrap();
            prop_assert_eq!(p, pp);
        }
    }
}
