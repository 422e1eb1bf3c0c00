//! Discrete Gabor transform with an exact adjoint.
//!
//! Analysis follows `c[m,n] = sum_l s[l] w[l - n a] e^{-2 pi i m l / M}` with
//! periodic indexing of the padded signal. Each frame is windowed, placed into
//! a length-M buffer at offset `n a mod M` (which realizes the absolute-time
//! exponent as a circular shift), and transformed with a full complex FFT.
//! In the painless case (window length <= channels) the frame operator is
//! diagonal, so a constant rescale of the window makes the frame Parseval
//! tight and the adjoint doubles as the inverse.

use std::sync::Arc;

use ndarray::Array2;
use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};

/// Window length, hop, channel count, and the padded signal length they act on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GaborParams {
    win_len: usize,
    hop: usize,
    channels: usize,
    padded_len: usize,
}

impl GaborParams {
    /// Validate a configuration and round `signal_len` up to a hop multiple
    /// (at least one window long).
    pub fn new(win_len: usize, hop: usize, channels: usize, signal_len: usize) -> Result<Self> {
        if win_len < 2 || !win_len.is_multiple_of(2) {
            return Err(Error::GaborConfig(format!(
                "window length must be even and >= 2, got {win_len}"
            )));
        }
        if hop == 0 || hop > win_len {
            return Err(Error::GaborConfig(format!(
                "hop must be in 1..={win_len}, got {hop}"
            )));
        }
        if channels < win_len {
            return Err(Error::GaborConfig(format!(
                "non-painless configuration: {channels} channels < window length {win_len}"
            )));
        }
        if signal_len == 0 {
            return Err(Error::EmptySignal);
        }
        let padded_len = signal_len.max(win_len).div_ceil(hop) * hop;
        Ok(GaborParams {
            win_len,
            hop,
            channels,
            padded_len,
        })
    }

    /// The configuration used for full-quality runs: 8192-sample Hann,
    /// 75% overlap, 16384 channels.
    pub fn standard_for(signal_len: usize) -> Result<Self> {
        GaborParams::new(8192, 2048, 16384, signal_len)
    }

    /// Small configuration for fast runs and CI: 512-sample window,
    /// 75% overlap, 1024 channels.
    pub fn desk_for(signal_len: usize) -> Result<Self> {
        GaborParams::new(512, 128, 1024, signal_len)
    }

    pub fn win_len(&self) -> usize {
        self.win_len
    }

    pub fn hop(&self) -> usize {
        self.hop
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn padded_len(&self) -> usize {
        self.padded_len
    }

    /// Number of frames `N = padded_len / hop`.
    pub fn frames(&self) -> usize {
        self.padded_len / self.hop
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WindowKind {
    Hann,
    HannDerivative,
}

/// Real analysis window together with the scaling applied to its closed form.
#[derive(Debug, Clone, PartialEq)]
pub struct Window {
    pub samples: Vec<f64>,
    pub kind: WindowKind,
    scale: f64,
}

impl Window {
    /// Periodic Hann `0.5 (1 - cos(2 pi k / n))`, unscaled.
    pub fn hann(win_len: usize) -> Result<Self> {
        check_win_len(win_len)?;
        let samples = (0..win_len)
            .map(|k| 0.5 * (1.0 - (2.0 * std::f64::consts::PI * k as f64 / win_len as f64).cos()))
            .collect();
        Ok(Window {
            samples,
            kind: WindowKind::Hann,
            scale: 1.0,
        })
    }

    /// Analytic time derivative of the periodic Hann sampled on the same grid:
    /// `(pi / n) sin(2 pi k / n)`. Units are per sample (sample-rate free);
    /// the estimator calibration absorbs any remaining unit convention.
    pub fn hann_derivative(win_len: usize) -> Result<Self> {
        check_win_len(win_len)?;
        let n = win_len as f64;
        let samples = (0..win_len)
            .map(|k| (std::f64::consts::PI / n) * (2.0 * std::f64::consts::PI * k as f64 / n).sin())
            .collect();
        Ok(Window {
            samples,
            kind: WindowKind::HannDerivative,
            scale: 1.0,
        })
    }

    /// Multiply all samples by `factor`, recording it in the scale flag.
    pub fn scaled(&self, factor: f64) -> Window {
        Window {
            samples: self.samples.iter().map(|v| v * factor).collect(),
            kind: self.kind,
            scale: self.scale * factor,
        }
    }

    /// Scaling applied so far relative to the closed form (1.0 = unscaled).
    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

fn check_win_len(win_len: usize) -> Result<()> {
    if win_len < 2 || !win_len.is_multiple_of(2) {
        return Err(Error::GaborConfig(format!(
            "window length must be even and >= 2, got {win_len}"
        )));
    }
    Ok(())
}

/// Complex time-frequency coefficients, `channels x frames`.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientGrid {
    pub values: Array2<Complex64>,
}

impl CoefficientGrid {
    pub fn zeros(channels: usize, frames: usize) -> Self {
        CoefficientGrid {
            values: Array2::zeros((channels, frames)),
        }
    }

    /// `(channels, frames)`.
    pub fn dims(&self) -> (usize, usize) {
        self.values.dim()
    }

    pub fn l1_norm(&self) -> f64 {
        self.values.iter().map(|v| v.norm()).sum()
    }

    pub fn l2_norm(&self) -> f64 {
        self.values.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    /// Debug dump of magnitudes as `m,n,abs` rows.
    pub fn dump_magnitudes_csv(&self, path: impl AsRef<std::path::Path>) -> Result<()> {
        use std::io::Write;
        let path = path.as_ref();
        let mut f = std::io::BufWriter::new(
            std::fs::File::create(path).map_err(|e| Error::io(path, e))?,
        );
        writeln!(f, "m,n,abs").map_err(|e| Error::io(path, e))?;
        let (m, n) = self.dims();
        for mi in 0..m {
            for ni in 0..n {
                writeln!(f, "{mi},{ni},{}", self.values[[mi, ni]].norm())
                    .map_err(|e| Error::io(path, e))?;
            }
        }
        Ok(())
    }
}

/// Reusable FFT plans for one Gabor configuration.
pub struct DgtPlan {
    params: GaborParams,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
}

impl DgtPlan {
    pub fn new(params: GaborParams) -> Self {
        let mut planner = FftPlanner::new();
        let fwd = planner.plan_fft_forward(params.channels);
        let inv = planner.plan_fft_inverse(params.channels);
        DgtPlan { params, fwd, inv }
    }

    pub fn params(&self) -> &GaborParams {
        &self.params
    }

    fn check_window(&self, w: &Window) -> Result<()> {
        if w.len() != self.params.win_len {
            return Err(Error::DimensionMismatch(format!(
                "window length {} vs configured {}",
                w.len(),
                self.params.win_len
            )));
        }
        Ok(())
    }

    /// Analysis transform of a padded signal.
    pub fn dgt(&self, samples: &[f64], w: &Window) -> Result<CoefficientGrid> {
        let mut out = CoefficientGrid::zeros(self.params.channels, self.params.frames());
        self.dgt_into(samples, w, &mut out)?;
        Ok(out)
    }

    pub fn dgt_into(
        &self,
        samples: &[f64],
        w: &Window,
        out: &mut CoefficientGrid,
    ) -> Result<()> {
        self.check_window(w)?;
        let p = &self.params;
        if samples.len() != p.padded_len {
            return Err(Error::DimensionMismatch(format!(
                "signal length {} vs padded length {}",
                samples.len(),
                p.padded_len
            )));
        }
        if out.dims() != (p.channels, p.frames()) {
            return Err(Error::DimensionMismatch(format!(
                "grid {:?} vs expected ({}, {})",
                out.dims(),
                p.channels,
                p.frames()
            )));
        }

        let m_ch = p.channels;
        let len = p.padded_len;
        let zero = Complex64::new(0.0, 0.0);
        let mut buf = vec![zero; m_ch];
        let mut scratch = vec![zero; self.fwd.get_inplace_scratch_len()];
        for n in 0..p.frames() {
            buf.fill(zero);
            let start = n * p.hop;
            for (k, &wk) in w.samples.iter().enumerate() {
                let li = (start + k) % len;
                let bi = (start + k) % m_ch;
                buf[bi] = Complex64::new(samples[li] * wk, 0.0);
            }
            self.fwd.process_with_scratch(&mut buf, &mut scratch);
            for (mi, v) in buf.iter().enumerate() {
                out.values[[mi, n]] = *v;
            }
        }
        Ok(())
    }

    /// Exact adjoint of [`DgtPlan::dgt`] with respect to the real inner
    /// product on signals and `Re <.,.>` on grids.
    pub fn dgt_adjoint(&self, c: &CoefficientGrid, w: &Window) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.params.padded_len];
        self.dgt_adjoint_into(c, w, &mut out)?;
        Ok(out)
    }

    pub fn dgt_adjoint_into(
        &self,
        c: &CoefficientGrid,
        w: &Window,
        out: &mut [f64],
    ) -> Result<()> {
        self.check_window(w)?;
        let p = &self.params;
        if c.dims() != (p.channels, p.frames()) {
            return Err(Error::DimensionMismatch(format!(
                "grid {:?} vs expected ({}, {})",
                c.dims(),
                p.channels,
                p.frames()
            )));
        }
        if out.len() != p.padded_len {
            return Err(Error::DimensionMismatch(format!(
                "output length {} vs padded length {}",
                out.len(),
                p.padded_len
            )));
        }

        let m_ch = p.channels;
        let len = p.padded_len;
        let zero = Complex64::new(0.0, 0.0);
        let mut buf = vec![zero; m_ch];
        let mut scratch = vec![zero; self.inv.get_inplace_scratch_len()];
        out.fill(0.0);
        for n in 0..p.frames() {
            for (mi, v) in buf.iter_mut().enumerate() {
                *v = c.values[[mi, n]];
            }
            // Unnormalized inverse FFT; the 1/M is absorbed by tight scaling.
            self.inv.process_with_scratch(&mut buf, &mut scratch);
            let start = n * p.hop;
            for (k, &wk) in w.samples.iter().enumerate() {
                let li = (start + k) % len;
                let bi = (start + k) % m_ch;
                out[li] += wk * buf[bi].re;
            }
        }
        Ok(())
    }
}

/// Convenience one-shot analysis (plans FFTs internally).
pub fn dgt(samples: &[f64], p: &GaborParams, w: &Window) -> Result<CoefficientGrid> {
    DgtPlan::new(*p).dgt(samples, w)
}

/// Convenience one-shot adjoint (plans FFTs internally).
pub fn dgt_adjoint(c: &CoefficientGrid, p: &GaborParams, w: &Window) -> Result<Vec<f64>> {
    DgtPlan::new(*p).dgt_adjoint(c, w)
}

/// Frame bounds of the painless-case frame operator, which is diagonal with
/// entries `M * sum_n w^2[l - n a]`. Returns `(A, B) = (min, max)` over
/// samples; `A = 0` means the window/hop pair is not a frame.
pub fn frame_bounds(p: &GaborParams, w: &Window) -> Result<(f64, f64)> {
    if w.len() != p.win_len {
        return Err(Error::DimensionMismatch(format!(
            "window length {} vs configured {}",
            w.len(),
            p.win_len
        )));
    }
    let mut overlap = vec![0.0f64; p.hop];
    for (k, &v) in w.samples.iter().enumerate() {
        overlap[k % p.hop] += v * v;
    }
    let m = p.channels as f64;
    let lo = overlap.iter().cloned().fold(f64::INFINITY, f64::min) * m;
    let hi = overlap.iter().cloned().fold(0.0f64, f64::max) * m;
    Ok((lo, hi))
}

/// Constant `kappa` such that `kappa * w` is a Parseval-tight window for `p`.
///
/// Requires the squared-overlap sum to be constant across samples (true for
/// Hann at 75% overlap); otherwise no constant rescale can be tight.
pub fn tight_scale_factor(p: &GaborParams, w: &Window) -> Result<f64> {
    let (lo, hi) = frame_bounds(p, w)?;
    if lo <= 0.0 {
        return Err(Error::GaborConfig(
            "window/hop pair is not a frame (frame bound A = 0)".into(),
        ));
    }
    if hi - lo > 1e-10 * hi {
        return Err(Error::GaborConfig(format!(
            "squared-overlap sum varies across samples (A = {lo}, B = {hi}); \
             constant tight scaling unavailable"
        )));
    }
    Ok(1.0 / (0.5 * (lo + hi)).sqrt())
}

/// Tight-scaled Hann analysis window plus the matching derivative window
/// (both multiplied by the same constant, keeping their analytic relation).
pub fn tight_hann_pair(p: &GaborParams) -> Result<(Window, Window)> {
    let g = Window::hann(p.win_len)?;
    let kappa = tight_scale_factor(p, &g)?;
    let gd = Window::hann_derivative(p.win_len)?;
    Ok((g.scaled(kappa), gd.scaled(kappa)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal::l2_norm;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    pub(crate) fn random_signal(rng: &mut ChaCha8Rng, len: usize) -> Vec<f64> {
        (0..len).map(|_| rng.random_range(-1.0..1.0)).collect()
    }

    pub(crate) fn random_grid(rng: &mut ChaCha8Rng, m: usize, n: usize) -> CoefficientGrid {
        let mut g = CoefficientGrid::zeros(m, n);
        for v in g.values.iter_mut() {
            *v = Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        }
        g
    }

    fn desk() -> GaborParams {
        GaborParams::new(64, 16, 128, 512).unwrap()
    }

    fn inner_grid(a: &CoefficientGrid, b: &CoefficientGrid) -> Complex64 {
        a.values
            .iter()
            .zip(b.values.iter())
            .map(|(x, y)| x * y.conj())
            .sum()
    }

    fn inner_sig(a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| x * y).sum()
    }

    #[test]
    fn hann_closed_form() {
        let w = Window::hann(4).unwrap();
        let expect = [0.0, 0.5, 1.0, 0.5];
        for (a, b) in w.samples.iter().zip(expect) {
            assert!((a - b).abs() < 1e-15);
        }
        assert_eq!(w.scale(), 1.0);
    }

    #[test]
    fn hann_rejects_odd_or_tiny() {
        assert!(Window::hann(3).is_err());
        assert!(Window::hann(0).is_err());
        assert!(Window::hann_derivative(5).is_err());
    }

    #[test]
    fn hann_is_symmetric_and_nonnegative() {
        let w = Window::hann(64).unwrap();
        for k in 1..64 {
            assert!((w.samples[k] - w.samples[64 - k]).abs() < 1e-15);
            assert!(w.samples[k] >= 0.0);
        }
    }

    #[test]
    fn derivative_closed_form_points() {
        let n = 64;
        let w = Window::hann_derivative(n).unwrap();
        assert_eq!(w.samples[0], 0.0);
        let peak = std::f64::consts::PI / n as f64;
        assert!((w.samples[n / 4] - peak).abs() < 1e-15);
    }

    #[test]
    fn derivative_matches_central_difference() {
        // Central differences of the sampled Hann converge at order 1/n^2.
        let n = 256usize;
        let h = Window::hann(n).unwrap();
        let d = Window::hann_derivative(n).unwrap();
        let tol = {
            let step = 2.0 * std::f64::consts::PI / n as f64;
            (std::f64::consts::PI / n as f64) * step * step
        };
        for k in 0..n {
            let diff = (h.samples[(k + 1) % n] - h.samples[(k + n - 1) % n]) / 2.0;
            assert!(
                (diff - d.samples[k]).abs() <= tol,
                "k={k}: {} vs {}",
                diff,
                d.samples[k]
            );
        }
    }

    #[test]
    fn tight_overlap_sum_is_one_everywhere() {
        // Direct summation of squared shifted copies, times M.
        let p = desk();
        let (g, _) = tight_hann_pair(&p).unwrap();
        let mut overlap = vec![0.0f64; p.hop()];
        for (k, &v) in g.samples.iter().enumerate() {
            overlap[k % p.hop()] += v * v;
        }
        for o in overlap {
            assert!((o * p.channels() as f64 - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn frame_bounds_unscaled_hann_quarter_hop() {
        // Hann^2 overlap-added at hop win/4 sums to 1.5 at every sample.
        let p = desk();
        let g = Window::hann(p.win_len()).unwrap();
        let (a, b) = frame_bounds(&p, &g).unwrap();
        let expect = 1.5 * p.channels() as f64;
        assert!((a - expect).abs() < 1e-9 * expect);
        assert!((b - expect).abs() < 1e-9 * expect);
    }

    #[test]
    fn frame_bounds_no_overlap_flags_non_frame() {
        let p = GaborParams::new(64, 64, 128, 512).unwrap();
        let g = Window::hann(64).unwrap();
        let (a, _) = frame_bounds(&p, &g).unwrap();
        assert_eq!(a, 0.0);
        assert!(tight_scale_factor(&p, &g).is_err());
    }

    #[test]
    fn params_reject_bad_configs() {
        assert!(GaborParams::new(3, 1, 8, 16).is_err()); // odd window
        assert!(GaborParams::new(8, 0, 8, 16).is_err()); // zero hop
        assert!(GaborParams::new(8, 9, 8, 16).is_err()); // hop > window
        assert!(GaborParams::new(16, 4, 8, 16).is_err()); // non-painless
        assert!(GaborParams::new(8, 4, 8, 0).is_err()); // empty signal
    }

    #[test]
    fn padding_rounds_up_to_hop_multiple() {
        let p = GaborParams::new(8, 4, 16, 21).unwrap();
        assert_eq!(p.padded_len(), 24);
        assert_eq!(p.frames(), 6);
        // Shorter than one window: padded to at least win_len.
        let p = GaborParams::new(8, 4, 16, 3).unwrap();
        assert_eq!(p.padded_len(), 8);
    }

    #[test]
    fn dgt_of_zero_is_zero() {
        let p = desk();
        let (g, _) = tight_hann_pair(&p).unwrap();
        let c = dgt(&vec![0.0; p.padded_len()], &p, &g).unwrap();
        assert_eq!(c.max_abs(), 0.0);
    }

    #[test]
    fn dgt_matches_bruteforce_dft() {
        let p = desk();
        let (g, _) = tight_hann_pair(&p).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let s = random_signal(&mut rng, p.padded_len());
        let c = dgt(&s, &p, &g).unwrap();

        let (m_ch, len) = (p.channels(), p.padded_len());
        for n in [0usize, 7, 31] {
            for m in [0usize, 1, 13, 64, 127] {
                let mut acc = Complex64::new(0.0, 0.0);
                for (k, &wk) in g.samples.iter().enumerate() {
                    let l = (n * p.hop() + k) % len;
                    let phase = -2.0 * std::f64::consts::PI * (m * (n * p.hop() + k)) as f64
                        / m_ch as f64;
                    acc += Complex64::new(phase.cos(), phase.sin()) * (s[l] * wk);
                }
                let got = c.values[[m, n]];
                assert!(
                    (got - acc).norm() <= 1e-10 * (1.0 + acc.norm()),
                    "mismatch at m={m}, n={n}: {got} vs {acc}"
                );
            }
        }
    }

    #[test]
    fn tone_energy_concentrates_at_its_channel_pair() {
        let p = desk();
        let (g, _) = tight_hann_pair(&p).unwrap();
        let m0 = 32usize; // mid-band
        let m_ch = p.channels();
        let s: Vec<f64> = (0..p.padded_len())
            .map(|l| (2.0 * std::f64::consts::PI * (m0 * l) as f64 / m_ch as f64).cos())
            .collect();
        let c = dgt(&s, &p, &g).unwrap();

        // Mainlobe of the zero-padded Hann spans +-2 M/win channels.
        let lobe = 2 * m_ch / p.win_len();
        let near = |m: usize| -> bool {
            let d1 = (m as isize - m0 as isize).unsigned_abs();
            let d2 = (m as isize - (m_ch - m0) as isize).unsigned_abs();
            d1 <= lobe || d2 <= lobe
        };
        let mut inside = 0.0;
        let mut total = 0.0;
        for m in 0..m_ch {
            let col: f64 = (0..p.frames())
                .map(|n| c.values[[m, n]].norm_sqr())
                .sum();
            total += col;
            if near(m) {
                inside += col;
            }
        }
        assert!(inside / total > 0.99, "ratio {}", inside / total);
    }

    #[test]
    fn parseval_energy_identity_for_tight_window() {
        let p = desk();
        let (g, _) = tight_hann_pair(&p).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let s = random_signal(&mut rng, p.padded_len());
            let c = dgt(&s, &p, &g).unwrap();
            let es = l2_norm(&s);
            let ec = c.l2_norm();
            assert!((es - ec).abs() <= 1e-10 * es);
        }
    }

    #[test]
    fn adjoint_identity_randomized() {
        let p = desk();
        let (g, _) = tight_hann_pair(&p).unwrap();
        let plan = DgtPlan::new(p);
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for _ in 0..100 {
            let x = random_signal(&mut rng, p.padded_len());
            let z = random_grid(&mut rng, p.channels(), p.frames());
            let gx = plan.dgt(&x, &g).unwrap();
            let gz = plan.dgt_adjoint(&z, &g).unwrap();
            let lhs = inner_grid(&gx, &z).re;
            let rhs = inner_sig(&x, &gz);
            let bound = 1e-10 * l2_norm(&x) * z.l2_norm();
            assert!((lhs - rhs).abs() <= bound, "{lhs} vs {rhs}");
        }
    }

    #[test]
    fn tight_frame_reconstruction() {
        let p = desk();
        let (g, _) = tight_hann_pair(&p).unwrap();
        let plan = DgtPlan::new(p);
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..20 {
            let x = random_signal(&mut rng, p.padded_len());
            let back = plan.dgt_adjoint(&plan.dgt(&x, &g).unwrap(), &g).unwrap();
            let err: f64 = x
                .iter()
                .zip(&back)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
            assert!(err <= 1e-10 * l2_norm(&x));
        }
    }

    #[test]
    fn dgt_is_linear() {
        let p = desk();
        let (g, _) = tight_hann_pair(&p).unwrap();
        let plan = DgtPlan::new(p);
        let mut rng = ChaCha8Rng::seed_from_u64(19);
        let x = random_signal(&mut rng, p.padded_len());
        let y = random_signal(&mut rng, p.padded_len());
        let (a, b) = (0.7, -1.3);
        let combo: Vec<f64> = x.iter().zip(&y).map(|(xi, yi)| a * xi + b * yi).collect();
        let cx = plan.dgt(&x, &g).unwrap();
        let cy = plan.dgt(&y, &g).unwrap();
        let cc = plan.dgt(&combo, &g).unwrap();
        for ((vc, vx), vy) in cc.values.iter().zip(cx.values.iter()).zip(cy.values.iter()) {
            assert!((vc - (vx * a + vy * b)).norm() < 1e-12 * (1.0 + vc.norm()));
        }
    }

    #[test]
    fn operator_norm_of_tight_dgt_is_one() {
        // Power iteration on G* G.
        let p = desk();
        let (g, _) = tight_hann_pair(&p).unwrap();
        let plan = DgtPlan::new(p);
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let mut v = random_signal(&mut rng, p.padded_len());
        let mut norm_sq = 0.0;
        for _ in 0..20 {
            let nv = l2_norm(&v);
            for vi in v.iter_mut() {
                *vi /= nv;
            }
            let gv = plan.dgt(&v, &g).unwrap();
            v = plan.dgt_adjoint(&gv, &g).unwrap();
            norm_sq = l2_norm(&v);
        }
        assert!((norm_sq.sqrt() - 1.0).abs() < 1e-6);
    }

    #[test]
    fn dimension_mismatches_error() {
        let p = desk();
        let (g, _) = tight_hann_pair(&p).unwrap();
        let plan = DgtPlan::new(p);
        assert!(plan.dgt(&vec![0.0; 100], &g).is_err());
        let wrong = CoefficientGrid::zeros(4, 4);
        assert!(plan.dgt_adjoint(&wrong, &g).is_err());
        let bad_window = Window::hann(32).unwrap();
        assert!(plan.dgt(&vec![0.0; p.padded_len()], &bad_window).is_err());
    }
}
