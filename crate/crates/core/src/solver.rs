//! Primal-dual restoration solvers.
//!
//! One Chambolle-Pock style core drives every variant; they differ only in
//! the analysis operator (`D R G` for the phase-aware dequantizer, plain `G`
//! for the sparsity baseline), the primal prox (projection for the consistent
//! problem, the squared-distance prox for the inconsistent relaxation), and
//! whether the instantaneous frequency is re-estimated mid-run.
//!
//! Per iteration, with step sizes `tau`, `sigma` and relaxation `rho`:
//!
//! ```text
//! q <- clip_lambda(q + sigma K x)
//! u  = p - tau K* q
//! p' = proj(u)                     (consistent)
//! p' = (tau proj(u) + u)/(tau+1)   (inconsistent)
//! x <- p' + rho (p' - p)
//! ```
//!
//! The returned signal is the final primal iterate, which the consistent
//! variant leaves exactly feasible.

use std::io::Write as _;
use std::time::Instant;

use rustfft::num_complex::Complex64;

use crate::error::{Error, Result};
use crate::gabor::{tight_hann_pair, CoefficientGrid, DgtPlan, GaborParams, Window};
use crate::metrics::sdr_samples;
use crate::phase::{
    calibrate_if_scaling, estimate_if, AnalysisOperator, InstFreqGrid, PhaseCorrector,
    DEFAULT_IF_EPS,
};
use crate::quant::{feasibility_violation, FeasibleSet};
use crate::signal::{pad_to, Signal};

/// Fidelity handling: hard constraint or squared-distance relaxation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Variant {
    Consistent,
    Inconsistent,
}

/// Where the instantaneous frequency comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IfSource {
    /// Estimated once from the quantized observation.
    Degraded,
    /// Estimated once from the clean reference (upper-bound variant).
    Oracle,
    /// Re-estimated from the running primal iterate every `k_update` iterations.
    UpdateEveryK,
}

/// Algorithm parameters. Defaults follow the evaluated protocol:
/// `tau = sigma = 1`, `rho = 1/3`, 200 iterations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverConfig {
    pub tau: f64,
    pub sigma: f64,
    pub rho: f64,
    pub lambda: f64,
    pub max_iters: usize,
    pub variant: Variant,
    pub if_source: IfSource,
    pub k_update: usize,
    pub record_every: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            tau: 1.0,
            sigma: 1.0,
            rho: 1.0 / 3.0,
            lambda: 1e-3,
            max_iters: 200,
            variant: Variant::Consistent,
            if_source: IfSource::Degraded,
            k_update: 10,
            record_every: 1,
        }
    }
}

impl SolverConfig {
    /// Defaults with the penalty weight taken from [`lambda_for_wordlength`].
    pub fn for_wordlength(w: u8) -> Self {
        SolverConfig {
            lambda: lambda_for_wordlength(w),
            ..SolverConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |v: f64| !v.is_nan() && v > 0.0;
        if !positive(self.tau) || !positive(self.sigma) || !positive(self.lambda) {
            return Err(Error::InvalidArgument(format!(
                "tau, sigma, lambda must be positive (tau={}, sigma={}, lambda={})",
                self.tau, self.sigma, self.lambda
            )));
        }
        if !(0.0..=1.0).contains(&self.rho) {
            return Err(Error::InvalidArgument(format!(
                "rho must lie in [0, 1], got {}",
                self.rho
            )));
        }
        if self.max_iters == 0 || self.k_update == 0 || self.record_every == 0 {
            return Err(Error::InvalidArgument(
                "max_iters, k_update and record_every must be at least 1".into(),
            ));
        }
        // ||K|| <= 2 for a tight frame composed with the time difference, so
        // the classical convergence condition is tau sigma ||K||^2 <= 1.
        if self.tau * self.sigma * 4.0 > 1.0 + 1e-12 {
            log::warn!(
                "tau = {}, sigma = {} exceed the classical step-size bound \
                 tau*sigma*||K||^2 <= 1; proceeding anyway",
                self.tau,
                self.sigma
            );
        }
        Ok(())
    }
}

/// Penalty weight per word length, from the tuned schedule for 2..=8 bps.
/// Out-of-range word lengths take the nearest endpoint with a warning.
pub fn lambda_for_wordlength(w: u8) -> f64 {
    const TABLE: [f64; 7] = [1e-1, 1e-1, 1e-3, 1e-2, 1e-3, 1e-4, 1e-4];
    if w < 2 {
        log::warn!("wordlength {w} below 2; using the 2-bit lambda");
        TABLE[0]
    } else if w > 8 {
        log::warn!("wordlength {w} above 8; using the 8-bit lambda");
        TABLE[6]
    } else {
        TABLE[(w - 2) as usize]
    }
}

/// One recorded iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    /// 1-based iteration index.
    pub iter: usize,
    /// `lambda ||K p||_1`, plus `d^2/2` to the feasible box when inconsistent.
    pub objective: f64,
    /// Worst-case feasible-box violation of the primal iterate.
    pub feasibility: f64,
    /// SDR against the reference, when one was supplied.
    pub sdr: Option<f64>,
    /// Wall time since the run started.
    pub seconds: f64,
}

/// Per-iteration diagnostics of one solver run.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SolverTrace {
    pub rows: Vec<TraceRow>,
    /// Completed-iteration counts at which the instantaneous frequency was
    /// re-estimated.
    pub omega_refreshes: Vec<usize>,
}

impl SolverTrace {
    /// Write `iter,objective,feasibility,sdr,seconds` rows, preceded by
    /// `# key=value` comment lines echoing the run configuration.
    pub fn write_csv(
        &self,
        path: impl AsRef<std::path::Path>,
        meta: &[(&str, String)],
    ) -> Result<()> {
        let path = path.as_ref();
        let mut f = std::io::BufWriter::new(
            std::fs::File::create(path).map_err(|e| Error::io(path, e))?,
        );
        for (k, v) in meta {
            writeln!(f, "# {k}={v}").map_err(|e| Error::io(path, e))?;
        }
        if !self.omega_refreshes.is_empty() {
            let list: Vec<String> = self.omega_refreshes.iter().map(|i| i.to_string()).collect();
            writeln!(f, "# omega_refreshes={}", list.join(";")).map_err(|e| Error::io(path, e))?;
        }
        writeln!(f, "iter,objective,feasibility,sdr,seconds").map_err(|e| Error::io(path, e))?;
        for r in &self.rows {
            let sdr = r.sdr.map(|s| format!("{s:.6}")).unwrap_or_default();
            writeln!(
                f,
                "{},{:.12e},{:.3e},{},{:.3}",
                r.iter, r.objective, r.feasibility, sdr, r.seconds
            )
            .map_err(|e| Error::io(path, e))?;
        }
        Ok(())
    }
}

fn soft_val(v: Complex64, t: f64) -> Complex64 {
    let n = v.norm();
    if n <= t {
        Complex64::new(0.0, 0.0)
    } else {
        v * (1.0 - t / n)
    }
}

/// Elementwise soft threshold `z max(0, 1 - t/|z|)`.
pub fn soft_threshold(z: &CoefficientGrid, t: f64) -> Result<CoefficientGrid> {
    check_threshold(t)?;
    let mut out = z.clone();
    for v in out.values.iter_mut() {
        *v = soft_val(*v, t);
    }
    Ok(out)
}

/// Elementwise radial clip `z min(1, t/|z|)`, implemented as the residual of
/// the soft threshold so the two decompose the identity.
pub fn clip(z: &CoefficientGrid, t: f64) -> Result<CoefficientGrid> {
    check_threshold(t)?;
    let mut out = z.clone();
    for v in out.values.iter_mut() {
        *v -= soft_val(*v, t);
    }
    Ok(out)
}

fn check_threshold(t: f64) -> Result<()> {
    if t < 0.0 {
        return Err(Error::InvalidArgument(format!(
            "threshold must be nonnegative, got {t}"
        )));
    }
    Ok(())
}

/// Feasible box extended to the padded length; padding samples are pinned to
/// zero, since the observation is known to be silent there.
struct PaddedBox {
    lo: Vec<f64>,
    hi: Vec<f64>,
}

impl PaddedBox {
    fn new(f: &FeasibleSet, padded_len: usize) -> Self {
        let half = f.delta / 2.0;
        let mut lo = vec![0.0; padded_len];
        let mut hi = vec![0.0; padded_len];
        for (i, &c) in f.yq.iter().enumerate() {
            lo[i] = c - half;
            hi[i] = c + half;
        }
        PaddedBox { lo, hi }
    }

    #[inline]
    fn project(&self, i: usize, v: f64) -> f64 {
        v.clamp(self.lo[i], self.hi[i])
    }

    fn sq_dist(&self, x: &[f64]) -> f64 {
        x.iter()
            .enumerate()
            .map(|(i, &v)| {
                let d = (self.lo[i] - v).max(v - self.hi[i]).max(0.0);
                d * d
            })
            .sum()
    }
}

/// Operator interface the primal-dual core runs against.
trait PrimalDualOp {
    fn grid_dims(&self) -> (usize, usize);
    fn forward_into(&mut self, x: &[f64], out: &mut CoefficientGrid) -> Result<()>;
    fn adjoint_into(&mut self, g: &CoefficientGrid, out: &mut [f64]) -> Result<()>;
    fn set_corrector(&mut self, _pc: PhaseCorrector) -> Result<()> {
        Err(Error::InvalidArgument(
            "operator has no phase corrector to update".into(),
        ))
    }
}

impl PrimalDualOp for AnalysisOperator<'_> {
    fn grid_dims(&self) -> (usize, usize) {
        AnalysisOperator::grid_dims(self)
    }

    fn forward_into(&mut self, x: &[f64], out: &mut CoefficientGrid) -> Result<()> {
        AnalysisOperator::forward_into(self, x, out)
    }

    fn adjoint_into(&mut self, g: &CoefficientGrid, out: &mut [f64]) -> Result<()> {
        AnalysisOperator::adjoint_into(self, g, out)
    }

    fn set_corrector(&mut self, pc: PhaseCorrector) -> Result<()> {
        AnalysisOperator::set_corrector(self, pc)
    }
}

/// Plain Gabor analysis (`K = G`), used by the sparsity baseline.
struct PlainGabor<'a> {
    plan: &'a DgtPlan,
    window: &'a Window,
}

impl PrimalDualOp for PlainGabor<'_> {
    fn grid_dims(&self) -> (usize, usize) {
        let p = self.plan.params();
        (p.channels(), p.frames())
    }

    fn forward_into(&mut self, x: &[f64], out: &mut CoefficientGrid) -> Result<()> {
        self.plan.dgt_into(x, self.window, out)
    }

    fn adjoint_into(&mut self, g: &CoefficientGrid, out: &mut [f64]) -> Result<()> {
        self.plan.dgt_adjoint_into(g, self.window, out)
    }
}

struct RunInputs<'a> {
    yq: &'a Signal,
    feasible: &'a FeasibleSet,
    reference: Option<&'a Signal>,
}

/// Everything needed to run the solvers at one transform configuration:
/// FFT plans, the tight window pair, and the calibrated estimator scale.
pub struct PhadqContext {
    params: GaborParams,
    plan: DgtPlan,
    window: Window,
    deriv: Window,
    if_scale: f64,
    if_eps: f64,
}

impl PhadqContext {
    /// Build windows and calibrate the instantaneous-frequency scale for the
    /// given configuration.
    pub fn new(params: GaborParams) -> Result<Self> {
        let (window, deriv) = tight_hann_pair(&params)?;
        let if_scale = calibrate_if_scaling(&params, &window, &deriv)?;
        Ok(PhadqContext {
            params,
            plan: DgtPlan::new(params),
            window,
            deriv,
            if_scale,
            if_eps: DEFAULT_IF_EPS,
        })
    }

    pub fn params(&self) -> &GaborParams {
        &self.params
    }

    pub fn window(&self) -> &Window {
        &self.window
    }

    pub fn plan(&self) -> &DgtPlan {
        &self.plan
    }

    /// Calibrated quotient-to-channel-units constant.
    pub fn if_scale(&self) -> f64 {
        self.if_scale
    }

    /// Instantaneous frequency of a signal (padded internally).
    pub fn estimate_omega(&self, s: &Signal) -> Result<InstFreqGrid> {
        self.check_signal_len(s.len())?;
        self.estimate_omega_padded(&pad_to(&s.samples, self.params.padded_len()))
    }

    fn estimate_omega_padded(&self, padded: &[f64]) -> Result<InstFreqGrid> {
        estimate_if(
            padded,
            &self.plan,
            &self.window,
            &self.deriv,
            self.if_scale,
            self.if_eps,
        )
    }

    /// Instantaneous frequency of the clean reference, for the upper-bound
    /// variant that assumes the original is available.
    pub fn oracle_omega(&self, clean: &Signal) -> Result<InstFreqGrid> {
        self.estimate_omega(clean)
    }

    fn check_signal_len(&self, len: usize) -> Result<()> {
        let expected = GaborParams::new(
            self.params.win_len(),
            self.params.hop(),
            self.params.channels(),
            len,
        )?;
        if expected.padded_len() != self.params.padded_len() {
            return Err(Error::DimensionMismatch(format!(
                "signal length {len} pads to {}, but this context was built for {}",
                expected.padded_len(),
                self.params.padded_len()
            )));
        }
        Ok(())
    }

    fn check_inputs(&self, inputs: &RunInputs) -> Result<()> {
        self.check_signal_len(inputs.yq.len())?;
        if inputs.feasible.len() != inputs.yq.len() {
            return Err(Error::DimensionMismatch(format!(
                "feasible set length {} vs observation length {}",
                inputs.feasible.len(),
                inputs.yq.len()
            )));
        }
        if let Some(r) = inputs.reference {
            if r.len() != inputs.yq.len() {
                return Err(Error::DimensionMismatch(format!(
                    "reference length {} vs observation length {}",
                    r.len(),
                    inputs.yq.len()
                )));
            }
        }
        if self.params.frames() < 2 {
            return Err(Error::DimensionMismatch(
                "need at least 2 frames for the time difference".into(),
            ));
        }
        Ok(())
    }

    /// Phase-aware dequantization with a fixed instantaneous frequency.
    pub fn bphadq_run(
        &self,
        yq: &Signal,
        feasible: &FeasibleSet,
        cfg: &SolverConfig,
        omega: &InstFreqGrid,
        reference: Option<&Signal>,
    ) -> Result<(Signal, SolverTrace)> {
        cfg.validate()?;
        let inputs = RunInputs {
            yq,
            feasible,
            reference,
        };
        self.check_inputs(&inputs)?;
        let pc = PhaseCorrector::new(omega, &self.params)?;
        let mut op = AnalysisOperator::new(&self.plan, &self.window, pc)?;
        self.run_core(&mut op, &inputs, cfg, None)
    }

    /// Phase-aware dequantization that re-estimates the instantaneous
    /// frequency from the running iterate every `cfg.k_update` iterations.
    /// The dual variable and relaxation history carry across refreshes.
    pub fn uphadq_run(
        &self,
        yq: &Signal,
        feasible: &FeasibleSet,
        cfg: &SolverConfig,
        reference: Option<&Signal>,
    ) -> Result<(Signal, SolverTrace)> {
        cfg.validate()?;
        if cfg.if_source != IfSource::UpdateEveryK {
            return Err(Error::InvalidArgument(
                "uphadq_run requires cfg.if_source = UpdateEveryK".into(),
            ));
        }
        let inputs = RunInputs {
            yq,
            feasible,
            reference,
        };
        self.check_inputs(&inputs)?;
        // First estimate comes from the observation, like the fixed variant.
        let omega = self.estimate_omega(yq)?;
        let pc = PhaseCorrector::new(&omega, &self.params)?;
        let mut op = AnalysisOperator::new(&self.plan, &self.window, pc)?;
        self.run_core(&mut op, &inputs, cfg, Some(cfg.k_update))
    }

    /// Sparsity baseline: same primal-dual iteration with `K = G` and the
    /// hard feasibility constraint.
    pub fn cp_sparse_baseline(
        &self,
        yq: &Signal,
        feasible: &FeasibleSet,
        cfg: &SolverConfig,
        reference: Option<&Signal>,
    ) -> Result<(Signal, SolverTrace)> {
        cfg.validate()?;
        let inputs = RunInputs {
            yq,
            feasible,
            reference,
        };
        self.check_inputs(&inputs)?;
        let mut op = PlainGabor {
            plan: &self.plan,
            window: &self.window,
        };
        let cfg = SolverConfig {
            variant: Variant::Consistent,
            ..*cfg
        };
        self.run_core(&mut op, &inputs, &cfg, None)
    }

    fn run_core(
        &self,
        op: &mut dyn PrimalDualOp,
        inputs: &RunInputs,
        cfg: &SolverConfig,
        refresh_every: Option<usize>,
    ) -> Result<(Signal, SolverTrace)> {
        let start = Instant::now();
        let padded_len = self.params.padded_len();
        let orig_len = inputs.yq.len();
        let bounds = PaddedBox::new(inputs.feasible, padded_len);
        let (gm, gn) = op.grid_dims();

        let mut p = pad_to(&inputs.yq.samples, padded_len);
        let mut x = p.clone();
        let mut q = CoefficientGrid::zeros(gm, gn);
        let mut kx = CoefficientGrid::zeros(gm, gn);
        let mut u = vec![0.0; padded_len];
        let mut trace = SolverTrace::default();

        for i in 0..cfg.max_iters {
            if let Some(k) = refresh_every {
                if i > 0 && i % k == 0 {
                    let omega = self.estimate_omega_padded(&p)?;
                    op.set_corrector(PhaseCorrector::new(&omega, &self.params)?)?;
                    trace.omega_refreshes.push(i);
                }
            }

            // Dual ascent and clip onto the lambda-ball.
            op.forward_into(&x, &mut kx)?;
            for (qv, kv) in q.values.iter_mut().zip(kx.values.iter()) {
                let step = *qv + kv * cfg.sigma;
                *qv = step - soft_val(step, cfg.lambda);
            }

            // u = p - tau K* q
            op.adjoint_into(&q, &mut u)?;
            for (uv, pv) in u.iter_mut().zip(p.iter()) {
                *uv = pv - cfg.tau * *uv;
            }

            // Primal prox, then over-relaxation into x.
            for l in 0..padded_len {
                let proj = bounds.project(l, u[l]);
                let p_new = match cfg.variant {
                    Variant::Consistent => proj,
                    Variant::Inconsistent => (cfg.tau * proj + u[l]) / (cfg.tau + 1.0),
                };
                x[l] = p_new + cfg.rho * (p_new - p[l]);
                p[l] = p_new;
            }

            if let Some(bad) = p.iter().position(|v| !v.is_finite()) {
                log::error!("non-finite primal sample {bad} at iteration {}", i + 1);
                return Err(Error::NonFiniteIterate { iter: i + 1 });
            }

            let last = i + 1 == cfg.max_iters;
            if (i + 1) % cfg.record_every == 0 || last {
                op.forward_into(&p, &mut kx)?;
                let mut objective = cfg.lambda * kx.l1_norm();
                if cfg.variant == Variant::Inconsistent {
                    objective += 0.5 * bounds.sq_dist(&p);
                }
                let feas = feasibility_violation(&p[..orig_len], inputs.feasible)?;
                let sdr = match inputs.reference {
                    Some(r) => Some(sdr_samples(&r.samples, &p[..orig_len])?),
                    None => None,
                };
                trace.rows.push(TraceRow {
                    iter: i + 1,
                    objective,
                    feasibility: feas,
                    sdr,
                    seconds: start.elapsed().as_secs_f64(),
                });
            }
        }

        p.truncate(orig_len);
        let restored = Signal {
            samples: p,
            sample_rate: inputs.yq.sample_rate,
        };
        Ok((restored, trace))
    }
}
