//! Batch experiment protocol: quantize inputs at a range of word lengths,
//! restore with each requested method, and aggregate SDR results.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::{best_iterate, sdr, EvalResult};
use crate::quant::{quantize_midriser, FeasibleSet, QuantSpec};
use crate::signal::Signal;
use crate::solver::{
    lambda_for_wordlength, IfSource, PhadqContext, SolverConfig, SolverTrace, Variant,
};
use crate::wav::{load_wav, save_wav, BitDepth};

/// Restoration methods the runner can dispatch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Method {
    BphadqConsistent,
    BphadqInconsistent,
    Uphadq,
    Oracle,
    CpBaseline,
}

impl Method {
    pub const ALL: [Method; 5] = [
        Method::BphadqConsistent,
        Method::BphadqInconsistent,
        Method::Uphadq,
        Method::Oracle,
        Method::CpBaseline,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Method::BphadqConsistent => "bphadq_consistent",
            Method::BphadqInconsistent => "bphadq_inconsistent",
            Method::Uphadq => "uphadq",
            Method::Oracle => "oracle",
            Method::CpBaseline => "cp_baseline",
        }
    }

    pub fn needs_reference(&self) -> bool {
        matches!(self, Method::Oracle)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "bphadq_consistent" => Ok(Method::BphadqConsistent),
            "bphadq_inconsistent" => Ok(Method::BphadqInconsistent),
            "uphadq" => Ok(Method::Uphadq),
            "oracle" => Ok(Method::Oracle),
            "cp_baseline" => Ok(Method::CpBaseline),
            other => Err(Error::Config(format!(
                "unknown method {other:?} (expected bphadq_consistent, bphadq_inconsistent, \
                 uphadq, oracle, or cp_baseline)"
            ))),
        }
    }
}

/// Transform size preset.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    /// 8192-sample window, hop 2048, 16384 channels, 7-second excerpts.
    Standard,
    /// 512-sample window, hop 128, 1024 channels, 1-second excerpts;
    /// records every iteration.
    Desk,
}

impl std::str::FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "standard" | "full" => Ok(Preset::Standard),
            "desk" => Ok(Preset::Desk),
            other => Err(Error::Config(format!(
                "unknown preset {other:?} (expected standard or desk)"
            ))),
        }
    }
}

impl Preset {
    pub fn gabor(&self) -> (usize, usize, usize) {
        match self {
            Preset::Standard => (8192, 2048, 16384),
            Preset::Desk => (512, 128, 1024),
        }
    }

    pub fn seconds(&self) -> f64 {
        match self {
            Preset::Standard => 7.0,
            Preset::Desk => 1.0,
        }
    }

    pub fn record_every(&self) -> usize {
        match self {
            Preset::Standard => 10,
            Preset::Desk => 1,
        }
    }
}

/// Full description of a sweep: inputs, grid axes, transform and solver knobs.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub inputs: Vec<PathBuf>,
    pub wordlengths: Vec<u8>,
    pub methods: Vec<Method>,
    pub win_len: usize,
    pub hop: usize,
    pub channels: usize,
    /// Excerpt length in seconds.
    pub seconds: f64,
    /// Iteration budget for the phase-aware methods.
    pub iters: usize,
    /// Iteration budget for the sparsity baseline.
    pub cp_iters: usize,
    pub k_update: usize,
    pub record_every: usize,
    pub tau: f64,
    pub sigma: f64,
    pub rho: f64,
    /// Overrides the per-wordlength schedule when set.
    pub lambda: Option<f64>,
    pub out_dir: PathBuf,
    /// Reserved for randomized diagnostics; echoed into outputs.
    pub seed: u64,
}

impl ExperimentConfig {
    pub fn with_preset(preset: Preset) -> Self {
        let (win_len, hop, channels) = preset.gabor();
        ExperimentConfig {
            inputs: Vec::new(),
            wordlengths: (2..=8).collect(),
            methods: Method::ALL.to_vec(),
            win_len,
            hop,
            channels,
            seconds: preset.seconds(),
            iters: 200,
            cp_iters: 500,
            k_update: 10,
            record_every: preset.record_every(),
            tau: 1.0,
            sigma: 1.0,
            rho: 1.0 / 3.0,
            lambda: None,
            out_dir: PathBuf::from("."),
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.inputs.is_empty() {
            return Err(Error::Config("at least one input file is required".into()));
        }
        if self.wordlengths.is_empty() {
            return Err(Error::Config("at least one wordlength is required".into()));
        }
        if self.methods.is_empty() {
            return Err(Error::Config("at least one method is required".into()));
        }
        Ok(())
    }

    /// Apply `key = value` pairs from a flat config file. CLI flags are
    /// expected to be applied after this, so they win.
    pub fn apply_file(&mut self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(Error::Config(format!(
                    "{}:{}: expected `key = value`, got {raw:?}",
                    path.display(),
                    lineno + 1
                )));
            };
            self.apply_key(key.trim(), value.trim()).map_err(|e| {
                Error::Config(format!("{}:{}: {e}", path.display(), lineno + 1))
            })?;
        }
        Ok(())
    }

    pub fn apply_key(&mut self, key: &str, value: &str) -> Result<()> {
        fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T>
        where
            T::Err: fmt::Display,
        {
            value
                .parse()
                .map_err(|e| Error::Config(format!("bad value for {key}: {e}")))
        }

        match key {
            "input" => self.inputs.push(PathBuf::from(value)),
            "wordlengths" => {
                self.wordlengths = value
                    .split(',')
                    .map(|v| parse::<u8>("wordlengths", v.trim()))
                    .collect::<Result<_>>()?;
            }
            "methods" => {
                self.methods = value
                    .split(',')
                    .map(|v| v.trim().parse())
                    .collect::<Result<_>>()?;
            }
            "preset" => {
                let preset: Preset = value.parse()?;
                let (w, h, c) = preset.gabor();
                self.win_len = w;
                self.hop = h;
                self.channels = c;
                self.seconds = preset.seconds();
                self.record_every = preset.record_every();
            }
            "win_len" => self.win_len = parse(key, value)?,
            "hop" => self.hop = parse(key, value)?,
            "channels" => self.channels = parse(key, value)?,
            "seconds" => self.seconds = parse(key, value)?,
            "iters" => self.iters = parse(key, value)?,
            "cp_iters" => self.cp_iters = parse(key, value)?,
            "k_update" => self.k_update = parse(key, value)?,
            "record_every" => self.record_every = parse(key, value)?,
            "tau" => self.tau = parse(key, value)?,
            "sigma" => self.sigma = parse(key, value)?,
            "rho" => self.rho = parse(key, value)?,
            "lambda" => self.lambda = Some(parse(key, value)?),
            "out_dir" => self.out_dir = PathBuf::from(value),
            "seed" => self.seed = parse(key, value)?,
            other => {
                return Err(Error::Config(format!("unknown config key {other:?}")));
            }
        }
        Ok(())
    }

    fn solver_config(&self, method: Method, wordlength: u8) -> SolverConfig {
        SolverConfig {
            tau: self.tau,
            sigma: self.sigma,
            rho: self.rho,
            lambda: self.lambda.unwrap_or_else(|| lambda_for_wordlength(wordlength)),
            max_iters: if method == Method::CpBaseline {
                self.cp_iters
            } else {
                self.iters
            },
            variant: match method {
                Method::BphadqInconsistent => Variant::Inconsistent,
                _ => Variant::Consistent,
            },
            if_source: match method {
                Method::Uphadq => IfSource::UpdateEveryK,
                Method::Oracle => IfSource::Oracle,
                _ => IfSource::Degraded,
            },
            k_update: self.k_update,
            record_every: self.record_every,
        }
    }
}

/// Sidecar metadata written next to a quantized file.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct QuantizeSidecar {
    pub wordlength: u8,
    pub delta: f64,
    pub gain: f64,
}

/// Quantize one file: load, first channel, peak-normalize, mid-riser
/// quantize, write the WAV plus a JSON sidecar.
pub fn cmd_quantize(
    input: impl AsRef<Path>,
    wordlength: u8,
    output: impl AsRef<Path>,
) -> Result<QuantizeSidecar> {
    let output = output.as_ref();
    let spec = QuantSpec::new(wordlength)?;
    let signal = load_wav(input)?;
    let (normalized, gain) = signal.peak_normalize();
    let quantized = quantize_midriser(&normalized, spec);
    save_wav(&quantized, output, BitDepth::Float64)?;

    let sidecar = QuantizeSidecar {
        wordlength,
        delta: spec.delta(),
        gain,
    };
    let sidecar_path = sidecar_path_for(output);
    let json = serde_json::to_string_pretty(&sidecar)
        .map_err(|e| Error::Config(format!("sidecar encode: {e}")))?;
    fs::write(&sidecar_path, json).map_err(|e| Error::io(&sidecar_path, e))?;
    Ok(sidecar)
}

pub fn sidecar_path_for(wav_path: &Path) -> PathBuf {
    wav_path.with_extension("json")
}

pub fn read_sidecar(path: impl AsRef<Path>) -> Result<QuantizeSidecar> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Config(format!("sidecar decode: {e}")))
}

/// Options for restoring a single quantized file.
#[derive(Debug, Clone)]
pub struct RestoreRequest {
    pub input: PathBuf,
    pub method: Method,
    pub wordlength: u8,
    pub reference: Option<PathBuf>,
    pub out_dir: PathBuf,
    pub config: ExperimentConfig,
}

/// Outcome of a restore: paths written and the trace-derived summary.
#[derive(Debug, Clone, Serialize)]
pub struct RestoreReport {
    pub method: String,
    pub wordlength: u8,
    pub lambda: f64,
    pub iters_run: usize,
    pub restored_wav: PathBuf,
    pub trace_csv: PathBuf,
    /// SDR summary; present when a reference was supplied.
    pub eval: Option<EvalResult>,
    pub seconds: f64,
}

/// Restore a quantized WAV and write the restored audio, a per-iteration
/// trace CSV, and a result JSON.
pub fn cmd_restore(req: &RestoreRequest) -> Result<RestoreReport> {
    let method = req.method;
    let yq = load_wav(&req.input)?;
    let reference = match &req.reference {
        Some(p) => {
            let mut r = load_wav(p)?;
            if r.len() < yq.len() {
                return Err(Error::DimensionMismatch(format!(
                    "reference length {} shorter than quantized length {}",
                    r.len(),
                    yq.len()
                )));
            }
            r.samples.truncate(yq.len());
            let (r, _) = r.peak_normalize();
            Some(r)
        }
        None => None,
    };
    if method.needs_reference() && reference.is_none() {
        return Err(Error::Config(format!(
            "method {method} requires --reference (clean signal)"
        )));
    }

    let spec = QuantSpec::new(req.wordlength)?;
    let feasible = FeasibleSet::from_quantized(&yq, spec)?;
    let params = crate::gabor::GaborParams::new(
        req.config.win_len,
        req.config.hop,
        req.config.channels,
        yq.len(),
    )?;
    let ctx = PhadqContext::new(params)?;
    let cfg = req.config.solver_config(method, req.wordlength);

    let started = std::time::Instant::now();
    let (restored, trace) = run_method(&ctx, method, &yq, &feasible, &cfg, reference.as_ref())?;
    let seconds = started.elapsed().as_secs_f64();

    let stem = req
        .input
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "restored".into());
    fs::create_dir_all(&req.out_dir).map_err(|e| Error::io(&req.out_dir, e))?;
    let restored_wav = req.out_dir.join(format!("{stem}_{method}.wav"));
    let trace_csv = req.out_dir.join(format!("{stem}_{method}_trace.csv"));
    save_wav(&restored, &restored_wav, BitDepth::Float64)?;
    trace.write_csv(&trace_csv, &trace_meta(method, req.wordlength, &cfg))?;

    let eval = match &reference {
        Some(r) => {
            let s_in = sdr(r, &yq)?;
            let s_out = sdr(r, &restored)?;
            let (bi, _) = best_iterate(&trace)?;
            Some(EvalResult::new(
                method.name(),
                req.wordlength,
                s_out,
                s_in,
                bi,
            ))
        }
        None => None,
    };

    let report = RestoreReport {
        method: method.name().into(),
        wordlength: req.wordlength,
        lambda: cfg.lambda,
        iters_run: cfg.max_iters,
        restored_wav,
        trace_csv,
        eval,
        seconds,
    };
    let report_path = req.out_dir.join(format!("{stem}_{method}_result.json"));
    let json = serde_json::to_string_pretty(&report)
        .map_err(|e| Error::Config(format!("report encode: {e}")))?;
    fs::write(&report_path, json).map_err(|e| Error::io(&report_path, e))?;
    Ok(report)
}

fn trace_meta(method: Method, wordlength: u8, cfg: &SolverConfig) -> Vec<(&'static str, String)> {
    vec![
        ("method", method.name().into()),
        ("wordlength", wordlength.to_string()),
        ("lambda", format!("{}", cfg.lambda)),
        ("tau", format!("{}", cfg.tau)),
        ("sigma", format!("{}", cfg.sigma)),
        ("rho", format!("{}", cfg.rho)),
        ("iters", cfg.max_iters.to_string()),
        ("k_update", cfg.k_update.to_string()),
        ("record_every", cfg.record_every.to_string()),
    ]
}

fn run_method(
    ctx: &PhadqContext,
    method: Method,
    yq: &Signal,
    feasible: &FeasibleSet,
    cfg: &SolverConfig,
    reference: Option<&Signal>,
) -> Result<(Signal, SolverTrace)> {
    match method {
        Method::BphadqConsistent | Method::BphadqInconsistent => {
            let omega = ctx.estimate_omega(yq)?;
            ctx.bphadq_run(yq, feasible, cfg, &omega, reference)
        }
        Method::Oracle => {
            let clean = reference.ok_or_else(|| {
                Error::Config("oracle method requires the clean reference".into())
            })?;
            let omega = ctx.oracle_omega(clean)?;
            ctx.bphadq_run(yq, feasible, cfg, &omega, reference)
        }
        Method::Uphadq => ctx.uphadq_run(yq, feasible, cfg, reference),
        Method::CpBaseline => ctx.cp_sparse_baseline(yq, feasible, cfg, reference),
    }
}

/// One grid cell result. `sdr_out` and `best_iter` follow the evaluation
/// protocol of reporting the best recorded iterate.
#[derive(Debug, Clone)]
pub struct ResultRow {
    pub file: String,
    pub method: Method,
    pub wordlength: u8,
    pub sdr_in: f64,
    pub sdr_out: f64,
    pub delta: f64,
    pub best_iter: usize,
    pub iters_run: usize,
    pub seconds: f64,
}

/// A failed grid cell, kept out of the averages.
#[derive(Debug, Clone)]
pub struct FailureRow {
    pub file: String,
    pub method: Method,
    pub wordlength: u8,
    pub error: String,
}

#[derive(Debug, Default)]
pub struct ResultsTable {
    pub rows: Vec<ResultRow>,
    pub failures: Vec<FailureRow>,
}

/// Run the full `files x wordlengths x methods` grid.
///
/// Cells run in a worker pool; rows are sorted before writing so the output
/// is independent of scheduling. Writes `results.csv`, `averages.csv`, and
/// `failures.csv` (if any) under `config.out_dir`.
pub fn cmd_sweep(config: &ExperimentConfig) -> Result<ResultsTable> {
    config.validate()?;
    fs::create_dir_all(&config.out_dir).map_err(|e| Error::io(&config.out_dir, e))?;

    let mut cells: Vec<(PathBuf, u8, Method)> = Vec::new();
    for input in &config.inputs {
        for &w in &config.wordlengths {
            for &m in &config.methods {
                cells.push((input.clone(), w, m));
            }
        }
    }

    let outcomes: Vec<std::result::Result<ResultRow, FailureRow>> = cells
        .par_iter()
        .map(|(input, w, m)| run_cell(config, input, *w, *m))
        .collect();

    let mut table = ResultsTable::default();
    for outcome in outcomes {
        match outcome {
            Ok(row) => table.rows.push(row),
            Err(fail) => table.failures.push(fail),
        }
    }
    table
        .rows
        .sort_by(|a, b| (&a.file, a.method, a.wordlength).cmp(&(&b.file, b.method, b.wordlength)));
    table.failures.sort_by(|a, b| {
        (&a.file, a.method, a.wordlength).cmp(&(&b.file, b.method, b.wordlength))
    });

    write_results_csv(&table, &config.out_dir.join("results.csv"))?;
    write_averages_csv(&table, &config.out_dir.join("averages.csv"))?;
    if !table.failures.is_empty() {
        write_failures_csv(&table, &config.out_dir.join("failures.csv"))?;
    }
    write_config_echo(config, &config.out_dir.join("config_echo.conf"))?;
    Ok(table)
}

/// Serialize the effective configuration in the flat key=value format, so a
/// sweep can be reproduced from its own output directory.
fn write_config_echo(config: &ExperimentConfig, path: &Path) -> Result<()> {
    let mut out = String::new();
    for input in &config.inputs {
        out.push_str(&format!("input = {}\n", input.display()));
    }
    let wl: Vec<String> = config.wordlengths.iter().map(|w| w.to_string()).collect();
    out.push_str(&format!("wordlengths = {}\n", wl.join(",")));
    let ms: Vec<&str> = config.methods.iter().map(|m| m.name()).collect();
    out.push_str(&format!("methods = {}\n", ms.join(",")));
    out.push_str(&format!("win_len = {}\n", config.win_len));
    out.push_str(&format!("hop = {}\n", config.hop));
    out.push_str(&format!("channels = {}\n", config.channels));
    out.push_str(&format!("seconds = {}\n", config.seconds));
    out.push_str(&format!("iters = {}\n", config.iters));
    out.push_str(&format!("cp_iters = {}\n", config.cp_iters));
    out.push_str(&format!("k_update = {}\n", config.k_update));
    out.push_str(&format!("record_every = {}\n", config.record_every));
    out.push_str(&format!("tau = {}\n", config.tau));
    out.push_str(&format!("sigma = {}\n", config.sigma));
    out.push_str(&format!("rho = {}\n", config.rho));
    if let Some(lambda) = config.lambda {
        out.push_str(&format!("lambda = {lambda}\n"));
    }
    out.push_str(&format!("seed = {}\n", config.seed));
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

fn run_cell(
    config: &ExperimentConfig,
    input: &Path,
    wordlength: u8,
    method: Method,
) -> std::result::Result<ResultRow, FailureRow> {
    let file = input
        .file_name()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| input.display().to_string());
    let fail = |e: Error| FailureRow {
        file: file.clone(),
        method,
        wordlength,
        error: e.to_string(),
    };

    let started = std::time::Instant::now();
    let spec = QuantSpec::new(wordlength).map_err(&fail)?;
    let loaded = load_wav(input).map_err(&fail)?;
    let excerpt = loaded.truncate(config.seconds).map_err(&fail)?;
    let (clean, _) = excerpt.peak_normalize();
    let yq = quantize_midriser(&clean, spec);
    let feasible = FeasibleSet::from_quantized(&yq, spec).map_err(&fail)?;

    let params =
        crate::gabor::GaborParams::new(config.win_len, config.hop, config.channels, yq.len())
            .map_err(&fail)?;
    let ctx = PhadqContext::new(params).map_err(&fail)?;
    let cfg = config.solver_config(method, wordlength);

    let (_, trace) = run_method(&ctx, method, &yq, &feasible, &cfg, Some(&clean)).map_err(&fail)?;

    let sdr_in = sdr(&clean, &yq).map_err(&fail)?;
    let (best_iter, best_sdr) = best_iterate(&trace).map_err(&fail)?;
    Ok(ResultRow {
        file,
        method,
        wordlength,
        sdr_in,
        sdr_out: best_sdr,
        delta: best_sdr - sdr_in,
        best_iter,
        iters_run: cfg.max_iters,
        seconds: started.elapsed().as_secs_f64(),
    })
}

fn write_results_csv(table: &ResultsTable, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::Config(e.to_string()))?;
    w.write_record([
        "file",
        "method",
        "wordlength",
        "sdr_in",
        "sdr_out",
        "delta",
        "best_iter",
        "iters_run",
        "seconds",
    ])
    .map_err(|e| Error::Config(e.to_string()))?;
    for r in &table.rows {
        w.write_record([
            r.file.clone(),
            r.method.name().into(),
            r.wordlength.to_string(),
            format!("{:.6}", r.sdr_in),
            format!("{:.6}", r.sdr_out),
            format!("{:.6}", r.delta),
            r.best_iter.to_string(),
            r.iters_run.to_string(),
            format!("{:.3}", r.seconds),
        ])
        .map_err(|e| Error::Config(e.to_string()))?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

fn write_averages_csv(table: &ResultsTable, path: &Path) -> Result<()> {
    let mut groups: BTreeMap<(Method, u8), Vec<&ResultRow>> = BTreeMap::new();
    for r in &table.rows {
        groups.entry((r.method, r.wordlength)).or_default().push(r);
    }
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::Config(e.to_string()))?;
    w.write_record([
        "method",
        "wordlength",
        "files",
        "avg_sdr_in",
        "avg_sdr_out",
        "avg_delta",
        "avg_best_iter",
    ])
    .map_err(|e| Error::Config(e.to_string()))?;
    for ((method, wordlength), rows) in groups {
        let n = rows.len() as f64;
        let mean = |f: fn(&ResultRow) -> f64| rows.iter().map(|r| f(r)).sum::<f64>() / n;
        w.write_record([
            method.name().into(),
            wordlength.to_string(),
            rows.len().to_string(),
            format!("{:.6}", mean(|r| r.sdr_in)),
            format!("{:.6}", mean(|r| r.sdr_out)),
            format!("{:.6}", mean(|r| r.delta)),
            format!("{:.2}", mean(|r| r.best_iter as f64)),
        ])
        .map_err(|e| Error::Config(e.to_string()))?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

fn write_failures_csv(table: &ResultsTable, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::Config(e.to_string()))?;
    w.write_record(["file", "method", "wordlength", "error"])
        .map_err(|e| Error::Config(e.to_string()))?;
    for r in &table.failures {
        w.write_record([
            r.file.clone(),
            r.method.name().into(),
            r.wordlength.to_string(),
            r.error.clone(),
        ])
        .map_err(|e| Error::Config(e.to_string()))?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

/// Merge per-method trace CSVs into one wide table of SDR against iteration,
/// ready for external plotting. Column order follows the input order; rows
/// are the union of recorded iterations.
pub fn cmd_trace_plotdata(traces: &[PathBuf], output: impl AsRef<Path>) -> Result<()> {
    if traces.is_empty() {
        return Err(Error::Config("no trace files given".into()));
    }
    let mut methods: Vec<String> = Vec::new();
    let mut columns: Vec<BTreeMap<usize, f64>> = Vec::new();
    for path in traces {
        let (method, rows) = read_trace_sdr(path)?;
        methods.push(method);
        columns.push(rows);
    }

    let mut iters: Vec<usize> = columns
        .iter()
        .flat_map(|c| c.keys().copied())
        .collect();
    iters.sort_unstable();
    iters.dedup();

    let output = output.as_ref();
    let mut f = std::io::BufWriter::new(
        fs::File::create(output).map_err(|e| Error::io(output, e))?,
    );
    writeln!(f, "iteration,{}", methods.join(",")).map_err(|e| Error::io(output, e))?;
    for it in iters {
        let cells: Vec<String> = columns
            .iter()
            .map(|c| c.get(&it).map(|s| format!("{s:.6}")).unwrap_or_default())
            .collect();
        writeln!(f, "{it},{}", cells.join(",")).map_err(|e| Error::io(output, e))?;
    }
    Ok(())
}

fn read_trace_sdr(path: &Path) -> Result<(String, BTreeMap<usize, f64>)> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut method = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "trace".into());
    let mut rows = BTreeMap::new();
    let mut header_seen = false;
    for line in text.lines() {
        if let Some(meta) = line.strip_prefix('#') {
            if let Some((k, v)) = meta.trim().split_once('=') {
                if k.trim() == "method" {
                    method = v.trim().to_string();
                }
            }
            continue;
        }
        if !header_seen {
            // Column header row.
            header_seen = true;
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() < 4 || fields[3].is_empty() {
            continue;
        }
        let iter: usize = fields[0]
            .parse()
            .map_err(|e| Error::Config(format!("{}: bad iter field: {e}", path.display())))?;
        let sdr: f64 = fields[3]
            .parse()
            .map_err(|e| Error::Config(format!("{}: bad sdr field: {e}", path.display())))?;
        rows.insert(iter, sdr);
    }
    if rows.is_empty() {
        return Err(Error::Config(format!(
            "{}: trace has no SDR entries",
            path.display()
        )));
    }
    Ok((method, rows))
}

#[cfg(test)]
mod tests {
    use super::*;
    use tempfile::tempdir;

    fn write_test_wav(dir: &Path, name: &str, len: usize, rate: u32) -> PathBuf {
        let samples: Vec<f64> = (0..len)
            .map(|l| {
                let t = l as f64;
                0.7 * (2.0 * std::f64::consts::PI * 24.0 * t / 1024.0).sin()
                    + 0.25 * (2.0 * std::f64::consts::PI * 50.0 * t / 1024.0).sin()
            })
            .collect();
        let s = Signal {
            samples,
            sample_rate: rate,
        };
        let path = dir.join(name);
        save_wav(&s, &path, BitDepth::Float64).unwrap();
        path
    }

    fn tiny_config(dir: &Path, input: PathBuf) -> ExperimentConfig {
        let mut cfg = ExperimentConfig::with_preset(Preset::Desk);
        cfg.inputs = vec![input];
        cfg.win_len = 64;
        cfg.hop = 16;
        cfg.channels = 128;
        cfg.seconds = 0.25;
        cfg.iters = 15;
        cfg.cp_iters = 20;
        cfg.out_dir = dir.to_path_buf();
        cfg
    }

    #[test]
    fn quantize_writes_levels_and_sidecar() {
        let dir = tempdir().unwrap();
        let input = write_test_wav(dir.path(), "in.wav", 2048, 8000);
        let out = dir.path().join("q.wav");
        let sidecar = cmd_quantize(&input, 4, &out).unwrap();
        assert_eq!(sidecar.wordlength, 4);
        assert_eq!(sidecar.delta, 0.125);

        let q = load_wav(&out).unwrap();
        let half = sidecar.delta / 2.0;
        for v in &q.samples {
            let k = v / half;
            assert!((k - k.round()).abs() < 1e-9, "{v} not on a level");
            assert_eq!((k.round() as i64).rem_euclid(2), 1);
        }
        let reread = read_sidecar(sidecar_path_for(&out)).unwrap();
        assert_eq!(reread.wordlength, 4);
    }

    #[test]
    fn quantize_missing_input_errors() {
        let dir = tempdir().unwrap();
        let out = dir.path().join("q.wav");
        assert!(cmd_quantize(dir.path().join("missing.wav"), 4, &out).is_err());
    }

    #[test]
    fn sweep_grid_size_and_averages() {
        let dir = tempdir().unwrap();
        let input = write_test_wav(dir.path(), "in.wav", 2048, 8000);
        let mut cfg = tiny_config(dir.path(), input);
        cfg.wordlengths = vec![3, 4];
        cfg.methods = vec![Method::BphadqConsistent, Method::CpBaseline];
        let table = cmd_sweep(&cfg).unwrap();
        assert_eq!(table.rows.len(), 4);
        assert!(table.failures.is_empty());

        let averages = fs::read_to_string(dir.path().join("averages.csv")).unwrap();
        // One file per group: averages equal the row values.
        let results = fs::read_to_string(dir.path().join("results.csv")).unwrap();
        assert_eq!(results.lines().count(), 5);
        assert_eq!(averages.lines().count(), 5);
        for row in &table.rows {
            let needle = format!("{:.6}", row.sdr_out);
            assert!(averages.contains(&needle), "avg missing {needle}");
        }
    }

    #[test]
    fn sweep_is_deterministic_modulo_seconds() {
        let dir = tempdir().unwrap();
        let input = write_test_wav(dir.path(), "in.wav", 2048, 8000);

        let run = |out: &Path| {
            let mut cfg = tiny_config(out, input.clone());
            cfg.wordlengths = vec![4];
            cfg.methods = vec![Method::BphadqConsistent, Method::Oracle];
            cfg.out_dir = out.to_path_buf();
            cmd_sweep(&cfg).unwrap();
            fs::read_to_string(out.join("results.csv")).unwrap()
        };
        let a_dir = dir.path().join("a");
        let b_dir = dir.path().join("b");
        fs::create_dir_all(&a_dir).unwrap();
        fs::create_dir_all(&b_dir).unwrap();
        let a = run(&a_dir);
        let b = run(&b_dir);
        assert_eq!(strip_seconds(&a), strip_seconds(&b));
    }

    fn strip_seconds(csv_text: &str) -> String {
        csv_text
            .lines()
            .map(|l| l.rsplit_once(',').map(|(head, _)| head).unwrap_or(l))
            .collect::<Vec<_>>()
            .join("\n")
    }

    #[test]
    fn restore_oracle_without_reference_errors() {
        let dir = tempdir().unwrap();
        let input = write_test_wav(dir.path(), "in.wav", 2048, 8000);
        let qpath = dir.path().join("q.wav");
        cmd_quantize(&input, 4, &qpath).unwrap();
        let config = tiny_config(dir.path(), input);
        let req = RestoreRequest {
            input: qpath,
            method: Method::Oracle,
            wordlength: 4,
            reference: None,
            out_dir: dir.path().to_path_buf(),
            config,
        };
        let err = cmd_restore(&req).unwrap_err();
        assert!(err.to_string().contains("reference"));
    }

    #[test]
    fn restore_writes_outputs_and_echoes_lambda() {
        let dir = tempdir().unwrap();
        let input = write_test_wav(dir.path(), "in.wav", 2048, 8000);
        let qpath = dir.path().join("q.wav");
        cmd_quantize(&input, 4, &qpath).unwrap();

        let mut config = tiny_config(dir.path(), input.clone());
        config.lambda = Some(0.0042);
        let req = RestoreRequest {
            input: qpath,
            method: Method::BphadqConsistent,
            wordlength: 4,
            reference: Some(input),
            out_dir: dir.path().join("out"),
            config,
        };
        let report = cmd_restore(&req).unwrap();
        assert!(report.restored_wav.exists());
        assert!(report.trace_csv.exists());
        let eval = report.eval.expect("reference given, eval expected");
        assert_eq!(eval.delta_db, eval.sdr_db - eval.sdr_input_db);

        let trace_text = fs::read_to_string(&report.trace_csv).unwrap();
        assert!(trace_text.contains("# lambda=0.0042"));
        assert!(trace_text.contains("# method=bphadq_consistent"));

        // Restored signal is feasible for its box.
        let restored = load_wav(&report.restored_wav).unwrap();
        let yq = load_wav(&req.input).unwrap();
        let f = FeasibleSet::from_quantized(&yq, QuantSpec::new(4).unwrap()).unwrap();
        assert!(crate::quant::feasibility_violation(&restored.samples, &f).unwrap() <= 1e-12);
    }

    #[test]
    fn trace_plotdata_merges_methods() {
        let dir = tempdir().unwrap();
        let input = write_test_wav(dir.path(), "in.wav", 2048, 8000);
        let qpath = dir.path().join("q.wav");
        cmd_quantize(&input, 4, &qpath).unwrap();

        let mut traces = Vec::new();
        for method in [Method::BphadqConsistent, Method::BphadqInconsistent, Method::CpBaseline] {
            let config = tiny_config(dir.path(), input.clone());
            let req = RestoreRequest {
                input: qpath.clone(),
                method,
                wordlength: 4,
                reference: Some(input.clone()),
                out_dir: dir.path().join("out"),
                config,
            };
            let report = cmd_restore(&req).unwrap();
            traces.push(report.trace_csv);
        }
        let merged = dir.path().join("plot.csv");
        cmd_trace_plotdata(&traces, &merged).unwrap();
        let text = fs::read_to_string(&merged).unwrap();
        let mut lines = text.lines();
        let header = lines.next().unwrap();
        assert_eq!(
            header,
            "iteration,bphadq_consistent,bphadq_inconsistent,cp_baseline"
        );
        // Row count = recorded iterations (cp ran longer).
        assert_eq!(lines.count(), 20);
    }

    #[test]
    fn config_file_roundtrip_and_unknown_key() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("run.conf");
        fs::write(
            &path,
            "# comment\nwordlengths = 4,6\nmethods = oracle, cp_baseline\nlambda = 1e-3\nseconds = 0.5\n",
        )
        .unwrap();
        let mut cfg = ExperimentConfig::with_preset(Preset::Desk);
        cfg.apply_file(&path).unwrap();
        assert_eq!(cfg.wordlengths, vec![4, 6]);
        assert_eq!(cfg.methods, vec![Method::Oracle, Method::CpBaseline]);
        assert_eq!(cfg.lambda, Some(1e-3));
        assert_eq!(cfg.seconds, 0.5);

        fs::write(&path, "nope = 1\n").unwrap();
        assert!(cfg.apply_file(&path).is_err());
    }

    #[test]
    fn method_parsing() {
        assert_eq!(
            "bphadq_consistent".parse::<Method>().unwrap(),
            Method::BphadqConsistent
        );
        assert!("what".parse::<Method>().is_err());
    }

    #[test]
    fn sweep_records_partial_failures() {
        let dir = tempdir().unwrap();
        let input = write_test_wav(dir.path(), "in.wav", 2048, 8000);
        let mut cfg = tiny_config(dir.path(), input);
        cfg.inputs.push(dir.path().join("missing.wav"));
        cfg.wordlengths = vec![4];
        cfg.methods = vec![Method::BphadqConsistent];
        let table = cmd_sweep(&cfg).unwrap();
        assert_eq!(table.rows.len(), 1);
        assert_eq!(table.failures.len(), 1);
        assert!(dir.path().join("failures.csv").exists());
    }
}
