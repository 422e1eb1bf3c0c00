//! Command-line front end for the dequantization pipeline.
//!
//! Subcommands mirror the batch protocol: `quantize` degrades a file,
//! `restore` runs one solver on a quantized file, `sweep` runs the full
//! `files x wordlengths x methods` grid, and `trace-plotdata` merges
//! per-iteration traces for plotting.

use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use phadq::experiment::{
    cmd_quantize, cmd_restore, cmd_sweep, cmd_trace_plotdata, read_sidecar, sidecar_path_for,
    ExperimentConfig, Method, Preset, RestoreRequest,
};

#[derive(Parser)]
#[command(name = "phadq", version, about = "Phase-aware audio dequantization toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Transform, excerpt, and solver overrides shared by restore and sweep.
/// Precedence: preset defaults, then --config file, then explicit flags.
#[derive(Args, Debug)]
struct Overrides {
    /// Transform preset: standard (8192/2048/16384, 7 s) or desk (512/128/1024, 1 s)
    #[arg(long)]
    preset: Option<String>,
    /// Flat key=value config file applied before the flags
    #[arg(long)]
    config: Option<PathBuf>,
    /// Penalty weight; overrides the per-wordlength schedule
    #[arg(long)]
    lambda: Option<f64>,
    /// Primal step size
    #[arg(long)]
    tau: Option<f64>,
    /// Dual step size
    #[arg(long)]
    sigma: Option<f64>,
    /// Over-relaxation factor in [0, 1]
    #[arg(long)]
    rho: Option<f64>,
    /// Iteration budget for the phase-aware methods
    #[arg(long)]
    iters: Option<usize>,
    /// Iteration budget for the sparsity baseline
    #[arg(long)]
    cp_iters: Option<usize>,
    /// Iterations between instantaneous-frequency refreshes (uphadq)
    #[arg(long)]
    k_update: Option<usize>,
    /// Record a trace row every this many iterations
    #[arg(long)]
    record_every: Option<usize>,
    /// Excerpt length in seconds (sweep only)
    #[arg(long)]
    seconds: Option<f64>,
    /// Analysis window length in samples
    #[arg(long)]
    win_len: Option<usize>,
    /// Hop size in samples
    #[arg(long)]
    hop: Option<usize>,
    /// Number of frequency channels
    #[arg(long)]
    channels: Option<usize>,
    /// Seed echoed into outputs (reserved for randomized diagnostics)
    #[arg(long)]
    seed: Option<u64>,
}

impl Overrides {
    fn build(&self, default_preset: Preset) -> Result<ExperimentConfig> {
        let preset = match &self.preset {
            Some(s) => s.parse()?,
            None => default_preset,
        };
        let mut cfg = ExperimentConfig::with_preset(preset);
        if let Some(path) = &self.config {
            cfg.apply_file(path)
                .with_context(|| format!("reading config {}", path.display()))?;
            if let Some(s) = &self.preset {
                // Flags win over the config file.
                cfg.apply_key("preset", s)?;
            }
        }
        if let Some(v) = self.lambda {
            cfg.lambda = Some(v);
        }
        if let Some(v) = self.tau {
            cfg.tau = v;
        }
        if let Some(v) = self.sigma {
            cfg.sigma = v;
        }
        if let Some(v) = self.rho {
            cfg.rho = v;
        }
        if let Some(v) = self.iters {
            cfg.iters = v;
        }
        if let Some(v) = self.cp_iters {
            cfg.cp_iters = v;
        }
        if let Some(v) = self.k_update {
            cfg.k_update = v;
        }
        if let Some(v) = self.record_every {
            cfg.record_every = v;
        }
        if let Some(v) = self.seconds {
            cfg.seconds = v;
        }
        if let Some(v) = self.win_len {
            cfg.win_len = v;
        }
        if let Some(v) = self.hop {
            cfg.hop = v;
        }
        if let Some(v) = self.channels {
            cfg.channels = v;
        }
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
        Ok(cfg)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Peak-normalize and mid-riser quantize a WAV file
    Quantize {
        /// Input WAV (first channel is used)
        input: PathBuf,
        /// Bits per sample, 2..=16
        #[arg(short, long)]
        wordlength: u8,
        /// Output WAV path (default: <out-dir>/<stem>_w<wordlength>.wav)
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value = ".")]
        out_dir: PathBuf,
    },
    /// Restore a quantized WAV with one method
    Restore {
        /// Quantized input WAV
        input: PathBuf,
        /// bphadq_consistent | bphadq_inconsistent | uphadq | oracle | cp_baseline
        #[arg(short, long)]
        method: String,
        /// Bits per sample; defaults to the value in the sidecar JSON
        #[arg(short, long)]
        wordlength: Option<u8>,
        /// Sidecar JSON path (default: input with .json extension)
        #[arg(long)]
        sidecar: Option<PathBuf>,
        /// Clean reference WAV (required for oracle, enables SDR reporting)
        #[arg(long)]
        reference: Option<PathBuf>,
        #[arg(long, default_value = ".")]
        out_dir: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Run the full files x wordlengths x methods grid
    Sweep {
        /// Input WAV files (may also come from `input =` lines in --config)
        inputs: Vec<PathBuf>,
        /// Comma-separated word lengths, e.g. 2,3,4,5,6,7,8
        #[arg(long)]
        wordlengths: Option<String>,
        /// Comma-separated methods
        #[arg(long)]
        methods: Option<String>,
        #[arg(long)]
        out_dir: Option<PathBuf>,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Merge trace CSVs into one iteration-vs-SDR table
    TracePlotdata {
        /// Trace CSV files produced by restore
        traces: Vec<PathBuf>,
        /// Output CSV path
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match cli.command {
        Command::Quantize {
            input,
            wordlength,
            out,
            out_dir,
        } => {
            let stem = input
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| "input".into());
            let out = out.unwrap_or_else(|| out_dir.join(format!("{stem}_w{wordlength}.wav")));
            if let Some(parent) = out.parent() {
                if !parent.as_os_str().is_empty() {
                    std::fs::create_dir_all(parent)
                        .with_context(|| format!("creating {}", parent.display()))?;
                }
            }
            let sidecar = cmd_quantize(&input, wordlength, &out)
                .with_context(|| format!("quantizing {}", input.display()))?;
            println!(
                "wrote {} (delta {}, gain {:.6}) and {}",
                out.display(),
                sidecar.delta,
                sidecar.gain,
                sidecar_path_for(&out).display()
            );
        }
        Command::Restore {
            input,
            method,
            wordlength,
            sidecar,
            reference,
            out_dir,
            overrides,
        } => {
            let method: Method = method.parse()?;
            let wordlength = match wordlength {
                Some(w) => w,
                None => {
                    let path = sidecar.unwrap_or_else(|| sidecar_path_for(&input));
                    read_sidecar(&path)
                        .with_context(|| {
                            format!(
                                "no --wordlength given and sidecar {} unreadable",
                                path.display()
                            )
                        })?
                        .wordlength
                }
            };
            let config = overrides.build(Preset::Standard)?;
            let report = cmd_restore(&RestoreRequest {
                input,
                method,
                wordlength,
                reference,
                out_dir,
                config,
            })?;
            println!(
                "wrote {} and {}",
                report.restored_wav.display(),
                report.trace_csv.display()
            );
            if let Some(eval) = &report.eval {
                println!(
                    "sdr {:.2} dB (input {:.2} dB, delta {:+.2} dB, best iter {})",
                    eval.sdr_db, eval.sdr_input_db, eval.delta_db, eval.best_iter
                );
            }
        }
        Command::Sweep {
            inputs,
            wordlengths,
            methods,
            out_dir,
            overrides,
        } => {
            let mut config = overrides.build(Preset::Standard)?;
            config.inputs.extend(inputs);
            if let Some(w) = wordlengths {
                config.apply_key("wordlengths", &w)?;
            }
            if let Some(m) = methods {
                config.apply_key("methods", &m)?;
            }
            if let Some(d) = out_dir {
                config.out_dir = d;
            }
            let table = cmd_sweep(&config)?;
            println!(
                "{} rows ({} failures) written under {}",
                table.rows.len(),
                table.failures.len(),
                config.out_dir.display()
            );
            if !table.failures.is_empty() {
                for f in &table.failures {
                    eprintln!("failed: {} {} w={}: {}", f.file, f.method, f.wordlength, f.error);
                }
                bail!("{} grid cell(s) failed", table.failures.len());
            }
        }
        Command::TracePlotdata { traces, out } => {
            if traces.is_empty() {
                bail!("no trace files given");
            }
            cmd_trace_plotdata(&traces, &out)?;
            println!("wrote {}", out.display());
        }
    }
    Ok(())
}
