//! `liftsynth` command-line front end.
//!
//! Exit codes: 0 on success, 2 on invalid input, 3 when the solver did not
//! converge (outputs of a finished but unconverged design are still written).

#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod config;
mod jobs;
mod signal_io;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use liftsynth::analysis::simulate;
use liftsynth::lifting::Signal;
use liftsynth::quantization::{quantize, QuantizerConfig};
use liftsynth::sslib::tf_to_ss;

use config::{JobConfig, NormKind};
use jobs::{analyze_report, baseline_taps, parse_tf_arg, run_job, write_outputs, JobError};
use signal_io::{format_signal, read_signal};

#[derive(Parser)]
#[command(
    name = "liftsynth",
    version,
    about = "Sampled-data H-infinity FIR filter design"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum NormArg {
    Hinf,
    H2,
}

#[derive(Subcommand)]
enum Command {
    /// Run the job described by a configuration file.
    Run {
        config: PathBuf,
        /// Output directory, overriding `output_dir` of the file.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print a norm of a discrete transfer function.
    Analyze {
        /// Coefficients in descending powers of z, as "num;den".
        #[arg(long)]
        tf: String,
        #[arg(long, value_enum, default_value = "hinf")]
        norm: NormArg,
        #[arg(long, default_value_t = 1.0)]
        period: f64,
    },
    /// Filter a raw signal file through a discrete transfer function.
    Simulate {
        #[arg(long)]
        tf: String,
        /// Input samples, one per line.
        #[arg(long)]
        input: PathBuf,
        /// Output file (standard output when absent).
        #[arg(long)]
        output: Option<PathBuf>,
        /// Quantize the input with this step first.
        #[arg(long)]
        delta: Option<f64>,
        #[arg(long, default_value_t = 1.0)]
        period: f64,
    },
    /// Emit a Hamming-windowed sinc low-pass as a tap file.
    Baseline {
        #[arg(long)]
        taps: usize,
        /// Cutoff in rad/sample.
        #[arg(long)]
        cutoff: f64,
        #[arg(long, default_value_t = 1.0)]
        gain: f64,
        #[arg(long, default_value_t = 1.0)]
        period: f64,
        #[arg(long)]
        output: Option<PathBuf>,
    },
}

fn emit(text: &str, output: Option<&PathBuf>) -> Result<(), JobError> {
    match output {
        Some(p) => std::fs::write(p, text)
            .map_err(|e| JobError::Invalid(format!("cannot write {}: {e}", p.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn execute(cmd: Command) -> Result<i32, JobError> {
    match cmd {
        Command::Run { config, out } => {
            let text = std::fs::read_to_string(&config)
                .map_err(|e| JobError::Invalid(format!("cannot read {}: {e}", config.display())))?;
            let base = config.parent().map(PathBuf::from).unwrap_or_default();
            let mut cfg = JobConfig::parse(&text, &base)?;
            if let Some(o) = out {
                cfg.output_dir = o;
            }
            let outputs = run_job(&cfg)?;
            write_outputs(&cfg.output_dir, &outputs)?;
            if outputs.converged {
                Ok(0)
            } else {
                eprintln!("warning: synthesis stopped before reaching its tolerance; best iterate written");
                Ok(3)
            }
        }
        Command::Analyze { tf, norm, period } => {
            let sys = tf_to_ss(&parse_tf_arg(&tf, period)?)?;
            let kind = match norm {
                NormArg::Hinf => NormKind::Hinf,
                NormArg::H2 => NormKind::H2,
            };
            let report = analyze_report(&sys, &[kind])?;
            let value = report
                .lines()
                .find_map(|l| l.split_once("_norm = ").map(|(_, v)| v.to_string()))
                .unwrap_or_default();
            let v: f64 = value
                .parse()
                .map_err(|_| JobError::Invalid("norm evaluation failed".into()))?;
            println!("{}", format_norm(v));
            Ok(0)
        }
        Command::Simulate {
            tf,
            input,
            output,
            delta,
            period,
        } => {
            let sys = tf_to_ss(&parse_tf_arg(&tf, period)?)?;
            let mut u = read_signal(&input)?;
            if let Some(d) = delta {
                u = quantize(&u, &QuantizerConfig::new(d)?);
            }
            let y = simulate(&sys, &Signal::scalar(u, period)?, None)?;
            emit(&format_signal(y.as_flat()), output.as_ref())?;
            Ok(0)
        }
        Command::Baseline {
            taps,
            cutoff,
            gain,
            period,
            output,
        } => {
            let f = baseline_taps(taps, cutoff, gain, period)?;
            emit(&f.to_tap_file(), output.as_ref())?;
            Ok(0)
        }
    }
}

/// Norms are printed with nine decimal places, trailing zeros trimmed.
fn format_norm(v: f64) -> String {
    let s = format!("{:.9}", v);
    let s = s.trim_end_matches('0');
    if s.ends_with('.') {
        format!("{s}0")
    } else {
        s.to_string()
    }
}

fn main() -> ExitCode {
    if let Some(t) = std::env::var("LIFTSYNTH_THREADS")
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
    {
        if t > 0 {
            let _ = rayon::ThreadPoolBuilder::new()
                .num_threads(t)
                .build_global();
        }
    }
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
