//! `ctscan`: synthetic data, training, evaluation, prediction and sweeps.

mod commands;
mod config;

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use ctscan_core::dwcc::DEFAULT_ALPHA;
use ctscan_core::experiment::SynthSpec;
use ctscan_core::{Error, Result};

use commands::{EvalMethod, PredictArgs, SweepAxis, TrainMethod};
use config::RunConfig;

#[derive(Parser)]
#[command(name = "ctscan", version, about = "Scan-level COVID-19 CT classification")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum TrainChoice {
    DwccScorer,
    Ccat,
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodChoice {
    Dwcc,
    Ccat,
    Ensemble,
    All,
}

#[derive(Clone, Copy, ValueEnum)]
enum AxisChoice {
    Fraction,
    Heads,
}

#[derive(Subcommand)]
enum Command {
    /// Write a labelled synthetic dataset.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 200)]
        n_scans: usize,
        #[arg(long, default_value_t = 40)]
        depth: usize,
        #[arg(long, default_value = "64x64")]
        size: String,
        #[arg(long, default_value_t = 0.5)]
        covid_frac: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Train the slice scorer or the CCAT model.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_enum)]
        method: TrainChoice,
        /// Overrides the configured epoch count.
        #[arg(long)]
        epochs: Option<usize>,
        /// Overrides the configured training seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Report accuracy and macro precision/recall/F1 on the configured data.
    Eval {
        #[arg(long)]
        config: PathBuf,
        /// Scorer and/or CCAT checkpoint; repeat for both.
        #[arg(long)]
        checkpoint: Vec<PathBuf>,
        #[arg(long, value_enum)]
        method: Option<MethodChoice>,
    },
    /// Classify one scan.
    Predict {
        #[arg(long)]
        scan: Option<PathBuf>,
        #[arg(long, value_enum)]
        method: MethodChoice,
        #[arg(long)]
        checkpoint: Vec<PathBuf>,
        /// Precomputed per-slice scores, used instead of a scorer checkpoint.
        #[arg(long)]
        scores: Option<PathBuf>,
        #[arg(long, default_value_t = 0.4)]
        fraction: f64,
        #[arg(long, default_value_t = DEFAULT_ALPHA)]
        alpha: f64,
    },
    /// Accuracy as a function of the slice fraction or the head count.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_enum)]
        sweep: AxisChoice,
        /// Comma-separated values.
        #[arg(long, value_delimiter = ',', num_args = 1..)]
        values: Vec<f64>,
        /// Trained scorer: evaluated directly for the fraction sweep, used as
        /// the CCAT backbone for the heads sweep.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
    },
}

fn eval_method(m: MethodChoice) -> EvalMethod {
    match m {
        MethodChoice::Dwcc => EvalMethod::Dwcc,
        MethodChoice::Ccat => EvalMethod::Ccat,
        MethodChoice::Ensemble => EvalMethod::Ensemble,
        MethodChoice::All => EvalMethod::All,
    }
}

fn init_threads() -> Result<()> {
    let Ok(v) = std::env::var("CT_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .parse()
        .ok()
        .filter(|&n| n >= 1)
        .ok_or_else(|| Error::Config(format!("CT_THREADS must be a positive integer, got `{v}`")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))
}

fn run(cli: Cli) -> Result<()> {
    init_threads()?;
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    match cli.command {
        Command::Synth {
            out: dir,
            n_scans,
            depth,
            size,
            covid_frac,
            seed,
        } => {
            let spec = SynthSpec {
                n_scans,
                depth,
                hw: commands::parse_size(&size)?,
                covid_frac,
                seed,
            };
            commands::synth(&dir, &spec, &mut out)
        }
        Command::Train { config, method, epochs, seed } => {
            let mut cfg = RunConfig::load(&config)?;
            for tc in [&mut cfg.scorer.train, &mut cfg.ccat.train] {
                tc.epochs = epochs.unwrap_or(tc.epochs);
                tc.seed = seed.unwrap_or(tc.seed);
            }
            let method = match method {
                TrainChoice::DwccScorer => TrainMethod::DwccScorer,
                TrainChoice::Ccat => TrainMethod::Ccat,
            };
            commands::train(&cfg, method, &mut out)
        }
        Command::Eval { config, checkpoint, method } => {
            let cfg = RunConfig::load(&config)?;
            let method = match (method, &cfg.method) {
                (Some(m), _) => eval_method(m),
                (None, Some(m)) => m.parse()?,
                (None, None) => EvalMethod::All,
            };
            commands::eval(&cfg, &checkpoint, method, &mut out)
        }
        Command::Predict {
            scan,
            method,
            checkpoint,
            scores,
            fraction,
            alpha,
        } => {
            let args = PredictArgs {
                scan,
                method: eval_method(method),
                checkpoints: checkpoint,
                scores,
                fraction,
                alpha,
            };
            commands::predict(&args, &mut out)
        }
        Command::Sweep {
            config,
            sweep,
            values,
            checkpoint,
            seed,
        } => {
            let mut cfg = RunConfig::load(&config)?;
            for tc in [&mut cfg.scorer.train, &mut cfg.ccat.train] {
                tc.seed = seed.unwrap_or(tc.seed);
            }
            let axis = match sweep {
                AxisChoice::Fraction => SweepAxis::Fraction,
                AxisChoice::Heads => SweepAxis::Heads,
            };
            commands::sweep(&cfg, axis, &values, checkpoint.as_deref(), &mut out)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if e.use_stderr() => {
            let msg = e.to_string();
            let first = msg.lines().next().unwrap_or("").trim_start_matches("error: ");
            eprintln!("error: usage: {first}");
            return ExitCode::from(2);
        }
        Err(e) => {
            // --help and --version
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
    };
    match run(cli) {
        Ok(()) => {
            let _ = std::io::stdout().flush();
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {}: {e}", e.category());
            ExitCode::FAILURE
        }
    }
}
