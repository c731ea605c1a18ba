use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use svebm::cli;
use svebm::config::RunConfig;
use svebm::trainer::Mode;
use svebm::{Error, Result};

#[derive(Parser)]
#[command(name = "svebm", version, about = "Latent energy-based prior models with symbol-vector coupling")]
struct Args {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a model from a configuration file.
    Train {
        #[arg(long)]
        config: PathBuf,
        /// Output directory (overrides run.out_dir).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Training seed (overrides train.seed).
        #[arg(long)]
        seed: Option<u64>,
        /// svebm or ib-ebm (overrides run.mode; svebm also sets lambda to 0).
        #[arg(long)]
        mode: Option<Mode>,
        /// Resume from this checkpoint.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Evaluate a checkpoint and write a report table.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Data file in the checkpoint's modality.
        #[arg(long)]
        data: Option<PathBuf>,
        /// Configuration whose data section supplies the evaluation data.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Comma-separated metric names.
        #[arg(long, value_delimiter = ',')]
        metrics: Vec<String>,
        #[arg(long)]
        seed: Option<u64>,
        /// Report path; printed to stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Generate observations from the prior.
    Sample {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, default_value_t = 100)]
        count: usize,
        /// Generate from p(z | y = label).
        #[arg(long)]
        label: Option<usize>,
        /// Sampling temperature for sequences.
        #[arg(long, default_value_t = 1.0)]
        temperature: f64,
        /// Greedy sequence decoding instead of sampling.
        #[arg(long)]
        greedy: bool,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Predict categories for observations.
    Classify {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write kernel density grids for 2-D point models.
    PlotDensity {
        /// Model checkpoint; without it only the data panel is written.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Point file with the observations.
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn emit(text: &str, out: Option<&PathBuf>) -> Result<()> {
    match out {
        Some(p) => std::fs::write(p, text).map_err(|e| Error::io(p, e)),
        None => print_stdout(text),
    }
}

/// Writes to stdout; a closed pipe is not an error.
fn print_stdout(text: &str) -> Result<()> {
    match std::io::stdout().lock().write_all(text.as_bytes()) {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(Error::io("<stdout>", e)),
        _ => Ok(()),
    }
}

fn run(args: Args) -> Result<()> {
    match args.command {
        Command::Train { config, out, seed, mode, checkpoint } => {
            let mut cfg = RunConfig::load(&config)?;
            if let Some(o) = out {
                cfg.out_dir = o;
            }
            if let Some(s) = seed {
                cfg.train.seed = s;
            }
            if let Some(m) = mode {
                cfg.train.mode = m;
                if m == Mode::Svebm {
                    cfg.train.lambda = 0.0;
                }
            }
            cfg.validate()?;
            let outcome = cli::cmd_train(cfg, checkpoint.as_deref())?;
            eprintln!("trained {} steps; artifacts in {}", outcome.steps, outcome.out_dir.display());
            print_stdout(&svebm::metrics::report_text(&outcome.report))?;
        }
        Command::Eval { checkpoint, data, config, metrics, seed, out } => {
            let rows = cli::cmd_eval(&checkpoint, data.as_deref(), config.as_deref(), &metrics, seed, out.as_deref())?;
            if out.is_none() {
                print_stdout(&svebm::metrics::report_text(&rows))?;
            }
        }
        Command::Sample { checkpoint, count, label, temperature, greedy, seed, out } => {
            let temperature = if greedy { None } else { Some(temperature) };
            emit(&cli::cmd_sample(&checkpoint, count, label, temperature, seed)?, out.as_ref())?;
        }
        Command::Classify { checkpoint, data, config, out } => {
            emit(&cli::cmd_classify(&checkpoint, data.as_deref(), config.as_deref())?, out.as_ref())?;
        }
        Command::PlotDensity { checkpoint, data, out, seed } => {
            let panels = cli::cmd_plot_density(checkpoint.as_deref(), &data, &out, seed)?;
            eprintln!("wrote {} panels to {}", panels.len(), out.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Args::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let msg = e.to_string().replace('\n', " ");
            eprintln!("error[{}]: {msg}", e.code());
            ExitCode::FAILURE
        }
    }
}
