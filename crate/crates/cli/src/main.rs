use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use streamtm::corpus::synthetic::SyntheticSchedule;
use streamtm::eval::CoherenceMode;
use streamtm::pipeline::{self, ExportTarget, LoadedRun, MergeStrategy, RunConfig, RunManifest, RunOptions, TraceVariant};
use streamtm::{Error, Result};

#[derive(Parser)]
#[command(name = "streamtm", version, about = "Online stick-breaking embedded topic model")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Merge {
    Cot,
    Dot,
}

#[derive(Clone, Copy, ValueEnum)]
enum Trace {
    Algorithm2,
    Epsilon,
}

#[derive(Clone, Copy, ValueEnum)]
enum Coherence {
    Npmi,
    Umass,
}

#[derive(Clone, Copy, ValueEnum)]
enum Target {
    Topics,
    Pca,
    Freq,
    Matrix,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic document stream.
    Simulate {
        /// Schedule JSON; the built-in 11-step scenario when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train over a stream, merging and tracing topics step by step.
    Run {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        k_init: Option<usize>,
        #[arg(long, value_enum)]
        merge: Option<Merge>,
        #[arg(long, value_enum)]
        trace: Option<Trace>,
        /// Stream directory; overrides the configured source.
        #[arg(long)]
        stream: Option<PathBuf>,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Score one or more completed runs.
    Eval {
        #[arg(required = true)]
        runs: Vec<PathBuf>,
        /// Ground-truth JSON with `k_real`; defaults to the stream's own file.
        #[arg(long)]
        ground_truth: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "npmi")]
        coherence: Coherence,
        /// Report path; defaults to the first run's report.json.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write plotting artifacts of a completed run.
    Export {
        run: PathBuf,
        #[arg(value_enum)]
        what: Target,
        /// Output directory; defaults to the run directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate { config, seed, out } => {
            let mut schedule: SyntheticSchedule = match config {
                Some(p) => streamtm::io::read_json(&p)?,
                None => SyntheticSchedule::default(),
            };
            if let Some(s) = seed {
                schedule.seed = s;
            }
            let defaults = RunConfig::default();
            let files = pipeline::simulate(&schedule, defaults.prune, defaults.synthetic_embedding_noise, &out)?;
            println!("wrote {} files to {}", files.len(), out.display());
        }
        Command::Run {
            config,
            seed,
            k_init,
            merge,
            trace,
            stream,
            epochs,
            out,
        } => {
            let mut cfg = match config {
                Some(p) => RunConfig::load(&p)?,
                None => RunConfig::default(),
            };
            if let Some(s) = seed {
                cfg.seed = s;
            }
            if let Some(k) = k_init {
                cfg.k_init = k;
            }
            if let Some(m) = merge {
                cfg.merge = match m {
                    Merge::Cot => MergeStrategy::Cot,
                    Merge::Dot => MergeStrategy::Dot,
                };
            }
            if let Some(t) = trace {
                cfg.trace = match t {
                    Trace::Algorithm2 => TraceVariant::Algorithm2,
                    Trace::Epsilon => TraceVariant::Epsilon,
                };
            }
            if let Some(path) = stream {
                cfg.stream = pipeline::StreamSource::Dir { path };
            }
            if let Some(e) = epochs {
                cfg.train.epochs = e;
            }
            if let Some(o) = out {
                cfg.out = o;
            }
            let m = pipeline::run(&cfg, RunOptions::default())?;
            println!(
                "{}: {} steps, K_pred {:?}",
                cfg.out.display(),
                m.steps.len(),
                m.k_pred_series()
            );
        }
        Command::Eval {
            runs,
            ground_truth,
            coherence,
            out,
        } => {
            let mode = match coherence {
                Coherence::Npmi => CoherenceMode::Npmi,
                Coherence::Umass => CoherenceMode::Umass,
            };
            let report = pipeline::evaluate_runs(&runs, ground_truth.as_deref(), mode)?;
            let path = match out {
                Some(p) => p,
                None => runs[0].join(RunManifest::load(&runs[0])?.report),
            };
            streamtm::io::write_json(&path, &report)?;
            println!("{}", serde_json::to_string(&report).map_err(Error::from)?);
        }
        Command::Export { run, what, out } => {
            let target = match what {
                Target::Topics => ExportTarget::Topics,
                Target::Pca => ExportTarget::Pca,
                Target::Freq => ExportTarget::Frequency,
                Target::Matrix => ExportTarget::TopicCategory,
            };
            let loaded = LoadedRun::open(&run)?;
            let dir = out.unwrap_or_else(|| run.clone());
            let path = pipeline::export(&loaded, target, &dir)?;
            println!("{}", path.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
