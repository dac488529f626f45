use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use fedsim::{run_compare, run_experiment, run_sweep, write_traces, ExperimentConfig, Format, HarnessError};

#[derive(Parser)]
#[command(name = "fedsim", version, about = "Deterministic federated foundation-model optimization simulator")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run the configured regime.
    Run(Common),
    /// Run centralized, FL-only and FFM on identical partitions.
    Compare(Common),
    /// Run the configured regime once per k-shot value.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Comma-separated k values.
        #[arg(long, value_delimiter = ',', default_value = "4,8,16,32,64")]
        kshots: Vec<usize>,
    },
}

#[derive(Args)]
struct Common {
    /// Experiment config (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Report path; overrides `output.path`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// json or csv; overrides `output.format`.
    #[arg(long)]
    format: Option<Format>,
}

enum Job {
    Run,
    Compare,
    Sweep(Vec<usize>),
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().filter_or("FEDSIM_LOG", "warn")).init();
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("fedsim: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

fn execute(cmd: Cmd) -> Result<(), HarnessError> {
    let (common, job) = match cmd {
        Cmd::Run(c) => (c, Job::Run),
        Cmd::Compare(c) => (c, Job::Compare),
        Cmd::Sweep { common, kshots } => (common, Job::Sweep(kshots)),
    };
    let cfg = ExperimentConfig::load(&common.config)?;
    let started = Instant::now();
    let outcome = match job {
        Job::Run => run_experiment(&cfg)?,
        Job::Compare => run_compare(&cfg)?,
        Job::Sweep(k) => run_sweep(&cfg, &k)?,
    };
    log::info!("finished in {:.2?}", started.elapsed());
    if let Some(dir) = &cfg.output.trace_dir {
        write_traces(&outcome, dir)?;
    }
    let format = common.format.unwrap_or(cfg.output.format);
    let path = common.out.or(cfg.output.path.clone());
    outcome.report.emit(format, path.as_deref())
}
