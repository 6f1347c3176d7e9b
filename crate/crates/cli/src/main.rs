use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use drsel_cli::run::{cmd_run, RunOptions};
use drsel_cli::spec::RunSpec;
use drsel_cli::{bench, sweep, CliError};
use drsel_core::par::Execution;

#[derive(Parser)]
#[command(name = "drsel", version, about = "Demand-response customer selection experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Added to every seed in the spec.
    #[arg(long, default_value_t = 0)]
    seed_offset: u64,
    /// Concurrent runs (default: all cores).
    #[arg(long)]
    jobs: Option<usize>,
    /// Overrides the spec's out_dir.
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Run every (policy, seed) pair of a spec.
    Run {
        spec: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Repeat the run over a grid of prior offsets and scales.
    Sweep {
        spec: PathBuf,
        #[arg(long, value_delimiter = ',', num_args = 1.., required = true)]
        delta: Vec<f64>,
        #[arg(long, value_delimiter = ',', num_args = 1.., required = true)]
        sigma: Vec<f64>,
        #[command(flatten)]
        common: Common,
    },
    /// Time sampling, solve and update per event.
    Bench {
        spec: PathBuf,
        /// Disable per-customer parallelism.
        #[arg(long)]
        sequential: bool,
        #[command(flatten)]
        common: Common,
    },
}

impl Common {
    fn options(&self) -> RunOptions {
        RunOptions {
            seed_offset: self.seed_offset,
            jobs: self.jobs,
            out_dir: self.out_dir.clone(),
        }
    }
}

fn dispatch(cli: Cli) -> Result<String, CliError> {
    match cli.command {
        Command::Run { spec, common } => {
            let resolved = RunSpec::load(&spec)?;
            let opts = common.options();
            let summary = cmd_run(&resolved, &opts)?;
            let best = summary
                .runs
                .iter()
                .min_by(|a, b| a.final_cum_regret.total_cmp(&b.final_cum_regret));
            Ok(format!(
                "{} runs written to {}{}",
                summary.runs.len(),
                opts.out_dir(&resolved).display(),
                best.map(|b| format!("; lowest final regret {:.4} ({} seed {})", b.final_cum_regret, b.policy, b.seed))
                    .unwrap_or_default()
            ))
        }
        Command::Sweep {
            spec,
            delta,
            sigma,
            common,
        } => {
            let resolved = RunSpec::load(&spec)?;
            let opts = common.options();
            let rows = sweep::cmd_sweep(&resolved, &delta, &sigma, &opts)?;
            Ok(format!(
                "{} grid points written to {}",
                rows.len(),
                opts.out_dir(&resolved).join("sweep.csv").display()
            ))
        }
        Command::Bench {
            spec,
            sequential,
            common,
        } => {
            let resolved = RunSpec::load(&spec)?;
            let exec = if sequential {
                Execution::Sequential
            } else {
                Execution::Parallel
            };
            let r = bench::cmd_bench(&resolved, &common.options(), exec)?;
            Ok(format!(
                "N={} events={} round {:.6} s solve {:.6} s learning {:.6} s",
                r.n_customers,
                r.events,
                r.mean_round_s,
                r.mean_solve_s,
                r.mean_sample_s + r.mean_update_s
            ))
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match dispatch(cli) {
        Ok(line) => {
            println!("{line}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
