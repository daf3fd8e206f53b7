use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use byrdie::experiment::{self, GenDataSpec, RunOverrides};
use byrdie::topology::{CertifyMode, DEFAULT_ENUMERATION_BUDGET};
use byrdie::Error;

#[derive(Parser)]
#[command(name = "byrdie", version, about = "Byzantine-resilient decentralized coordinate descent")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Exact,
    Sampled,
}

#[derive(Subcommand)]
enum Command {
    /// Run every (algorithm x trial) cell of an experiment config.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Overrides `experiment.seed`.
        #[arg(long)]
        seed: Option<u64>,
        /// Overrides `experiment.trials`.
        #[arg(long)]
        trials: Option<usize>,
        /// Worker threads; results do not depend on it.
        #[arg(long)]
        jobs: Option<usize>,
    },
    /// Check the source-component condition on an edge-list graph.
    CertifyGraph {
        /// Edge list: `M`, then one `j i` line per edge (1-based).
        graph: PathBuf,
        #[arg(long)]
        b: usize,
        #[arg(long, value_enum, default_value = "exact")]
        mode: Mode,
        /// Sampled reduced graphs.
        #[arg(long, default_value_t = 10_000)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Largest number of reduced graphs exact mode may visit.
        #[arg(long, default_value_t = DEFAULT_ENUMERATION_BUDGET as u64)]
        budget: u64,
        #[arg(long)]
        jobs: Option<usize>,
    },
    /// Write a synthetic two-class dataset as CSV.
    GenData {
        /// TOML file with `dim`, `margin`, `noise`, `count`, `test_count`, `seed`.
        #[arg(long, required_unless_present = "dim")]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        dim: Option<usize>,
        #[arg(long, default_value_t = 100)]
        count: usize,
        #[arg(long, default_value_t = 0)]
        test_count: usize,
        #[arg(long, default_value_t = 1.0)]
        margin: f64,
        #[arg(long, default_value_t = 0.0)]
        noise: f64,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Print the version.
    Version,
}

fn exit_code(err: &Error) -> u8 {
    match err {
        Error::NumericFault(_) | Error::NonConvergence { .. } | Error::Io(_) | Error::File { .. } => 1,
        _ => 2,
    }
}

fn with_jobs<T>(jobs: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T, Error>
where
    T: Send,
{
    match jobs {
        None => Ok(f()),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build()
            .map(|pool| pool.install(f))
            .map_err(|e| Error::Config(e.to_string())),
    }
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Run {
            config,
            out,
            seed,
            trials,
            jobs,
        } => {
            let output = experiment::cmd_run(&config, &out, &RunOverrides { seed, trials, jobs })?;
            println!(
                "{}: {} cell(s) x {} trial(s) written to {}",
                output.config.experiment.name,
                output.cells.len(),
                output.config.experiment.trials,
                out.display()
            );
        }
        Command::CertifyGraph {
            graph,
            b,
            mode,
            trials,
            seed,
            budget,
            jobs,
        } => {
            let mode = match mode {
                Mode::Exact => CertifyMode::Exact {
                    budget: u128::from(budget),
                },
                Mode::Sampled => CertifyMode::Sampled { trials, seed },
            };
            print!("{}", with_jobs(jobs, || experiment::cmd_certify_graph(&graph, b, mode))??);
        }
        Command::GenData {
            config,
            out,
            dim,
            count,
            test_count,
            margin,
            noise,
            seed,
        } => {
            let mut spec = match config {
                Some(path) => {
                    let text = std::fs::read_to_string(&path)
                        .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
                    toml::from_str::<GenDataSpec>(&text).map_err(|e| Error::Config(e.to_string()))?
                }
                None => GenDataSpec {
                    dim: dim.unwrap_or_default(),
                    margin,
                    noise,
                    count,
                    test_count,
                    seed: 0,
                },
            };
            if let Some(seed) = seed {
                spec.seed = seed;
            }
            let train = experiment::cmd_gen_data(&spec, &out)?;
            println!("wrote {} training samples to {}", train.len(), out.display());
        }
        Command::Version => println!("byrdie {}", env!("CARGO_PKG_VERSION")),
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
