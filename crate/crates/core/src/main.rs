use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use algograph::config::{ConfigError, Overrides, RunConfig, TheoryConfig};
use algograph::graph::CodeGraph;
use algograph::runner::{self, RunError, RunStatus, RunSummary, CREDIT_FILE, GRAPH_FILE, RUN_FILE};
use algograph::search::{derive_seed, Variant};

#[derive(Parser)]
#[command(name = "algograph", version, about = "Budget-aware algorithm search over a graph of code corrections")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct RunArgs {
    /// Run configuration (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Overrides the configured seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the token budget.
    #[arg(long)]
    budget: Option<u64>,
    /// Overrides the iteration cap.
    #[arg(long)]
    iterations: Option<usize>,
    #[arg(long, value_parser = clap::value_parser!(Variant))]
    variant: Option<Variant>,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

impl RunArgs {
    fn load(&self) -> Result<RunConfig, RunError> {
        let mut config = RunConfig::load(&self.config)?;
        config.apply(&Overrides {
            seed: self.seed,
            budget: self.budget,
            iterations: self.iterations,
            variant: self.variant,
        });
        config.validate()?;
        Ok(config)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Execute one search run.
    Run(RunArgs),
    /// Execute independent runs with derived seeds and write a bank manifest.
    Batch {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, default_value_t = 1)]
        runs: usize,
        #[arg(long, default_value_t = 1)]
        parallelism: usize,
    },
    /// Refit the surrogate on a finished run and recompute correction credit.
    Credit {
        /// Run output directory.
        #[arg(long)]
        run: PathBuf,
        /// CSV destination; defaults to the run's credit file.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Forest seed; defaults to one derived from the run seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Check the depth-versus-breadth properties of a policy profile.
    BudgetTheory {
        /// Profile configuration (TOML).
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Estimate best fitness under budget and iteration caps from a trace bank.
    Bootstrap {
        /// Bank manifests written by `batch`.
        #[arg(long, required = true)]
        bank: Vec<PathBuf>,
        #[arg(long, default_values_t = [1.0e5, 1.0e6, 1.0e7])]
        budget: Vec<f64>,
        /// Iteration caps per restart.
        #[arg(long, default_values_t = [0usize, 5, 10, 20])]
        iterations: Vec<usize>,
        #[arg(long, default_value_t = 10_000)]
        trajectories: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// CSV destination; standard output when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write a run's correction graph in Graphviz DOT format.
    ExportGraph {
        #[arg(long)]
        run: PathBuf,
        /// DOT destination; standard output when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn write_or_print(out: Option<&PathBuf>, bytes: &[u8]) -> Result<(), RunError> {
    match out {
        Some(path) => fs::write(path, bytes).map_err(|source| RunError::Output {
            path: path.clone(),
            source,
        }),
        None => {
            use std::io::Write;
            std::io::stdout().write_all(bytes).map_err(|source| RunError::Output {
                path: "<stdout>".into(),
                source,
            })
        }
    }
}

fn execute(command: Command) -> Result<u8, RunError> {
    match command {
        Command::Run(args) => {
            let config = args.load()?;
            let s = runner::run_to_dir(&config, &args.out)?;
            eprintln!(
                "{:?} after {} iterations: incumbent fitness {} at cost {}",
                s.termination, s.iterations, s.incumbent_fitness, s.total_cost
            );
            Ok(0)
        }
        Command::Batch { run, runs, parallelism } => {
            let config = run.load()?;
            let manifest = runner::batch(&config, runs, parallelism, &run.out)?;
            let ok = manifest.runs.iter().filter(|r| r.status == RunStatus::Ok).count();
            for r in manifest.runs.iter().filter(|r| r.status == RunStatus::Failed) {
                eprintln!("run {} failed: {}", r.index, r.error.as_deref().unwrap_or("unknown error"));
            }
            eprintln!("{ok}/{} runs succeeded", manifest.runs.len());
            Ok(if ok == 0 { 1 } else { 0 })
        }
        Command::Credit { run, out, seed } => {
            let text = fs::read_to_string(run.join(RUN_FILE)).map_err(|source| RunError::Output {
                path: run.join(RUN_FILE),
                source,
            })?;
            let summary: RunSummary =
                serde_json::from_str(&text).map_err(|e| RunError::Artifact(format!("{RUN_FILE}: {e}")))?;
            let seed = seed.unwrap_or_else(|| derive_seed(summary.seed, &[4]));
            let report = runner::recompute_credit(&run, seed)?;
            let mut buf = Vec::new();
            report.write_csv(&mut buf).map_err(|e| RunError::Artifact(e.to_string()))?;
            let out = out.unwrap_or_else(|| run.join(CREDIT_FILE));
            write_or_print(Some(&out), &buf)?;
            Ok(0)
        }
        Command::BudgetTheory { config, out } => {
            let config = TheoryConfig::load(&config)?;
            let reports = runner::budget_theory(&config, &out)?;
            for r in &reports {
                print!("{r}");
            }
            Ok(if reports.iter().any(|r| r.verdict == algograph::theory::Verdict::Fail) {
                1
            } else {
                0
            })
        }
        Command::Bootstrap {
            bank,
            budget,
            iterations,
            trajectories,
            seed,
            out,
        } => {
            if trajectories == 0 {
                return Err(ConfigError::Invalid("--trajectories must be at least 1".into()).into());
            }
            let rows = runner::bootstrap_table(&bank, &budget, &iterations, trajectories, seed)?;
            let mut buf = Vec::new();
            runner::write_table(&rows, &mut buf).map_err(|e| RunError::Artifact(e.to_string()))?;
            write_or_print(out.as_ref(), &buf)?;
            Ok(0)
        }
        Command::ExportGraph { run, out } => {
            let path = run.join(GRAPH_FILE);
            let text = fs::read_to_string(&path).map_err(|source| RunError::Output {
                path: path.clone(),
                source,
            })?;
            let snapshot = serde_json::from_str(&text).map_err(|e| RunError::Artifact(format!("{GRAPH_FILE}: {e}")))?;
            let graph = CodeGraph::from_snapshot(&snapshot).map_err(|e| RunError::Artifact(e.to_string()))?;
            write_or_print(out.as_ref(), graph.to_dot().as_bytes())?;
            Ok(0)
        }
    }
}
