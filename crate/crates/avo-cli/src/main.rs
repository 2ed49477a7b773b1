//! Command-line driver: run the evolution loop, report trajectories from a
//! version store, evaluate single candidates, and query the brute-force
//! oracle.

use std::path::PathBuf;

use anyhow::Context;
use clap::{Parser, Subcommand, ValueEnum};

use avo_core::driver::{run_evolution, OperatorKind, PolicyKind, RunConfig};
use avo_core::lineage::{geomean, Aggregation};
use avo_core::minivm::oracle::{brute_force_optimal, OracleParams};
use avo_core::minivm::task::TaskSpec;
use avo_core::report::{compare_report, export_trajectory, parse_baselines, ExportFormat};
use avo_core::scoring::Scorer;
use avo_core::store::VersionStore;

#[derive(Parser)]
#[command(name = "avo", version, about = "Single-lineage evolutionary program optimization")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum OperatorArg {
    Agentic,
    Classical,
}

#[derive(Clone, Copy, ValueEnum)]
enum PolicyArg {
    Scripted,
    Model,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Csv,
    Json,
}

#[derive(Subcommand)]
enum Command {
    /// Run the evolution loop from a config file.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Override the config's rng seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Override the variation operator.
        #[arg(long, value_enum)]
        operator: Option<OperatorArg>,
        /// Override the policy backing the operator.
        #[arg(long, value_enum)]
        policy: Option<PolicyArg>,
        /// Override the committed-version budget.
        #[arg(long)]
        max_versions: Option<u32>,
    },
    /// Export the trajectory of a version store, optionally comparing
    /// against a baseline table.
    Report {
        #[arg(long)]
        repo: PathBuf,
        #[arg(long, value_enum, default_value = "csv")]
        format: FormatArg,
        /// Baseline CSV (`name,config_id,value` rows).
        #[arg(long)]
        baseline: Option<PathBuf>,
        /// Zero all timestamps so identically-seeded runs export
        /// byte-identically.
        #[arg(long)]
        normalize_time: bool,
        /// Write the export here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Evaluate one candidate file against a task.
    Eval {
        #[arg(long)]
        task: PathBuf,
        #[arg(long)]
        candidate: PathBuf,
    },
    /// Exhaustively search for the optimal program of bounded length.
    Oracle {
        #[arg(long)]
        task: PathBuf,
        #[arg(long, default_value_t = 3)]
        max_len: usize,
    },
}

fn main() -> anyhow::Result<()> {
    match Cli::parse().command {
        Command::Run {
            config,
            seed,
            operator,
            policy,
            max_versions,
        } => {
            let mut run_config =
                RunConfig::from_path(&config).with_context(|| format!("loading {config:?}"))?;
            if let Some(seed) = seed {
                run_config.seed = seed;
            }
            if let Some(operator) = operator {
                run_config.operator = match operator {
                    OperatorArg::Agentic => OperatorKind::Agentic,
                    OperatorArg::Classical => OperatorKind::Classical,
                };
            }
            if let Some(policy) = policy {
                run_config.policy = match policy {
                    PolicyArg::Scripted => PolicyKind::Scripted,
                    PolicyArg::Model => PolicyKind::Model,
                };
            }
            if let Some(max_versions) = max_versions {
                run_config.max_versions = max_versions;
            }
            let (lineage, log) = run_evolution(&run_config)?;
            for entry in lineage.entries() {
                println!(
                    "v{}: geomean {:.3} ({})",
                    entry.solution.version,
                    geomean(&entry.scores).unwrap_or(0.0),
                    entry.solution.note
                );
            }
            println!(
                "stopped: {:?} after {} attempts, {} committed versions, best geomean {:.3}",
                log.stop,
                log.attempts.len(),
                log.commits(),
                lineage.best_aggregate(Aggregation::Geomean)
            );
            if let Some(repo) = &run_config.repository {
                println!("version store: {}", repo.display());
            }
        }
        Command::Report {
            repo,
            format,
            baseline,
            normalize_time,
            out,
        } => {
            let store = VersionStore::open(&repo)?;
            let lineage = store.load_lineage()?;
            let format = match format {
                FormatArg::Csv => ExportFormat::Csv,
                FormatArg::Json => ExportFormat::Json,
            };
            let export = export_trajectory(&lineage, format, normalize_time);
            match out {
                Some(path) => std::fs::write(&path, &export)
                    .with_context(|| format!("writing {path:?}"))?,
                None => print!("{export}"),
            }
            if let Some(baseline_path) = baseline {
                let text = std::fs::read_to_string(&baseline_path)
                    .with_context(|| format!("reading {baseline_path:?}"))?;
                let rows = parse_baselines(&text)?;
                let report = compare_report(&lineage, &rows);
                print!("{}", report.render());
            }
        }
        Command::Eval { task, candidate } => {
            let task = TaskSpec::from_path(&task)?;
            let source = std::fs::read_to_string(&candidate)
                .with_context(|| format!("reading {candidate:?}"))?;
            let scorer = Scorer::with_defaults(task)?;
            let result = scorer.evaluate(&source);
            println!("{}", serde_json::to_string_pretty(&result)?);
        }
        Command::Oracle { task, max_len } => {
            let task = TaskSpec::from_path(&task)?;
            let result = brute_force_optimal(&task, &OracleParams::with_max_len(max_len))?;
            match result {
                Some(best) => {
                    println!("geomean: {}", best.geomean);
                    for entry in &best.scores.entries {
                        println!("f_{}: {}", entry.config_id, entry.value);
                    }
                    println!("program ({} instructions):", best.program.len());
                    print!("{}", best.program);
                }
                None => println!("no correct program within length {max_len}"),
            }
        }
    }
    Ok(())
}
