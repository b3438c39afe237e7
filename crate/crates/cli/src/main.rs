use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use tiersim::engines::EngineKind;
use tiersim::harness::{compare, run, RunConfig};
use tiersim::metrics::fmt_opt;
use tiersim::par::Execution;
use tiersim::regions::IntervalConfig;
use tiersim::repro::{self, ReproOptions, SCRIPTS};
use tiersim::tiering::TieringConfig;
use tiersim::units::format_size;
use tiersim::workload::{builtin_scenarios, resolve_scenario};

/// Tiered-memory telemetry simulator
#[derive(Parser, Debug)]
#[command(name = "tiersim", version, about)]
struct Cli {
    /// Run engines one after another instead of in parallel
    #[arg(long, global = true)]
    sequential: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run a scenario against one or more engines and write CSV reports
    Run {
        /// Built-in scenario name or path to a TOML scenario file
        #[arg(long)]
        scenario: String,

        /// Comma-separated engine tags (see list-engines)
        #[arg(long, value_delimiter = ',', required = true)]
        engines: Vec<String>,

        /// Output directory; CSVs land in <out>/<scenario>/<engine>/
        #[arg(long)]
        out: Option<PathBuf>,

        #[arg(long)]
        seed: Option<u64>,

        /// Stop after this many simulated milliseconds
        #[arg(long)]
        duration_ms: Option<u64>,

        /// Migrate reported hot ranges between a near and a far tier
        #[arg(long)]
        tiering: bool,

        /// Milliseconds before telemetry and migration start (with --tiering)
        #[arg(long, default_value_t = 150_000)]
        warmup_ms: u64,

        #[arg(long, default_value_t = 5)]
        sampling_ms: u64,

        #[arg(long, default_value_t = 200)]
        window_ms: u64,

        /// Windows left out of per-phase means after each phase change
        #[arg(long, default_value_t = 10)]
        exclusion_windows: usize,
    },
    /// Compare the summaries of two or more run directories
    Compare {
        #[arg(required = true, num_args = 2..)]
        dirs: Vec<PathBuf>,
    },
    /// List built-in scenarios
    ListScenarios,
    /// List engine tags
    ListEngines,
    /// Run reproduction scripts and print pass/fail per criterion
    Repro {
        /// Script name, or "all"
        name: String,

        #[arg(long, value_delimiter = ',', default_values_t = repro::DEFAULT_SEEDS)]
        seeds: Vec<u64>,

        /// Directory for per-seed CSVs and report.md
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    match try_main() {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn try_main() -> Result<ExitCode> {
    let cli = Cli::parse();
    let execution = if cli.sequential { Execution::Sequential } else { Execution::default() };
    match cli.command {
        Command::Run {
            scenario,
            engines,
            out,
            seed,
            duration_ms,
            tiering,
            warmup_ms,
            sampling_ms,
            window_ms,
            exclusion_windows,
        } => {
            let scenario = resolve_scenario(&scenario)?;
            let engines = engines.iter().map(|t| EngineKind::from_tag(t.trim())).collect::<Result<Vec<_>, _>>()?;
            let mut cfg = RunConfig::new(scenario, engines);
            cfg.out_dir = out;
            cfg.seed = seed;
            cfg.duration_ms = duration_ms;
            cfg.execution = execution;
            cfg.exclusion_windows = exclusion_windows;
            cfg.intervals = IntervalConfig { sampling_ms, window_ms, ..IntervalConfig::default() };
            if tiering {
                cfg.tiering = Some(TieringConfig { warmup_ms, ..TieringConfig::default() });
            }
            let result = run(&cfg).context("simulation failed")?;
            println!("scenario {} seed {} [{} ms, {} ms)", result.scenario, result.seed, result.start_ms, result.end_ms);
            println!("{:<14} {:>5} {:>10} {:>10} {:>12}", "engine", "phase", "precision", "recall", "bit_flips");
            for e in &result.engines {
                for p in &e.phases {
                    println!(
                        "{:<14} {:>5} {:>10} {:>10} {:>12}",
                        e.tag,
                        p.phase + 1,
                        fmt_opt(p.mean_precision),
                        fmt_opt(p.mean_recall),
                        p.bit_flips
                    );
                }
                if cfg.tiering.is_some() {
                    let steady = e.mean_throughput_since(result.end_ms.saturating_sub(repro::STEADY_STATE_MS));
                    println!(
                        "{:<14} migrated {} steady ops/s {}",
                        e.tag,
                        format_size(e.migrated_bytes),
                        steady.map_or_else(String::new, |x| format!("{x:.0}"))
                    );
                }
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Compare { dirs } => {
            print!("{}", compare(&dirs)?);
            Ok(ExitCode::SUCCESS)
        }
        Command::ListScenarios => {
            for s in builtin_scenarios() {
                println!(
                    "{:<16} heap {:>8}  {} phase(s), {} s",
                    s.name,
                    format_size(s.heap_bytes),
                    s.phases.len(),
                    s.total_duration_ms() / 1000
                );
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::ListEngines => {
            for k in EngineKind::ALL {
                println!("{:<14} {}", k.tag(), k.description());
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Repro { name, seeds, out } => {
            if name != "all" && !SCRIPTS.iter().any(|s| s.name == name) {
                let names: Vec<&str> = SCRIPTS.iter().map(|s| s.name).collect();
                bail!("unknown script {name:?}; available: all, {}", names.join(", "));
            }
            let opts = ReproOptions { seeds, execution, out_dir: out.clone() };
            let outcomes = repro::repro(&name, &opts)?;
            for o in &outcomes {
                println!("{}", o.line());
                for c in o.failed_checks() {
                    println!("    failed: {}: {}", c.label, c.detail);
                }
            }
            if let Some(dir) = out {
                println!("report: {}", dir.join("report.md").display());
            }
            Ok(if outcomes.iter().all(|o| o.passed()) { ExitCode::SUCCESS } else { ExitCode::from(1) })
        }
    }
}
