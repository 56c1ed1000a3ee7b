use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use aomsr_core::config::{ConfigError, ScenarioConfig, ScenarioFile};
use aomsr_core::runner::{execute, plan, render_csv, ResultRow, RunSpec};
use aomsr_core::generate_table2;
use clap::{Parser, Subcommand};
use rayon::prelude::*;

#[derive(Parser)]
#[command(name = "aomsr", version, about = "Multipath secure routing simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every scenario in a config file and write one CSV row per run.
    Run {
        config: PathBuf,
        /// CSV destination; standard output when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Directory for per-run JSONL event logs.
        #[arg(long)]
        trace: Option<PathBuf>,
        /// Worker threads; 0 uses every core.
        #[arg(long, default_value_t = 0)]
        parallel: usize,
        /// Seed used when the file sets none.
        #[arg(long, env = "AOMSR_SEED")]
        seed: Option<u64>,
    },
    /// Print the closed-form routing overhead table.
    Table2 {
        #[arg(long)]
        csv: bool,
    },
    /// Check a config file without running it.
    Validate {
        config: PathBuf,
        #[arg(long, env = "AOMSR_SEED")]
        seed: Option<u64>,
    },
}

const CONFIG_ERROR: u8 = 1;
const RUNTIME_ERROR: u8 = 2;

fn load(path: &Path, seed: Option<u64>) -> Result<Vec<ScenarioConfig>, String> {
    let text = fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    let mut defaults = ScenarioConfig::default();
    if let Some(s) = seed {
        defaults.seed = s;
    }
    let file = ScenarioFile::parse(&text, defaults).map_err(describe)?;
    file.validate().map_err(describe)
}

fn describe(e: ConfigError) -> String {
    match e {
        ConfigError::Invalid(vs) => vs
            .iter()
            .map(|v| format!("invalid {v}"))
            .collect::<Vec<_>>()
            .join("\n"),
        other => other.to_string(),
    }
}

fn run(
    config: &Path,
    out: Option<&Path>,
    trace: Option<&Path>,
    parallel: usize,
    seed: Option<u64>,
) -> ExitCode {
    let configs = match load(config, seed) {
        Ok(c) => c,
        Err(msg) => {
            eprintln!("{msg}");
            return ExitCode::from(CONFIG_ERROR);
        }
    };
    let runs: Vec<RunSpec> = plan(&configs);
    if let Some(dir) = trace {
        if let Err(e) = fs::create_dir_all(dir) {
            eprintln!("{}: {e}", dir.display());
            return ExitCode::from(RUNTIME_ERROR);
        }
    }
    let pool = match rayon::ThreadPoolBuilder::new().num_threads(parallel).build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("thread pool: {e}");
            return ExitCode::from(RUNTIME_ERROR);
        }
    };
    let results: Result<Vec<ResultRow>, String> = pool.install(|| {
        runs.par_iter()
            .enumerate()
            .map(|(i, spec)| {
                execute(spec, i, trace)
                    .map(|(row, _)| row)
                    .map_err(|e| format!("run {i} ({} seed {}): {e}", spec.config.scenario_id, spec.seed))
            })
            .collect()
    });
    let rows = match results {
        Ok(r) => r,
        Err(msg) => {
            eprintln!("{msg}");
            return ExitCode::from(RUNTIME_ERROR);
        }
    };
    let csv = render_csv(&rows);
    match out {
        Some(path) => {
            if let Err(e) = fs::write(path, csv) {
                eprintln!("{}: {e}", path.display());
                return ExitCode::from(RUNTIME_ERROR);
            }
            eprintln!("{} runs written to {}", rows.len(), path.display());
        }
        None => print!("{csv}"),
    }
    ExitCode::SUCCESS
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Run {
            config,
            out,
            trace,
            parallel,
            seed,
        } => run(&config, out.as_deref(), trace.as_deref(), parallel, seed),
        Command::Table2 { csv } => {
            let table = generate_table2();
            if csv {
                print!("{}", table.render_csv());
            } else {
                print!("{}", table.render_text());
            }
            ExitCode::SUCCESS
        }
        Command::Validate { config, seed } => match load(&config, seed) {
            Ok(configs) => {
                let runs: u64 = configs.iter().map(|c| u64::from(c.repetitions)).sum();
                println!("ok: {} scenario(s), {runs} run(s)", configs.len());
                ExitCode::SUCCESS
            }
            Err(msg) => {
                eprintln!("{msg}");
                ExitCode::from(CONFIG_ERROR)
            }
        },
    }
}
