use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use ftquad::harness::log::SimLog;
use ftquad::harness::matrix::{run_matrix, write_matrix_csv, write_table_csv, Grid};
use ftquad::harness::summary::{summarize, write_summary_csv};
use ftquad::harness::sweep::{parse_areas, sweep_configurations, write_sweep_csv};
use ftquad::harness::{run, Outcome, ScenarioConfig};
use ftquad::Error;

/// Overrides `--out` for every subcommand that writes files.
const OUT_DIR_ENV: &str = "FTQUAD_OUT_DIR";

#[derive(Parser)]
#[command(name = "ftquad", version, about = "Fault-tolerant quadrotor scenario runner")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario and write its log and summary.
    Run {
        config: PathBuf,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Run a metric × failure × speed grid over a base scenario.
    Matrix {
        config: PathBuf,
        /// `full` or e.g. `metric=s2,thrust_vector;failure=dual;speed=0.5,1`.
        #[arg(long, default_value = "full")]
        grid: String,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Sweep added plate area in a dual-failure hover.
    SweepDrag {
        config: PathBuf,
        /// `a0:a1:n`, in m².
        #[arg(long)]
        areas: String,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Print the summary of a saved log.
    Summarize { log: PathBuf },
}

enum Failure {
    Config(String),
    Simulation(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::ConfigInvalid(_) => Failure::Config(e.to_string()),
            other => Failure::Simulation(other.to_string()),
        }
    }
}

fn out_dir(flag: &Path) -> Result<PathBuf, Failure> {
    let dir = std::env::var_os(OUT_DIR_ENV).map(PathBuf::from).unwrap_or_else(|| flag.to_path_buf());
    fs::create_dir_all(&dir).map_err(|e| Failure::Simulation(format!("cannot create {}: {e}", dir.display())))?;
    Ok(dir)
}

fn create(path: &Path) -> Result<BufWriter<File>, Failure> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Failure::Simulation(format!("cannot write {}: {e}", path.display())))
}

fn run_one(config: &Path, out: &Path) -> Result<(), Failure> {
    let cfg = ScenarioConfig::load(config)?;
    let dir = out_dir(out)?;
    let log = run(&cfg)?;
    let stem = if cfg.name.is_empty() { "run".to_string() } else { cfg.name.clone() };
    let log_path = dir.join(format!("{stem}.csv"));
    log.save(&log_path)?;
    let summary = summarize(&log)?;
    write_summary_csv(&summary, create(&dir.join(format!("{stem}.summary.csv")))?)?;
    print!("{}", summary.report());
    println!("log written to {}", log_path.display());
    match log.outcome {
        Outcome::Failed(reason) => Err(Failure::Simulation(reason)),
        _ => Ok(()),
    }
}

fn matrix(config: &Path, grid: &str, out: &Path) -> Result<(), Failure> {
    let cfg = ScenarioConfig::load(config)?;
    let grid = Grid::parse(grid)?;
    let dir = out_dir(out)?;
    let results = run_matrix(&cfg, &grid)?;
    write_matrix_csv(&results, create(&dir.join("matrix.csv"))?)?;
    write_table_csv(&results, &grid, create(&dir.join("table.csv"))?)?;
    let mut table = Vec::new();
    write_table_csv(&results, &grid, &mut table)?;
    print!("{}", String::from_utf8_lossy(&table));
    let failed: Vec<String> = results.iter().filter_map(|r| r.summary.as_ref().err().cloned()).collect();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(Failure::Simulation(format!("{} cell(s) could not run: {}", failed.len(), failed.join("; "))))
    }
}

fn sweep(config: &Path, areas: &str, out: &Path) -> Result<(), Failure> {
    let cfg = ScenarioConfig::load(config)?;
    let areas = parse_areas(areas)?;
    let dir = out_dir(out)?;
    let rows = sweep_configurations(&cfg, &areas)?;
    write_sweep_csv(&rows, create(&dir.join("sweep.csv"))?)?;
    let mut text = Vec::new();
    write_sweep_csv(&rows, &mut text)?;
    print!("{}", String::from_utf8_lossy(&text));
    Ok(())
}

fn summarize_file(path: &Path) -> Result<(), Failure> {
    let log = SimLog::load(path).map_err(|e| Failure::Config(e.to_string()))?;
    print!("{}", summarize(&log)?.report());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run { config, out } => run_one(config, out),
        Command::Matrix { config, grid, out } => matrix(config, grid, out),
        Command::SweepDrag { config, areas, out } => sweep(config, areas, out),
        Command::Summarize { log } => summarize_file(log),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(msg)) => {
            eprintln!("config error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Simulation(msg)) => {
            eprintln!("simulation failure: {msg}");
            ExitCode::from(2)
        }
    }
}
