use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use twoscale::io::{
    cell_report, compare, load_config, simulate, sweep, write_cells, write_errors, write_report, write_sweep,
};
use twoscale::Error;

/// Environment variable holding the worker thread count.
const THREADS_VAR: &str = "TWOSCALE_THREADS";

#[derive(Parser)]
#[command(name = "twoscale", version, about = "Two-scale phase-field reactive transport simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a configuration and write its report and snapshots.
    Run {
        config: PathBuf,
        /// Overrides `output_dir`.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Compare a run against a reference run.
    Errors {
        config: PathBuf,
        reference: PathBuf,
        /// CSV file for the table (default: `<output_dir>/errors.csv`).
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Run a configuration once per value of one key.
    Sweep {
        config: PathBuf,
        #[arg(long)]
        key: String,
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<String>,
        /// Reference configuration; adds an error table.
        #[arg(long)]
        reference: Option<PathBuf>,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Effective tensors of the initial cells.
    Cell { config: PathBuf },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    if let Err(msg) = configure_threads() {
        eprintln!("error: {msg}");
        return ExitCode::from(2);
    }
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            let mut src = std::error::Error::source(&e);
            while let Some(s) = src {
                eprintln!("  caused by: {s}");
                src = s.source();
            }
            ExitCode::from(if e.is_config() { 2 } else { 3 })
        }
    }
}

fn configure_threads() -> Result<(), String> {
    let Ok(v) = std::env::var(THREADS_VAR) else {
        return Ok(());
    };
    let n: usize = v
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| format!("{THREADS_VAR} = `{v}` is not a positive integer"))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| e.to_string())
}

fn execute(cmd: Command) -> twoscale::Result<()> {
    match cmd {
        Command::Run { config, output } => {
            let cfg = load_config(&config)?;
            let dir = output.unwrap_or_else(|| cfg.output_dir.clone());
            let report = simulate(&cfg)?;
            let files = write_report(&report, &dir)?;
            println!(
                "{} steps in {:.1} s, {} files in {}",
                report.steps.len(),
                report.elapsed.as_secs_f64(),
                files.len(),
                dir.display()
            );
        }
        Command::Errors {
            config,
            reference,
            output,
        } => {
            let cfg = load_config(&config)?;
            let reference = load_config(&reference)?;
            let r = simulate(&reference)?;
            let row = compare(&simulate(&cfg)?, &r)?;
            let path = output.unwrap_or_else(|| cfg.output_dir.join("errors.csv"));
            ensure_parent(&path)?;
            let label = config.display().to_string();
            for (h, v) in row.header().iter().zip(row.values()) {
                println!("{h:>14} {v:.4e}");
            }
            write_errors(&[(label, row)], &path)?;
        }
        Command::Sweep {
            config,
            key,
            values,
            reference,
            output,
        } => {
            let cfg = load_config(&config)?;
            let dir = output.unwrap_or_else(|| cfg.output_dir.join(format!("sweep_{key}")));
            // validate every value before the first run
            for v in &values {
                cfg.with_override(&key, v)?;
            }
            let reference = reference.map(|p| load_config(&p).and_then(|c| simulate(&c))).transpose()?;
            let rows = sweep(&cfg, &key, &values, reference.as_ref())?;
            std::fs::create_dir_all(&dir)?;
            for r in &rows {
                write_report(&r.report, &dir.join(format!("{key}={}", r.value)))?;
            }
            write_sweep(&key, &rows, &dir.join("summary.csv"))?;
            let errs: Vec<_> = rows
                .iter()
                .filter_map(|r| r.errors.clone().map(|e| (r.value.clone(), e)))
                .collect();
            if !errs.is_empty() {
                write_errors(&errs, &dir.join("errors.csv"))?;
            }
            println!("{} runs written to {}", rows.len(), dir.display());
        }
        Command::Cell { config } => {
            let cfg = load_config(&config)?;
            let rows = cell_report(&cfg)?;
            for c in &rows {
                println!(
                    "{}: {} elements, porosity {:.6}, A = {:?}, K = {:?}",
                    c.label, c.elements, c.porosity, c.a, c.k
                );
            }
            std::fs::create_dir_all(&cfg.output_dir)?;
            write_cells(&rows, &cfg.output_dir.join("cells.csv"))?;
        }
    }
    Ok(())
}

fn ensure_parent(path: &Path) -> Result<(), Error> {
    if let Some(p) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(p)?;
    }
    Ok(())
}
