//! `ailab`: run, sweep, summarise and export experiment grids.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use ailab_core::harness::{
    emit_plot_data, load_records, run_and_write, summarize, summary_csv, summary_table, sweep, ExperimentConfig,
    RunReport, SweepValues,
};
use ailab_core::harness::record::write_atomic;
use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "ailab", version, about = "Active imitation learning experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every (M, seed) cell of a config.
    Run {
        config: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Run a config once per value of one swept parameter.
    Sweep {
        config: PathBuf,
        #[command(flatten)]
        values: SweepArgs,
        #[command(flatten)]
        common: Common,
    },
    /// Aggregate run records under a directory into a summary table.
    Summarize { dir: PathBuf },
    /// Write plot-ready CSVs for the run records under a directory.
    Plotdata {
        dir: PathBuf,
        /// Output directory (default: `<dir>/plots`).
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct Common {
    /// Override a config value, e.g. `--set strategy.alpha=0.9`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Output directory (default: `experiment.output_dir`, under `$AILAB_OUTPUT_ROOT` if relative).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Print the resolved config and exit.
    #[arg(long)]
    print_config: bool,
}

#[derive(Args)]
#[group(required = true, multiple = false)]
struct SweepArgs {
    #[arg(long, value_delimiter = ',')]
    alpha: Option<Vec<f64>>,
    #[arg(long = "K", value_delimiter = ',')]
    k: Option<Vec<usize>>,
    #[arg(long = "M", value_delimiter = ',')]
    m: Option<Vec<usize>>,
}

impl SweepArgs {
    fn values(self) -> SweepValues {
        match (self.alpha, self.k, self.m) {
            (Some(a), _, _) => SweepValues::Alpha(a),
            (_, Some(k), _) => SweepValues::K(k),
            (_, _, Some(m)) => SweepValues::M(m),
            _ => unreachable!("clap requires one sweep axis"),
        }
    }
}

fn load(config: &Path, common: &Common) -> Result<(ExperimentConfig, PathBuf)> {
    let cfg = ExperimentConfig::load(config, &common.overrides)
        .with_context(|| format!("loading {}", config.display()))?;
    let out = common.out.clone().unwrap_or_else(|| cfg.output_dir());
    Ok((cfg, out))
}

/// Print failures; true when every run succeeded.
fn report_failures(report: &RunReport) -> bool {
    for f in &report.failures {
        eprintln!("run M={} seed={} failed: {}", f.m, f.seed, f.error);
    }
    report.ok()
}

fn write_summary(dir: &Path) -> Result<()> {
    let records = load_records(dir).with_context(|| format!("reading records in {}", dir.display()))?;
    if records.is_empty() {
        bail!("no run records under {}", dir.display());
    }
    let rows = summarize(&records)?;
    print!("{}", summary_table(&rows));
    write_atomic(&dir.join("summary.csv"), summary_csv(&rows).as_bytes())?;
    Ok(())
}

fn execute(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Run { config, common } => {
            let (cfg, out) = load(&config, &common)?;
            if common.print_config {
                print!("{}", cfg.to_toml());
                return Ok(true);
            }
            let report = run_and_write(&cfg, &out)?;
            let ok = report_failures(&report);
            if !report.records.is_empty() {
                write_summary(&out)?;
            }
            eprintln!("wrote {} run(s) to {}", report.records.len(), out.display());
            Ok(ok)
        }
        Command::Sweep { config, values, common } => {
            let (cfg, out) = load(&config, &common)?;
            if common.print_config {
                print!("{}", cfg.to_toml());
                return Ok(true);
            }
            let mut ok = true;
            for (dir, report) in sweep(&cfg, &values.values(), &out)? {
                println!("== {}", dir.display());
                ok &= report_failures(&report);
                if !report.records.is_empty() {
                    write_summary(&dir)?;
                }
            }
            Ok(ok)
        }
        Command::Summarize { dir } => {
            write_summary(&dir)?;
            Ok(true)
        }
        Command::Plotdata { dir, out } => {
            let records = load_records(&dir)?;
            let out = out.unwrap_or_else(|| dir.join("plots"));
            for p in emit_plot_data(&records, &out)? {
                println!("{}", p.display());
            }
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
