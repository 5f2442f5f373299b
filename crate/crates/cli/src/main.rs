use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use mess_cli::commands::{self, CliError, CliResult};
use mess_cli::config::{
    self, ConfigError, GenerateConfig, RunConfig, SweepConfig, TuneConfig, Validate,
};

#[derive(Debug, Parser)]
#[command(
    name = "mess",
    version,
    about = "Multiproposal elliptical slice sampling experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Experiment config (JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the config's master seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Likelihood-evaluation worker threads per chain.
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Output directory.
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write solute-transport data sets.
    Generate,
    /// Run one chain.
    Run,
    /// Run a grid of chains.
    Sweep,
    /// Tune the MH proposal scale and persist it.
    TuneMh,
    /// Average summary CSVs over seeds.
    Report {
        /// Summary CSV files.
        inputs: Vec<PathBuf>,
    },
}

fn load<T: serde::de::DeserializeOwned + Validate>(path: Option<&Path>) -> CliResult<T> {
    let path = path.ok_or_else(|| ConfigError::new("--config", "required for this command"))?;
    Ok(config::load(path)?)
}

fn finish<T: Validate>(cfg: T) -> CliResult<T> {
    cfg.validate()?;
    Ok(cfg)
}

fn dispatch(cli: &Cli) -> CliResult<()> {
    let path = cli.config.as_deref();
    match &cli.command {
        Command::Generate => {
            let mut cfg: GenerateConfig = load(path)?;
            cfg.seed = cli.seed.unwrap_or(cfg.seed);
            for p in commands::generate(&finish(cfg)?, &cli.out)? {
                println!("wrote {}", p.display());
            }
        }
        Command::Run => {
            let mut cfg: RunConfig = load(path)?;
            cfg.seed = cli.seed.unwrap_or(cfg.seed);
            cfg.workers = cli.workers.unwrap_or(cfg.workers);
            let report = commands::run(&finish(cfg)?, &cli.out)?;
            for r in &report.rows {
                println!(
                    "{} {} M={} {} d={} {}: ess {:.1} msjd {:.4} shrink {:.3} evals {:.3} ({:.2}s)",
                    r.model,
                    r.sampler,
                    r.m,
                    r.distance,
                    r.d,
                    r.component,
                    r.ess,
                    r.msjd,
                    r.mean_shrink_iters,
                    r.mean_lik_evals,
                    r.wall_seconds
                );
            }
        }
        Command::Sweep => {
            let mut cfg: SweepConfig = load(path)?;
            cfg.seed = cli.seed.unwrap_or(cfg.seed);
            cfg.workers = cli.workers.unwrap_or(cfg.workers);
            let report = commands::sweep(&finish(cfg)?, &cli.out)?;
            println!(
                "{} summary rows written to {}",
                report.rows.len(),
                cli.out.join("summary.csv").display()
            );
            if !report.failures.is_empty() {
                for f in &report.failures {
                    eprintln!("cell {} failed: {}", f.cell, f.error);
                }
                return Err(CliError::Runtime(anyhow::anyhow!(
                    "{} cell(s) failed",
                    report.failures.len()
                )));
            }
        }
        Command::TuneMh => {
            let mut cfg: TuneConfig = load(path)?;
            cfg.seed = cli.seed.unwrap_or(cfg.seed);
            cfg.workers = cli.workers.unwrap_or(cfg.workers);
            let rec = commands::tune(&finish(cfg)?, &cli.out)?;
            println!(
                "scale {} (pilot rate {:.3}, verification rate {:.3}, {} rounds)",
                rec.tuning.scale,
                rec.tuning.acceptance_rate,
                rec.verification_rate,
                rec.tuning.rounds
            );
        }
        Command::Report { inputs } => {
            for r in commands::report(inputs, &cli.out)? {
                println!(
                    "{:<18} {:<5} M={:<3} {:<9} d={:<4} {:<8} runs {:<3} ess {:>10.1} msjd {:.4} shrink {:.3} evals {:.3}",
                    r.model, r.sampler, r.m, r.distance, r.d, r.component, r.runs, r.ess, r.msjd, r.mean_shrink_iters, r.mean_lik_evals
                );
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // usage errors are configuration errors; help and version are not errors
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
