use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use qrpanel_core::pipeline::{run_replicate, run_stages, RunConfig, Stage};

/// Quantile regression replication pipeline for firm-year leverage panels.
#[derive(Parser, Debug)]
#[command(name = "qrpanel", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Read and validate the panel; writes the validation report.
    Ingest(RunArgs),
    /// Yearly means of every variable.
    Describe(RunArgs),
    /// Pearson correlation matrix with p-values.
    Correlate(RunArgs),
    /// Fixed vs random effects Hausman test.
    Hausman(RunArgs),
    /// Quantile coefficient tables with firm effects and bootstrap errors.
    Qreg(RunArgs),
    /// Speed of adjustment per quantile, overall and per regime.
    Speed(RunArgs),
    /// Generate a synthetic panel with known adjustment speed.
    Simulate(RunArgs),
    /// Every stage in order, with manifest.
    Replicate(RunArgs),
}

#[derive(Args, Debug)]
struct RunArgs {
    /// Key-value configuration file.
    #[arg(long, env = "QRPANEL_CONFIG")]
    config: Option<PathBuf>,
    /// Firm-year panel CSV.
    #[arg(long)]
    input: Option<String>,
    /// Macro series CSV (year, cpi_inflation, gdp_growth).
    #[arg(long = "macro")]
    macro_path: Option<String>,
    /// Tax-rate table CSV (year, rate).
    #[arg(long)]
    tax: Option<String>,
    /// Comma-separated quantiles.
    #[arg(long)]
    theta: Option<String>,
    /// book, market or both.
    #[arg(long)]
    leverage: Option<String>,
    /// Bootstrap replications (0 disables standard errors).
    #[arg(long)]
    bootstrap: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    /// Recession iff GDP growth is below this value.
    #[arg(long)]
    regime_threshold: Option<String>,
    /// Output directory.
    #[arg(long)]
    out: Option<String>,
    /// text, delimited or both.
    #[arg(long)]
    format: Option<String>,
    /// Any other config key, as KEY=VALUE. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

impl RunArgs {
    fn resolve(&self) -> Result<RunConfig> {
        let mut cfg = RunConfig::default();
        if let Some(path) = &self.config {
            cfg.apply_file(path)
                .with_context(|| format!("reading config {}", path.display()))?;
        }
        let flags = [
            ("input", &self.input),
            ("macro", &self.macro_path),
            ("tax", &self.tax),
            ("theta", &self.theta),
            ("leverage", &self.leverage),
            ("bootstrap", &self.bootstrap),
            ("seed", &self.seed),
            ("regime_threshold", &self.regime_threshold),
            ("out", &self.out),
            ("format", &self.format),
        ];
        for (key, value) in flags {
            if let Some(v) = value {
                cfg.set(key, v).with_context(|| format!("--{}", key.replace('_', "-")))?;
            }
        }
        for kv in &self.set {
            let (k, v) = kv
                .split_once('=')
                .with_context(|| format!("--set expects KEY=VALUE, got `{kv}`"))?;
            cfg.set(k, v).with_context(|| format!("--set {kv}"))?;
        }
        Ok(cfg)
    }
}

fn run(cli: Cli) -> Result<()> {
    let (args, stages): (&RunArgs, Option<&[Stage]>) = match &cli.command {
        Command::Ingest(a) => (a, Some(&[Stage::Ingest])),
        Command::Describe(a) => (a, Some(&[Stage::Describe])),
        Command::Correlate(a) => (a, Some(&[Stage::Correlate])),
        Command::Hausman(a) => (a, Some(&[Stage::Hausman])),
        Command::Qreg(a) => (a, Some(&[Stage::Qreg])),
        Command::Speed(a) => (a, Some(&[Stage::Speed])),
        Command::Simulate(a) => (a, Some(&[Stage::Simulate])),
        Command::Replicate(a) => (a, None),
    };
    let cfg = args.resolve()?;
    let summary = match stages {
        Some(s) => run_stages(&cfg, s)?,
        None => run_replicate(&cfg)?,
    };
    for f in &summary.files {
        println!("{}", summary.out_dir.join(f).display());
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
