//! `klcyl`: gradient flows, level-set profiles, classification, envelopes and
//! cylinder charts from the command line.

mod cmd;
mod config;
mod context;
mod output;

use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::RunConfig;
use context::{load_field, Context};

#[derive(Parser, Debug)]
#[command(name = "klcyl", version, about = "Gradient flows and mapping cylinder charts of nonnegative fields")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Zoo name or field definition file
    #[arg(long, global = true)]
    field: Option<String>,
    /// TOML run configuration
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads (default: all cores)
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Sample budget
    #[arg(long, global = true)]
    budget: Option<usize>,
}

#[derive(Subcommand, Debug, Clone, Copy)]
enum Command {
    /// Integrate descending trajectories and write them as CSV
    Flow,
    /// Limit points of the flow on the zero locus
    Retract,
    /// Gradient extrema on geometric levels
    Levelset,
    /// Good / bad / ugly classification of a boundary point
    Classify,
    /// Fit, build or verify a desingularizing function
    Desing,
    /// Continuous one-sided envelope of a semicontinuous profile
    Envelope,
    /// Transversal hypersurface and cylinder coordinates
    Cylinder,
}

/// Error carrying its process exit code.
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

impl Failure {
    pub fn usage(message: impl Into<String>) -> Self {
        Failure { code: 2, message: message.into() }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for Failure {}

fn context(cli: &Cli) -> anyhow::Result<Context> {
    let cfg = match &cli.config {
        Some(p) => RunConfig::load(p).map_err(|e| Failure::usage(format!("{e:#}")))?,
        None => RunConfig::default(),
    };
    let field = cli
        .field
        .clone()
        .or_else(|| cfg.field.clone())
        .ok_or_else(|| Failure::usage("no field given (--field or `field` in the config)"))?;
    let entry = load_field(&field)?;
    if let Some(w) = cli.workers.or(cfg.workers) {
        rayon::ThreadPoolBuilder::new().num_threads(w.max(1)).build_global().ok();
    }
    Ok(Context {
        entry,
        seed: cli.seed.or(cfg.seed).unwrap_or(0),
        out: cli.out.clone().or_else(|| cfg.out.clone()).unwrap_or_else(|| PathBuf::from("klcyl-out")),
        budget: cli.budget.or(cfg.budget),
        controls: cfg.controls.resolve(),
        cfg,
    })
}

fn run(cli: &Cli) -> anyhow::Result<u8> {
    let ctx = context(cli)?;
    match cli.command {
        Command::Flow => cmd::flow::run(&ctx),
        Command::Retract => cmd::retract::run(&ctx),
        Command::Levelset => cmd::levelset::run(&ctx),
        Command::Classify => cmd::classify::run(&ctx),
        Command::Desing => cmd::desing::run(&ctx),
        Command::Envelope => cmd::envelope::run(&ctx),
        Command::Cylinder => cmd::cylinder::run(&ctx),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            let code = e.downcast_ref::<Failure>().map_or(2, |f| f.code);
            eprintln!("klcyl: {e:#}");
            ExitCode::from(code)
        }
    }
}
