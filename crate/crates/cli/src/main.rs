//! `bosecycles`: cycle statistics of Bose gases from a TOML run configuration.

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::RunConfig;
use output::{sha256_json, write_json, Manifest, CODE_HASH, SCHEMA_VERSION};

#[derive(Debug)]
pub enum CliError {
    /// Bad configuration or arguments (exit 2).
    Config(String),
    /// A numeric contract failed (exit 3).
    Contract(String),
    /// Non-ergodic sampler under `--strict` (exit 4).
    NonErgodic(String),
    /// File system or serialization failure (exit 1).
    Io(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Io(_) => 1,
            CliError::Config(_) => 2,
            CliError::Contract(_) => 3,
            CliError::NonErgodic(_) => 4,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "configuration error: {m}"),
            CliError::Contract(m) => write!(f, "contract violation: {m}"),
            CliError::NonErgodic(m) => write!(f, "non-ergodic run: {m}"),
            CliError::Io(m) => write!(f, "i/o error: {m}"),
        }
    }
}

impl From<bosecycles::Error> for CliError {
    fn from(e: bosecycles::Error) -> Self {
        use bosecycles::Error as E;
        match e {
            E::Contract(_) => CliError::Contract(e.to_string()),
            E::InvalidArgument(_) | E::Domain(_) | E::Unsupported(_) => CliError::Config(e.to_string()),
            _ => CliError::Io(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

#[derive(Debug, Parser)]
#[command(name = "bosecycles", version, about = "Cycle statistics of ideal and interacting Bose gases")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// TOML run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory (default: the configured `out`, else the current directory).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// `KEY=VALUE` with dotted keys, applied after the file is read.
    #[arg(long = "override", value_name = "KEY=VALUE", global = true)]
    overrides: Vec<String>,
    /// Treat sampler warnings about ergodicity as errors.
    #[arg(long, global = true)]
    strict: bool,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Exact canonical cycle densities of the ideal gas at each box side.
    IdealCycles,
    /// Off-diagonal correlation split into short and long cycles.
    Odlro,
    /// Condensate density against the thermodynamic reference.
    Condensate,
    /// Grand-canonical pressure, density and free energy over a grid of mu.
    Grand,
    /// Path-integral Monte Carlo of the interacting gas.
    Pimc {
        /// Continue from a checkpoint written by an earlier run of the same configuration.
        #[arg(long)]
        resume: Option<PathBuf>,
        /// Stop once this many sweeps are done, leaving a checkpoint.
        #[arg(long, value_name = "SWEEPS")]
        stop_after: Option<u64>,
    },
    /// Convergence criterion of the winding-loop cluster expansion.
    ClusterCheck,
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::IdealCycles => "ideal-cycles",
            Command::Odlro => "odlro",
            Command::Condensate => "condensate",
            Command::Grand => "grand",
            Command::Pimc { .. } => "pimc",
            Command::ClusterCheck => "cluster-check",
        }
    }
}

fn run(cli: &Cli) -> Result<(), CliError> {
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| CliError::Config("--config is required".into()))?;
    let mut overrides = cli.overrides.clone();
    if let Some(seed) = cli.seed {
        overrides.push(format!("seed={seed}"));
    }
    let mut config = RunConfig::load(path, &overrides)?;
    if let Some(out) = &cli.out {
        config.out = Some(out.clone());
    }
    let out = config.out.clone().unwrap_or_else(|| PathBuf::from("."));
    std::fs::create_dir_all(&out)?;
    log::info!("{} -> {}", cli.command.name(), out.display());

    let outcome = match &cli.command {
        Command::IdealCycles => commands::ideal_cycles(&config, &out),
        Command::Odlro => commands::odlro(&config, &out),
        Command::Condensate => commands::condensate(&config, &out),
        Command::Grand => commands::grand(&config, &out),
        Command::Pimc { resume, stop_after } => commands::pimc(&config, &out, resume.as_deref(), *stop_after),
        Command::ClusterCheck => commands::cluster_check(&config, &out),
    }?;

    let failure = if let Some(v) = &outcome.violation {
        Some(CliError::Contract(v.clone()))
    } else if cli.strict && outcome.non_ergodic {
        Some(CliError::NonErgodic("permutation moves were never accepted".into()))
    } else {
        None
    };
    for w in &outcome.warnings {
        log::warn!("{w}");
    }
    let manifest_path = out.join("manifest.json");
    let manifest = Manifest {
        command: cli.command.name(),
        version: env!("CARGO_PKG_VERSION"),
        code_hash: CODE_HASH,
        schema_version: SCHEMA_VERSION,
        config_sha256: sha256_json(&config),
        config: &config,
        outputs: outcome
            .outputs
            .iter()
            .filter_map(|p| p.file_name().map(|n| n.to_string_lossy().into_owned()))
            .collect(),
        warnings: outcome.warnings.clone(),
        exit_code: failure.as_ref().map_or(0, |e| e.exit_code() as i32),
        summary: &outcome.summary,
    };
    write_json(&manifest_path, &manifest)?;
    match failure {
        Some(e) => Err(e),
        None => Ok(()),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("bosecycles: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
