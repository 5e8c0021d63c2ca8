mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde_json::json;

use crate::commands::RunContext;
use crate::config::ExperimentConfig;
use crate::output::Output;

#[derive(Parser, Debug)]
#[command(name = "nls-msol", version, about = "Multi-soliton construction lab for supercritical 1D NLS")]
struct Cli {
    /// JSON experiment config; the two-soliton reference scenario when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory; overrides `output_dir` from the config.
    #[arg(long, global = true)]
    output: Option<PathBuf>,
    /// Worker threads for parallel stages.
    #[arg(long, global = true, env = "NLS_MSOL_THREADS")]
    threads: Option<usize>,
    #[arg(long, short, global = true)]
    verbose: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Ground-state profiles for each configured frequency.
    GroundState,
    /// Unstable eigenpair, decay rate and eigenvalue scaling table.
    Spectrum,
    /// Forward evolution of the (perturbed) soliton sum from t0 to Sn.
    Evolve,
    /// Base multi-soliton and the perturbed family.
    Construct,
    /// Diagnostic suite for a stored trajectory pair.
    Diagnose {
        /// Trajectory directory of the solution under study.
        #[arg(long)]
        u: PathBuf,
        /// Trajectory directory of the reference solution.
        #[arg(long)]
        phi: PathBuf,
        /// Soliton index (0-based) whose eigenmode tail is subtracted.
        #[arg(long, requires = "amplitude")]
        j: Option<usize>,
        #[arg(long, requires = "j")]
        amplitude: Option<f64>,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::GroundState => "ground-state",
            Command::Spectrum => "spectrum",
            Command::Evolve => "evolve",
            Command::Construct => "construct",
            Command::Diagnose { .. } => "diagnose",
        }
    }
}

/// 2 for bad inputs, 3 when the numerics fail.
fn exit_code(err: &anyhow::Error) -> u8 {
    let numerical = err.chain().any(|e| e.downcast_ref::<nls_msol::Error>().is_some_and(|e| e.is_numerical()));
    if numerical {
        3
    } else {
        2
    }
}

fn run(cli: &Cli) -> anyhow::Result<()> {
    if let Some(n) = cli.threads {
        if n == 0 {
            anyhow::bail!("--threads must be at least 1");
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    let cfg = match &cli.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    let dir = cli
        .output
        .clone()
        .or_else(|| cfg.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from("nls-msol-out"));
    let (spectrum, constants) = commands::prepare(&cfg)?;
    let out = Output::create(dir, cfg.hash(), constants)?;
    std::fs::write(out.path("config.json"), serde_json::to_string_pretty(&cfg)? + "\n")?;
    let ctx = RunContext { cfg: &cfg, spectrum, out, verbose: cli.verbose };
    match &cli.command {
        Command::GroundState => commands::ground_state_cmd(&ctx),
        Command::Spectrum => commands::spectrum_cmd(&ctx),
        Command::Evolve => commands::evolve_cmd(&ctx),
        Command::Construct => commands::construct_cmd(&ctx),
        Command::Diagnose { u, phi, j, amplitude } => {
            commands::diagnose_cmd(&ctx, u, phi, j.zip(*amplitude))
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            let code = exit_code(&err);
            let kind = if code == 3 { "numerical" } else { "validation" };
            let report = json!({
                "error": {
                    "command": cli.command.name(),
                    "kind": kind,
                    "exit_code": code,
                    "message": format!("{err:#}"),
                }
            });
            eprintln!("{report}");
            ExitCode::from(code)
        }
    }
}
