use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use irsa_lab_cli::config::{env_seed, load_config, parse_override};
use irsa_lab_cli::preset::{execute, find, presets, run_preset, GridPoint, RunOptions};
use irsa_lab_cli::Result;
use toml::Value;

/// Link-level Monte Carlo simulator for grant-free irregular repetition
/// slotted ALOHA with multi-antenna receivers.
#[derive(Debug, Parser)]
#[command(name = "irsa-lab", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate one configuration.
    Run(RunArgs),
    /// Run a named experiment grid.
    Preset(PresetArgs),
    /// List the available presets.
    Presets,
}

#[derive(Debug, Args)]
struct Exec {
    /// Output directory.
    #[arg(long, default_value = "results")]
    out: PathBuf,
    /// Worker threads (defaults to the number of cores).
    #[arg(long)]
    jobs: Option<usize>,
    /// Print a line to stderr as each grid point finishes.
    #[arg(long)]
    progress: bool,
}

#[derive(Debug, Args)]
struct RunArgs {
    /// TOML configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Base name of the output files.
    #[arg(long, default_value = "run")]
    name: String,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    runs: Option<usize>,
    /// Pilot length.
    #[arg(long)]
    tau: Option<usize>,
    /// Load (users per resource block); replaces M.
    #[arg(long = "L")]
    load: Option<f64>,
    /// Number of users; replaces L.
    #[arg(long = "M")]
    users: Option<usize>,
    /// Receive antennas.
    #[arg(long = "N")]
    antennas: Option<usize>,
    /// Resource blocks per frame.
    #[arg(long = "T")]
    rbs: Option<usize>,
    /// Cell-edge SNR in dB.
    #[arg(long)]
    snr: Option<f64>,
    /// Any configuration key, as key=value. Applied after the named flags.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    #[command(flatten)]
    exec: Exec,
}

#[derive(Debug, Args)]
struct PresetArgs {
    name: String,
    #[arg(long, default_value_t = 1000)]
    runs: usize,
    #[arg(long)]
    seed: Option<u64>,
    /// Configuration override applied to every grid point, as key=value.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    #[command(flatten)]
    exec: Exec,
}

impl Exec {
    fn options(&self) -> RunOptions {
        RunOptions {
            out_dir: self.out.clone(),
            jobs: self.jobs.unwrap_or_else(rayon::current_num_threads),
            progress: self.progress,
        }
    }
}

fn overrides(set: &[String]) -> Result<Vec<(String, Value)>> {
    set.iter().map(|s| parse_override(s)).collect()
}

fn run(args: RunArgs) -> Result<Vec<PathBuf>> {
    let mut ov: Vec<(String, Value)> = Vec::new();
    let int = |v: usize| Value::Integer(v as i64);
    if let Some(v) = args.seed {
        ov.push(("seed".into(), Value::Integer(v as i64)));
    }
    if let Some(v) = args.runs {
        ov.push(("runs".into(), int(v)));
    }
    if let Some(v) = args.tau {
        ov.push(("tau".into(), int(v)));
    }
    if let Some(v) = args.load {
        ov.push(("L".into(), Value::Float(v)));
    }
    if let Some(v) = args.users {
        ov.push(("M".into(), int(v)));
    }
    if let Some(v) = args.antennas {
        ov.push(("N".into(), int(v)));
    }
    if let Some(v) = args.rbs {
        ov.push(("T".into(), int(v)));
    }
    if let Some(v) = args.snr {
        ov.push(("cell_edge_snr_db".into(), Value::Float(v)));
    }
    ov.extend(overrides(&args.set)?);
    let config = load_config(args.config.as_deref(), &ov, env_seed()?)?;
    let point = GridPoint {
        coords: Vec::new(),
        config,
    };
    execute(&args.name, &[point], None, &args.exec.options())
}

fn preset(args: PresetArgs) -> Result<Vec<PathBuf>> {
    find(&args.name)?;
    let seed = match args.seed {
        Some(s) => s,
        None => env_seed()?.unwrap_or(1),
    };
    run_preset(&args.name, args.runs, seed, &overrides(&args.set)?, &args.exec.options())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(a) => run(a),
        Command::Preset(a) => preset(a),
        Command::Presets => {
            for p in presets() {
                println!("{:<12} {}", p.name, p.description);
            }
            Ok(Vec::new())
        }
    };
    match result {
        Ok(paths) => {
            for p in paths {
                println!("{}", p.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("irsa-lab: {e}");
            ExitCode::FAILURE
        }
    }
}
