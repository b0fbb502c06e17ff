use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use slowfast_cli::config::{parse_with_overrides, ExperimentConfig};
use slowfast_cli::output::{write_diagnostics, Artifacts};
use slowfast_cli::plot::{emit_plot_data, PlotKind};
use slowfast_cli::{commands, CliError};

#[derive(Parser)]
#[command(name = "slowfast", version, about = "Slow-fast jump-diffusion experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct RunArgs {
    /// TOML experiment file; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Leaf override, e.g. `integrator.epsilon=0.001`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Check the model's structural conditions.
    Validate(RunArgs),
    /// Integrate the coupled system.
    Simulate(RunArgs),
    /// Estimate the frozen invariant law.
    Invariant(RunArgs),
    /// Estimate the averaged drift and the mixing decay.
    Abar(RunArgs),
    /// Solve the averaged equation.
    Averaged(RunArgs),
    /// Auxiliary-process deviations over an epsilon grid.
    Khasminskii(RunArgs),
    /// Solve the skeleton equation for constant controls.
    Skeleton(RunArgs),
    /// Evaluate the rate function of a target path.
    Rate(RunArgs),
    /// Monte Carlo sweep of deviation probabilities.
    MdpSweep(RunArgs),
    /// Turn a CSV artifact into gnuplot data.
    Plot {
        #[arg(long)]
        artifact: PathBuf,
        #[arg(long, value_enum)]
        kind: PlotKind,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Print the default configuration.
    DefaultConfig,
}

fn load(args: &RunArgs) -> Result<(ExperimentConfig, PathBuf), CliError> {
    let text = match &args.config {
        Some(p) => std::fs::read_to_string(p)?,
        None => String::new(),
    };
    let mut overrides = args.overrides.clone();
    if let Some(seed) = args.seed {
        overrides.push(format!("integrator.seed={seed}"));
    }
    let cfg = parse_with_overrides(&text, &overrides)?;
    let dir = args.out.clone().unwrap_or_else(|| PathBuf::from(&cfg.outputs.dir));
    Ok((cfg, dir))
}

fn execute(name: &str, args: &RunArgs) -> Result<(), CliError> {
    let (cfg, dir) = load(args)?;
    let mut art = Artifacts::default();
    let summary = match commands::run(name, &cfg, &mut art) {
        Ok(s) => s,
        Err(e) => {
            if e.exit_code() == 3 {
                if let Ok(p) = write_diagnostics(&dir, name, &e) {
                    eprintln!("diagnostics written to {}", p.display());
                }
            }
            return Err(e);
        }
    };
    let manifest = art.commit(&dir, name, &cfg)?;
    print!("{summary}");
    for w in &manifest.warnings {
        eprintln!("warning: {w}");
    }
    println!("wrote {} (manifest sha256:{})", dir.display(), manifest.config_hash);
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Validate(a) => execute("validate", a),
        Command::Simulate(a) => execute("simulate", a),
        Command::Invariant(a) => execute("invariant", a),
        Command::Abar(a) => execute("abar", a),
        Command::Averaged(a) => execute("averaged", a),
        Command::Khasminskii(a) => execute("khasminskii", a),
        Command::Skeleton(a) => execute("skeleton", a),
        Command::Rate(a) => execute("rate", a),
        Command::MdpSweep(a) => execute("mdp-sweep", a),
        Command::Plot { artifact, kind, out } => emit_plot_data(artifact, *kind, out).map(|(dat, gp)| {
            println!("wrote {} and {}", dat.display(), gp.display());
        }),
        Command::DefaultConfig => {
            print!("{}", ExperimentConfig::default().to_toml());
            Ok(())
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
