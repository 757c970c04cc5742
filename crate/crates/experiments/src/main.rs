use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use shockrep::config::{Overrides, ScenarioConfig};
use shockrep::run::{self, output_root};
use shockrep::verify::{verify_suite, Tier, VerifyOptions};
use shockrep::{presets, Error};

/// Stochastic replicator dynamics: simulation, analysis and acceptance checks.
#[derive(Parser)]
#[command(name = "shockrep", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Default)]
struct Flags {
    /// Master seed, replacing the scenario's.
    #[arg(long)]
    seed: Option<u64>,
    /// Ensemble size.
    #[arg(long)]
    paths: Option<u64>,
    /// Integrator step.
    #[arg(long)]
    dt: Option<f64>,
    /// Integration horizon.
    #[arg(long)]
    horizon: Option<f64>,
    /// Output root (default: the scenario's `output`, then $SHOCKREP_OUT, then ./runs).
    #[arg(long)]
    out: Option<PathBuf>,
}

impl Flags {
    fn overrides(&self) -> Overrides {
        Overrides {
            seed: self.seed,
            paths: self.paths,
            dt: self.dt,
            horizon: self.horizon,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Integrate path 0 of a scenario and write its trajectory.
    Simulate {
        /// Scenario file, or the name of a bundled preset.
        config: String,
        #[command(flatten)]
        flags: Flags,
    },
    /// Run a scenario's ensemble and analyses.
    Ensemble {
        /// Scenario file, or the name of a bundled preset.
        config: String,
        #[command(flatten)]
        flags: Flags,
    },
    /// Run one analysis on a finished ensemble run.
    Analyze { run_dir: PathBuf, analysis: String },
    /// Run the acceptance suite.
    Verify {
        #[arg(default_value = "fast", value_parser = ["fast", "full"])]
        tier: String,
        /// Only these criteria (comma separated).
        #[arg(long, value_delimiter = ',')]
        only: Option<Vec<u8>>,
        /// Bias the Wiener increments; martingale and survival checks must then fail.
        #[arg(long, hide = true)]
        tamper_rng: bool,
    },
    /// Bundled scenarios.
    Presets {
        #[command(subcommand)]
        action: PresetAction,
    },
}

#[derive(Subcommand)]
enum PresetAction {
    /// List preset names and what they show.
    List,
    /// Print a preset's scenario file.
    Show { name: String },
}

const VALIDATION_FAILURE: u8 = 1;
const ACCEPTANCE_FAILURE: u8 = 2;

fn load(spec: &str, flags: &Flags) -> Result<ScenarioConfig, Error> {
    let path = Path::new(spec);
    let mut config = if path.exists() {
        ScenarioConfig::load(path)?
    } else if presets::names().any(|n| n == spec) {
        presets::preset(spec)?
    } else {
        return Err(Error::Validation(format!(
            "config: `{spec}` is neither a file nor a preset"
        )));
    };
    config.apply(&flags.overrides());
    Ok(config)
}

fn execute(command: Command) -> Result<ExitCode, Error> {
    match command {
        Command::Simulate { config, flags } => {
            let config = load(&config, &flags)?;
            let (dir, m) = run::simulate(&config, &output_root(flags.out.as_deref(), &config))?;
            println!("{}", dir.display());
            for f in &m.files {
                println!("  {}", f.path);
            }
        }
        Command::Ensemble { config, flags } => {
            let config = load(&config, &flags)?;
            let (dir, m) = run::run_scenario(&config, &output_root(flags.out.as_deref(), &config))?;
            println!("{}", dir.display());
            for f in &m.files {
                println!("  {}", f.path);
            }
        }
        Command::Analyze { run_dir, analysis } => {
            let report = run::analyze(&run_dir, &analysis)?;
            println!("{}", serde_json::to_string_pretty(&report)?);
        }
        Command::Verify { tier, only, tamper_rng } => {
            let opts = VerifyOptions {
                tier: tier.parse::<Tier>()?,
                tamper: tamper_rng,
                only,
            };
            let report = verify_suite(&opts, |c| println!("{c}"));
            println!(
                "{} of {} criteria passed",
                report.criteria.iter().filter(|c| c.passed).count(),
                report.criteria.len()
            );
            if !report.passed() {
                return Ok(ExitCode::from(ACCEPTANCE_FAILURE));
            }
        }
        Command::Presets { action } => match action {
            PresetAction::List => {
                for name in presets::names() {
                    let c = presets::preset(name)?;
                    println!("{name:<26} {}", c.description.unwrap_or_default());
                }
            }
            PresetAction::Show { name } => {
                let (_, text) = presets::PRESETS
                    .iter()
                    .find(|p| p.0 == name)
                    .ok_or_else(|| Error::Validation(format!("no preset named `{name}`")))?;
                print!("{text}");
            }
        },
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(VALIDATION_FAILURE)
        }
    }
}
