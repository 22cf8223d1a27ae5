use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use equilibria_cli::check::oracle_check;
use equilibria_cli::output::Bundle;
use equilibria_cli::run::run_scenario;
use equilibria_cli::sweep::run_sweep;
use equilibria_cli::{CliError, CliResult, Overrides, ScenarioConfig, SweepParameter};
use equilibria_core::model::Regime;
use equilibria_core::oracle::BatteryOptions;

#[derive(Parser)]
#[command(name = "equilibria", version, about = "Equilibrium returns with price impact and transaction costs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the requested regimes and write paths and a summary.
    Run {
        #[command(flatten)]
        common: Common,
        #[arg(long, env = "EQUILIBRIA_OUT")]
        out: PathBuf,
    },
    /// Repeat the run summary over a range of one parameter.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum)]
        parameter: SweepParameter,
        /// Comma-separated values; defaults to the matching sweep in the config.
        #[arg(long, value_delimiter = ',')]
        values: Option<Vec<f64>>,
        #[arg(long, env = "EQUILIBRIA_OUT")]
        out: PathBuf,
    },
    /// Compare closed forms with the brute-force oracles.
    OracleCheck {
        #[command(flatten)]
        common: Common,
        /// Also run a randomized battery of this many scenarios.
        #[arg(long)]
        battery: Option<usize>,
        #[arg(long, env = "EQUILIBRIA_OUT")]
        out: Option<PathBuf>,
    },
    /// Print an example config.
    PrintConfigTemplate,
}

#[derive(Args)]
struct Common {
    #[arg(long, env = "EQUILIBRIA_CONFIG")]
    config: PathBuf,
    #[arg(long, env = "EQUILIBRIA_SEED")]
    seed: Option<u64>,
    /// Overrides the number of grid steps K.
    #[arg(long, env = "EQUILIBRIA_GRID_STEPS")]
    grid_steps: Option<usize>,
    /// Comma-separated regime names.
    #[arg(long, env = "EQUILIBRIA_REGIMES", value_delimiter = ',', value_parser = parse_regime)]
    regimes: Option<Vec<Regime>>,
    #[arg(long, env = "EQUILIBRIA_MC_PATHS")]
    mc_paths: Option<usize>,
}

fn parse_regime(name: &str) -> Result<Regime, String> {
    Regime::from_name(name).ok_or_else(|| {
        let names: Vec<&str> = Regime::ALL.iter().map(|r| r.name()).collect();
        format!("unknown regime {name}; expected one of {}", names.join(", "))
    })
}

impl Common {
    fn load(&self) -> CliResult<ScenarioConfig> {
        let mut config = ScenarioConfig::load(&self.config)?;
        config.apply(&Overrides {
            seed: self.seed,
            grid_steps: self.grid_steps,
            regimes: self.regimes.clone(),
            mc_paths: self.mc_paths,
        });
        Ok(config)
    }
}

fn execute(command: Command) -> CliResult<()> {
    match command {
        Command::Run { common, out } => {
            let report = run_scenario(&common.load()?, &out)?;
            println!(
                "{} regimes, max clearing violation {:e}, output in {}",
                report.regimes.len(),
                report.max_clearing_violation,
                out.display()
            );
        }
        Command::Sweep {
            common,
            parameter,
            values,
            out,
        } => {
            let config = common.load()?;
            let values = match values {
                Some(v) => v,
                None => config
                    .run
                    .sweeps
                    .iter()
                    .find(|s| s.parameter == parameter)
                    .map(|s| s.values.clone())
                    .ok_or_else(|| CliError::Validation(format!("no values given for {}", parameter.name())))?,
            };
            let report = run_sweep(&config, parameter, &values, &out)?;
            for (column, slope) in &report.slopes {
                println!("{column}: log-log slope {slope:.4}");
            }
        }
        Command::OracleCheck { common, battery, out } => {
            let config = common.load()?;
            let options = battery.map(|count| BatteryOptions {
                count,
                seed: config.run.seed.unwrap_or(BatteryOptions::default().seed),
                ..BatteryOptions::default()
            });
            let report = oracle_check(&config, options)?;
            if let Some(out) = out {
                let mut bundle = Bundle::default();
                bundle.add_json("oracle.json", &report);
                bundle.write(&out)?;
            }
            println!("{}", serde_json::to_string_pretty(&report).expect("report serializes"));
            if !report.passed {
                return Err(CliError::OracleMismatch(report.failures.join("; ")));
            }
        }
        Command::PrintConfigTemplate => print!("{}", ScenarioConfig::template().to_toml()),
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let started = Instant::now();
    let outcome = execute(cli.command);
    eprintln!("finished in {:.3} s", started.elapsed().as_secs_f64());
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(err.exit_code() as u8)
        }
    }
}
