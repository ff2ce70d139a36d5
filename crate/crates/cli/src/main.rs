use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use sleeve_cli::fit::run_fit;
use sleeve_cli::plant_demo::{run_plant_demo, write_trace};
use sleeve_cli::server::{serve, ServeOptions};
use sleeve_cli::session::{load_task, run_session, to_json, TeacherChoice};
use sleeve_cli::{CliError, Config};
use sleeve_core::Seed;

/// Tools for the pneumatic uncertainty-display simulator.
///
/// Every option can also be set through an environment variable named
/// `HAPTIC_<OPTION>`, e.g. `HAPTIC_SEED=3`.
#[derive(Debug, Parser)]
#[command(name = "sleeve", version)]
struct Cli {
    /// JSON configuration file (learner, plant, controller, perception, telemetry).
    #[arg(long, global = true, env = "HAPTIC_CONFIG")]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Fit psychometric curves to response files and report JNDs.
    Fit {
        /// Reference pressure, psi.
        #[arg(long = "ref", env = "HAPTIC_REF", default_value_t = 2.0)]
        reference: f64,
        /// Directory for curve CSVs, the plot and report.json.
        #[arg(long, env = "HAPTIC_OUT")]
        out: Option<PathBuf>,
        /// Trial-ledger or tally CSV files, one per subject.
        #[arg(required = true)]
        files: Vec<PathBuf>,
    },
    /// Run one teaching session headless and print its report.
    Session {
        /// Task file, or bundled:cleaning / bundled:shelving.
        #[arg(long, env = "HAPTIC_TASK")]
        task: PathBuf,
        #[arg(long, env = "HAPTIC_SEED", default_value_t = 0)]
        seed: u64,
        /// oracle, oracle:full, oracle:<segment>, script:<file> or feedback.
        #[arg(long, env = "HAPTIC_TEACHER", default_value = "oracle")]
        teacher: TeacherChoice,
        /// Directory for the frame trace, demonstrations and checkpoint.
        #[arg(long, env = "HAPTIC_OUT")]
        out: Option<PathBuf>,
    },
    /// Serve the live session to an operator console over WebSocket.
    Serve {
        #[arg(long, env = "HAPTIC_BIND", default_value = "127.0.0.1:8765")]
        bind: String,
        #[arg(long, env = "HAPTIC_TASK")]
        task: PathBuf,
        #[arg(long, env = "HAPTIC_SEED", default_value_t = 0)]
        seed: u64,
        /// Where to write the perception-trial ledger once all trials are answered.
        #[arg(long, env = "HAPTIC_LEDGER")]
        ledger: Option<PathBuf>,
    },
    /// Step the display to a setpoint and print the pressure trace.
    PlantDemo {
        #[arg(long, env = "HAPTIC_SETPOINT")]
        setpoint: f64,
        #[arg(long, env = "HAPTIC_DURATION", default_value_t = 5.0)]
        duration: f64,
        #[arg(long, env = "HAPTIC_SEED", default_value_t = 0)]
        seed: u64,
        /// Disable sensor noise.
        #[arg(long, env = "HAPTIC_NOISELESS")]
        noiseless: bool,
        /// Trace CSV path; without it the trace goes to stdout.
        #[arg(long, env = "HAPTIC_OUT")]
        out: Option<PathBuf>,
    },
}

fn json<T: serde::Serialize>(value: &T) -> Result<String, CliError> {
    Ok(serde_json::to_string_pretty(value)?)
}

fn run(cli: Cli) -> Result<(), CliError> {
    let mut config = Config::load(cli.config.as_deref())?;
    match cli.command {
        Command::Fit { reference, out, files } => {
            let report = run_fit(&files, reference, out.as_deref())?;
            println!("{}", json(&report)?);
        }
        Command::Session { task, seed, teacher, out } => {
            let output = run_session(&task, &config, &teacher, seed, out.as_deref())?;
            println!("{}", to_json(&output)?);
            if output.report.fault.is_some() {
                return Err(CliError::new("fault", output.report.fault.unwrap_or_default()));
            }
        }
        Command::Serve { bind, task, seed, ledger } => {
            let task = load_task(&task)?;
            if ledger.is_some() {
                config.perception.ledger_path = ledger;
            }
            let runtime = tokio::runtime::Runtime::new()?;
            runtime.block_on(async move {
                let listener = tokio::net::TcpListener::bind(&bind)
                    .await
                    .map_err(|e| CliError::new("io", format!("cannot bind {bind}: {e}")))?;
                eprintln!("training the initial learner...");
                let addr = listener.local_addr()?;
                let opts = ServeOptions {
                    task,
                    config,
                    seed: Seed(seed),
                };
                let ready = async move {
                    eprintln!("listening on ws://{addr}/");
                    let _ = tokio::signal::ctrl_c().await;
                    eprintln!("shutting down");
                };
                serve(listener, opts, ready).await
            })?;
        }
        Command::PlantDemo {
            setpoint,
            duration,
            seed,
            noiseless,
            out,
        } => {
            let (rows, summary) = run_plant_demo(&config, setpoint, duration, noiseless, seed)?;
            match out {
                Some(path) => {
                    write_trace(&rows, &path)?;
                    println!("{}", json(&summary)?);
                }
                None => {
                    sleeve_core::plant::write_trace_csv(&rows, std::io::stdout().lock())?;
                    eprintln!("{}", json(&summary)?);
                }
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::FAILURE
        }
    }
}
