use std::io;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use fsibo_cli::asktell::{run_asktell, AskTellOutcome};
use fsibo_cli::config::{preset, PRESETS};
use fsibo_cli::output::PersistedState;
use fsibo_cli::plots::emit_plots;
use fsibo_cli::run::{run_auto, RunOptions, RunOutcome};
use fsibo_cli::{load_config, CliError};

/// Constrained Bayesian optimization campaigns over coupled simulations.
#[derive(Parser)]
#[command(name = "fsibo", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a campaign against the built-in testbed.
    Run {
        /// Campaign document (TOML).
        config: PathBuf,
        /// Output directory; overrides `output.dir`.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Continue from the state in the output directory.
        #[arg(long)]
        resume: bool,
        /// Pause after this many evaluations.
        #[arg(long)]
        stop_after: Option<usize>,
    },
    /// Exchange proposals and observations with an external evaluator over stdin/stdout.
    AskTell {
        /// Campaign document (TOML).
        config: PathBuf,
        /// State file, created if missing and resumed otherwise.
        #[arg(long)]
        state: PathBuf,
    },
    /// Write surrogate and acquisition plot data from a state file.
    Plots {
        /// State file written by `run` or `ask-tell`.
        state: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// List the shipped presets, or print one.
    Presets { name: Option<String> },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("fsibo: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn execute(command: Command) -> Result<(), CliError> {
    match command {
        Command::Run {
            config,
            out,
            resume,
            stop_after,
        } => {
            let campaign = load_config(&config)?;
            let opts = RunOptions {
                out_dir: out,
                resume,
                stop_after,
            };
            match run_auto(&campaign, &opts)? {
                RunOutcome::Finished(s) => {
                    let best = match (&s.best_objective, &s.best_x) {
                        (Some(f), Some(x)) => format!("best {} at {:?}", f, x),
                        _ => "no feasible point".to_string(),
                    };
                    println!(
                        "stopped ({}) after {} evaluations, {} proposals: {best}",
                        s.stop_reason, s.evaluations, s.proposals
                    );
                }
                RunOutcome::Paused { evaluations } => println!("paused after {evaluations} evaluations"),
            }
            Ok(())
        }
        Command::AskTell { config, state } => {
            let campaign = load_config(&config)?;
            let stdin = io::stdin();
            match run_asktell(&campaign, &state, stdin.lock(), io::stdout())? {
                AskTellOutcome::Finished(reason) => log::info!("campaign finished: {reason}"),
                AskTellOutcome::Paused { evaluations } => {
                    log::info!("input closed after {evaluations} evaluations; state saved")
                }
            }
            Ok(())
        }
        Command::Plots { state, out } => {
            let persisted = PersistedState::load(&state)?;
            let written = emit_plots(&persisted.campaign, &persisted.names, &out, "state")?;
            for p in written {
                println!("{}", p.display());
            }
            Ok(())
        }
        Command::Presets { name } => {
            match name {
                None => PRESETS.iter().for_each(|(n, _)| println!("{n}")),
                Some(n) => {
                    let text = preset(&n).ok_or_else(|| CliError::Config(format!("no preset named `{n}`")))?;
                    print!("{text}");
                }
            }
            Ok(())
        }
    }
}
