//! The `ecoach` command line.
//!
//! Exit codes: 0 success, 1 usage or validation error, 2 suite failure.

use std::ffi::OsString;
use std::io::Write;
use std::net::SocketAddr;
use std::path::PathBuf;

use clap::error::ErrorKind;
use clap::{CommandFactory, Parser, Subcommand};
use ecoach_core::solvers::{value_iteration, THEOREM_TOL};

use crate::config::{preset_names, ExperimentConfig};
use crate::experiment::{optimal_episode_reward, run_experiment, write_csv, write_csv_to};
use crate::suites::{run_theorem_suite, Suite, SuiteOptions};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INVALID: i32 = 1;
pub const EXIT_SUITE_FAILED: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "ecoach", version, about = "Train feedback-driven agents and check their theory")]
#[command(arg_required_else_help = true)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train agents as described by a config file or preset.
    Run {
        /// Path to a TOML config, or a preset name (see `presets`).
        #[arg(long)]
        config: String,
        /// Master seed; overrides the config.
        #[arg(long)]
        seed: Option<u64>,
        /// CSV destination; overrides the config. Standard output if neither is set.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a theorem suite and print its report.
    Suite {
        /// gradient-identity, theorem2-bound, policy-feedback-equivalence,
        /// advantage-identities or coach-counterexample.
        name: String,
        #[arg(long)]
        trials: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Monte-Carlo or training episodes, where the suite uses them.
        #[arg(long)]
        episodes: Option<usize>,
        /// Also write the report here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print optimal values and the greedy policy for a config's environment.
    Solve {
        #[arg(long)]
        config: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Start the live training service.
    Serve {
        #[arg(long, default_value = "127.0.0.1:8080")]
        addr: SocketAddr,
        /// Seeds session ids and default session seeds.
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// List the built-in config presets.
    Presets,
}

/// Parses `args` and runs the command; returns the process exit code.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = write!(stdout, "{e}");
                    EXIT_OK
                }
                ErrorKind::DisplayHelpOnMissingArgumentOrSubcommand => {
                    let _ = write!(stderr, "{e}");
                    EXIT_INVALID
                }
                _ => {
                    let _ = write!(stderr, "{e}\n{}", Cli::command().render_help());
                    EXIT_INVALID
                }
            };
        }
    };
    match execute(cli.command, stdout) {
        Ok(code) => code,
        Err(msg) => {
            let _ = writeln!(stderr, "error: {msg}");
            EXIT_INVALID
        }
    }
}

fn execute(command: Command, stdout: &mut dyn Write) -> Result<i32, String> {
    match command {
        Command::Run { config, seed, out } => {
            let mut cfg = ExperimentConfig::load(&config).map_err(|e| e.to_string())?;
            if let Some(seed) = seed {
                cfg.run.master_seed = seed;
            }
            let metrics = run_experiment(&cfg).map_err(|e| e.to_string())?;
            match out.or(cfg.run.output.clone()) {
                Some(path) => {
                    write_csv(&metrics, &path).map_err(|e| e.to_string())?;
                    let optimum = optimal_episode_reward(&cfg.env.build().map_err(|e| e.to_string())?, cfg.run.step_cap);
                    writeln!(
                        stdout,
                        "wrote {} rows to {}; final-20 mean reward {:.4} (optimum {:.4})",
                        metrics.records.len(),
                        path.display(),
                        metrics.final_mean_reward(20),
                        optimum
                    )
                    .map_err(|e| e.to_string())?;
                }
                None => write_csv_to(&metrics, &mut *stdout).map_err(|e| e.to_string())?,
            }
            Ok(EXIT_OK)
        }
        Command::Suite {
            name,
            trials,
            seed,
            episodes,
            out,
        } => {
            let suite: Suite = name.parse().map_err(|e: crate::suites::SuiteError| e.to_string())?;
            let opts = SuiteOptions {
                trials: trials.unwrap_or(suite.default_trials()),
                seed,
                episodes,
            };
            let report = run_theorem_suite(suite, &opts).map_err(|e| e.to_string())?;
            write!(stdout, "{report}").map_err(|e| e.to_string())?;
            if let Some(path) = out {
                std::fs::write(&path, report.to_string()).map_err(|e| format!("{}: {e}", path.display()))?;
            }
            Ok(if report.passed() { EXIT_OK } else { EXIT_SUITE_FAILED })
        }
        Command::Solve { config, out } => {
            let cfg = ExperimentConfig::load(&config).map_err(|e| e.to_string())?;
            let mdp = cfg.env.build().map_err(|e| e.to_string())?;
            let sol = value_iteration(&mdp, THEOREM_TOL);
            let mut text = String::from("state,value,action\n");
            for s in mdp.states() {
                text.push_str(&format!("{},{:.16e},{}\n", s.0, sol.values.get(s), sol.policy.action(s).0));
            }
            match out {
                Some(path) => std::fs::write(&path, &text).map_err(|e| format!("{}: {e}", path.display()))?,
                None => write!(stdout, "{text}").map_err(|e| e.to_string())?,
            }
            Ok(EXIT_OK)
        }
        Command::Serve { addr, seed } => {
            ecoach_service::serve_blocking(addr, seed).map_err(|e| format!("{addr}: {e}"))?;
            Ok(EXIT_OK)
        }
        Command::Presets => {
            for name in preset_names() {
                writeln!(stdout, "{name}").map_err(|e| e.to_string())?;
            }
            Ok(EXIT_OK)
        }
    }
}
