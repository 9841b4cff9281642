//! `lifelab` — experiment runner for the Game-of-Life side-effect lab.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use lifelab_cli::{commands, CliError};

#[derive(Parser)]
#[command(name = "lifelab", about = "Side-effect-aware RL lab on Game-of-Life worlds")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate level files for a task.
    Gen {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Repeated key=value config overrides.
        #[arg(long = "set", value_parser = commands::parse_set)]
        sets: Vec<(String, String)>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1)]
        count: u32,
        #[arg(long, default_value = "levels")]
        out: PathBuf,
    },
    /// Run the configured experiment (all seeds).
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long = "set", value_parser = commands::parse_set)]
        sets: Vec<(String, String)>,
    },
    /// Greedy-evaluate a policy snapshot on held-out rollouts.
    Eval {
        #[arg(long)]
        config: PathBuf,
        #[arg(long = "set", value_parser = commands::parse_set)]
        sets: Vec<(String, String)>,
        #[arg(long)]
        snapshot: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 4)]
        episodes: u64,
    },
    /// Side-effect score between two board files.
    Score {
        initial: PathBuf,
        r#final: PathBuf,
        #[arg(long, default_value_t = 0)]
        steps: u32,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 0.0)]
        spawn_prob: f64,
    },
    /// Replay a policy snapshot as text frames.
    Render {
        #[arg(long)]
        config: PathBuf,
        #[arg(long = "set", value_parser = commands::parse_set)]
        sets: Vec<(String, String)>,
        #[arg(long)]
        snapshot: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 0)]
        env_index: u64,
        #[arg(long, default_value_t = 200)]
        max_frames: u32,
    },
    /// Verify the communicability bound on random deterministic MDPs.
    VerifyProp1 {
        #[arg(long, default_value_t = 50)]
        mdps: u32,
        #[arg(long, default_value_t = 12)]
        max_states: usize,
        #[arg(long, default_value_t = 4)]
        max_actions: usize,
        #[arg(long, default_value_t = 100)]
        samples: usize,
        #[arg(long, value_delimiter = ',', default_values_t = [0.5, 0.9, 0.97])]
        gammas: Vec<f64>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1e-6)]
        tol: f64,
    },
    /// Measure automaton throughput.
    Bench {
        #[arg(long, default_value_t = 350)]
        width: usize,
        #[arg(long, default_value_t = 350)]
        height: usize,
        #[arg(long, default_value_t = 200)]
        steps: u32,
        #[arg(long, default_value_t = 0.3)]
        life_density: f64,
    },
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Gen { config, sets, seed, count, out } => {
            let cfg = commands::read_config(config.as_ref(), &sets)?;
            commands::cmd_gen(&cfg, seed, count, &out)
        }
        Command::Train { config, sets } => {
            let cfg = commands::read_config(Some(&config), &sets)?;
            commands::cmd_train(&cfg)
        }
        Command::Eval { config, sets, snapshot, seed, episodes } => {
            let cfg = commands::read_config(Some(&config), &sets)?;
            commands::cmd_eval(&cfg, &snapshot, seed, episodes)
        }
        Command::Score { initial, r#final, steps, seed, spawn_prob } => {
            commands::cmd_score(&initial, &r#final, steps, seed, spawn_prob)
        }
        Command::Render { config, sets, snapshot, seed, env_index, max_frames } => {
            let cfg = commands::read_config(Some(&config), &sets)?;
            commands::cmd_render(&cfg, &snapshot, seed, env_index, max_frames)
        }
        Command::VerifyProp1 { mdps, max_states, max_actions, samples, gammas, seed, tol } => {
            commands::cmd_verify_prop1(mdps, max_states, max_actions, samples, &gammas, seed, tol)
        }
        Command::Bench { width, height, steps, life_density } => {
            commands::cmd_bench(width, height, steps, life_density)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.exit_code())
        }
    }
}
