use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};

use growthfront::config::{load_config, Mode};
use growthfront::runner::{run, RunError};

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Cmd {
    Solve,
    Refine,
    Sweep,
    Compare,
}

/// Growth competitions on rotationally symmetric surfaces.
#[derive(Debug, Parser)]
#[command(version)]
struct Args {
    /// what to run
    #[arg(value_enum)]
    mode: Cmd,
    /// scenario file (TOML)
    #[arg(long)]
    config: PathBuf,
    /// output directory, overriding `outputs.directory`
    #[arg(long)]
    out: Option<PathBuf>,
    /// override a scalar field, e.g. `--set grid.n_r=800`
    #[arg(long = "set", value_name = "KEY=VALUE")]
    sets: Vec<String>,
}

fn main() -> ExitCode {
    let args = Args::parse();
    let mode = match args.mode {
        Cmd::Solve => Mode::Solve,
        Cmd::Refine => Mode::Refine,
        Cmd::Sweep => Mode::Sweep,
        Cmd::Compare => Mode::Compare,
    };
    let mut cfg = match load_config(&args.config, &args.sets) {
        Ok(c) => c,
        Err(errors) => {
            eprintln!("{}", RunError::Config(errors));
            return ExitCode::from(2);
        }
    };
    cfg.mode = mode;
    if let Some(out) = args.out {
        cfg.outputs.directory = out;
    }
    match run(&cfg) {
        Ok(outcome) => {
            println!("{}", outcome.headline);
            println!("config hash {}", outcome.config_hash);
            println!("{} artifacts in {}", outcome.artifacts.len() + 1, cfg.outputs.directory.display());
            if outcome.exit_code() != 0 {
                eprintln!("warning: the fixed-point iteration stopped at grid.max_iter before converging");
            }
            ExitCode::from(outcome.exit_code() as u8)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
