use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use fraclaws::{init_threads, parse_config, run, Status};

/// Run one experiment described by a config file.
#[derive(Parser)]
#[command(name = "fraclaws", version)]
struct Cli {
    /// Path to the configuration file.
    config: PathBuf,
    /// Override the `seed` key.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the `output.dir` key.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn fault(msg: impl std::fmt::Display) -> ExitCode {
    eprintln!("fraclaws: {msg}");
    ExitCode::from(Status::Fault as u8)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Err(e) = init_threads() {
        return fault(e);
    }
    let text = match std::fs::read_to_string(&cli.config) {
        Ok(t) => t,
        Err(e) => return fault(format!("{}: {e}", cli.config.display())),
    };
    let mut config = match parse_config(&text) {
        Ok(c) => c,
        Err(e) => return fault(format!("{}: {e}", cli.config.display())),
    };
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    if let Some(out) = cli.out {
        config.output.dir = out;
    }
    match run(&config) {
        Ok((summary, status)) => {
            for a in &summary.assertions {
                println!("{} {}: {}", if a.passed { "PASS" } else { "FAIL" }, a.name, a.detail);
            }
            println!("summary written to {}", fraclaws::run::summary_path(&config.output.dir).display());
            ExitCode::from(status as u8)
        }
        Err(e) => fault(e),
    }
}
