use std::process::ExitCode;

use bitgear::commands::{execute, Cli};
use clap::Parser;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let argv: Vec<String> = std::env::args().collect();
    let cli = Cli::parse();
    match execute(&cli, &argv).map_err(anyhow::Error::from) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            let usage = err.downcast_ref::<bitgear::Error>().is_some_and(bitgear::Error::is_usage);
            ExitCode::from(if usage { 2 } else { 1 })
        }
    }
}
