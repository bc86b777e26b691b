use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::Parser;
use dolores_cli::{dispatch, parse_config, Cli};

fn run(cli: Cli) -> Result<()> {
    let cfg = parse_config(cli.flags.config.as_deref(), &cli.flags)?;
    if cfg.threads > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.threads)
            .build_global()
            .context("configuring the thread pool")?;
    }
    dispatch(cli.command, &cfg)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
