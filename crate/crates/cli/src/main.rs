use std::process::ExitCode;

use clap::Parser;
use xsep_cli::{run, Cli};
use xsep_core::parallel::{threads_from_env, with_threads};

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = threads_from_env()
        .map_err(Into::into)
        .and_then(|n| with_threads(n, || run(&cli, &mut std::io::stdout().lock())).map_err(Into::into))
        .and_then(|r| r);
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("xsep: {e}");
            ExitCode::FAILURE
        }
    }
}
