use std::process::ExitCode;

use clap::Parser;
use ragsweep::cli::{run, Cli, EXIT_OTHER};

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            // clap uses 2 for usage errors, which would read as missing input.
            return ExitCode::from(if e.use_stderr() { EXIT_OTHER as u8 } else { 0 });
        }
    };
    ExitCode::from(run(&cli) as u8)
}
