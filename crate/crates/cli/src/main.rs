//! `hfe`: synthesize degraded data, train, enhance and evaluate.

mod commands;
mod failure;
mod files;

use std::process::ExitCode;

use clap::Parser;

use commands::Command;

#[derive(Parser, Debug)]
#[command(name = "hfe", version, about = "High-frequency-aware multi-scale image enhancement")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { failure::USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match commands::run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {f}");
            ExitCode::from(f.exit_code())
        }
    }
}
