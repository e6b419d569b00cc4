use std::process::ExitCode;

use clap::Parser;

fn main() -> ExitCode {
    let cli = cycling_cli::args::Cli::parse();
    match cycling_cli::run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
