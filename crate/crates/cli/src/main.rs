use std::process::ExitCode;

use clap::Parser;
use mandv_cli::{run, Cli};

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli.command) {
        Ok(outcome) => {
            print!("{}", outcome.summary);
            for a in &outcome.advisories {
                eprintln!("ADVISORY: {a}");
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {}", anyhow::Error::from(e).chain().map(ToString::to_string).collect::<Vec<_>>().join(": "));
            ExitCode::FAILURE
        }
    }
}
