use std::process::ExitCode;

use clap::Parser;
use ifcausal_cli::{run, Cli};

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(paths) => {
            for p in paths {
                println!("wrote {}", p.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{}", e.report_line());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
