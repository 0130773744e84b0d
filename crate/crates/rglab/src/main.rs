use std::process::ExitCode;
use std::time::Instant;

use clap::Parser;

use rglab::cli::{run, CliArgs};

fn main() -> ExitCode {
    let args = CliArgs::parse();
    let started = Instant::now();
    match run(&args) {
        Ok(summary) => {
            // Wall time goes to stderr only so artifacts stay byte-identical.
            eprintln!(
                "rglab: task '{}' completed in {:.3}s",
                summary.task,
                started.elapsed().as_secs_f64()
            );
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("rglab: error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
