use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::Parser;
use mono3d::{run, RunConfig};

fn main() -> ExitCode {
    let cfg = match RunConfig::try_parse() {
        Ok(cfg) => cfg,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => e.exit(),
        Err(e) => {
            // usage errors are input errors; 2 is reserved for numeric failure
            let _ = e.print();
            return ExitCode::from(1);
        }
    };
    match run(&cfg) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("mono3d: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
