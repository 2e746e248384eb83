use std::process::ExitCode;

use lsalab::cli::{self, CliError};

fn main() -> ExitCode {
    match cli::execute(std::env::args_os()) {
        Ok(o) => {
            for p in &o.written {
                eprintln!("wrote {}", p.display());
            }
            eprintln!("{}: {} rows, {} failed", o.experiment, o.rows, o.failed);
            ExitCode::from(o.exit_code())
        }
        Err(CliError::Usage(e)) => e.exit(),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
