use std::io::{self, BufWriter, Write};
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::Parser;
use shiftbreak_cli::report::write_rows;
use shiftbreak_cli::{run, Args, CliError, ExperimentConfig};

fn execute(args: Args) -> Result<u64, CliError> {
    let cfg = ExperimentConfig::from_args(args)?;
    let output = run(&cfg)?;
    let stdout = io::stdout();
    let mut out = BufWriter::new(stdout.lock());
    write_rows(&mut out, cfg.output, &output.rows)?;
    out.flush()?;
    Ok(output.failures)
}

fn main() -> ExitCode {
    let args = match Args::try_parse() {
        Ok(args) => args,
        Err(err) => {
            let _ = err.print();
            return match err.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(2),
            };
        }
    };
    match execute(args) {
        Ok(0) => ExitCode::SUCCESS,
        Ok(failures) => {
            eprintln!("shiftbreak: {failures} trial(s) did not recover the planted shift");
            ExitCode::from(3)
        }
        Err(err) => {
            eprintln!("shiftbreak: {err}");
            ExitCode::from(err.exit_code() as u8)
        }
    }
}
