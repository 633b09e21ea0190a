use std::process::ExitCode;

use clap::Parser;

fn main() -> ExitCode {
    let cli = match cmi_cli::Cli::try_parse() {
        Ok(c) => c,
        // usage errors exit with 2, --help / --version with 0
        Err(e) => e.exit(),
    };
    match cmi_cli::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
