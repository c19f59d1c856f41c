use std::process::ExitCode;

use clap::Parser;

use strata_audit_cli::config::RunConfig;
use strata_audit_cli::{run, INPUT_ERROR};

fn main() -> ExitCode {
    let cfg = RunConfig::parse();
    match run(&cfg) {
        Ok(status) => ExitCode::from(status.code()),
        // a closed downstream pipe (e.g. `| head`) is not an error
        Err(e)
            if e.chain().any(|c| {
                c.downcast_ref::<std::io::Error>()
                    .is_some_and(|io| io.kind() == std::io::ErrorKind::BrokenPipe)
            }) =>
        {
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(INPUT_ERROR)
        }
    }
}
