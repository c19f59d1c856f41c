//! Command-line plumbing for `strata-audit`: argument parsing, file I/O and
//! the acceptance-suite runner.

pub mod check;
pub mod commands;
pub mod config;

use std::fs::File;
use std::io::{BufWriter, Write};

use anyhow::{Context, Result};

use config::{Command, RunConfig};

/// Process exit status for a finished run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Success,
    /// `check` ran and some criterion failed.
    CheckFailed,
}

impl Status {
    pub fn code(self) -> u8 {
        match self {
            Status::Success => 0,
            Status::CheckFailed => 1,
        }
    }
}

/// Exit code for usage and input errors.
pub const INPUT_ERROR: u8 = 2;

/// Runs `cfg` on a rayon pool sized by `cfg.threads`.
pub fn run(cfg: &RunConfig) -> Result<Status> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.threads.unwrap_or(0))
        .build()
        .context("cannot start worker pool")?;
    pool.install(|| dispatch(&cfg.command))
}

fn dispatch(command: &Command) -> Result<Status> {
    match command {
        Command::Dims(a) => commands::dims(a)?,
        Command::Curve(a) => commands::curve(a)?,
        Command::Classify(a) => commands::classify(a)?,
        Command::Synth(a) => commands::synth(&a.kind)?,
        Command::Traj(a) => commands::traj(a)?,
        Command::Check(a) => {
            let report = check::run_suite(a.suite);
            for c in &report.criteria {
                println!("{}", summary_line(c));
            }
            if let Some(path) = &a.report {
                let mut w = BufWriter::new(
                    File::create(path).with_context(|| format!("cannot create {}", path.display()))?,
                );
                serde_json::to_writer_pretty(&mut w, &report)?;
                w.write_all(b"\n")?;
                w.flush()?;
            }
            if !report.passed {
                return Ok(Status::CheckFailed);
            }
        }
    }
    Ok(Status::Success)
}

/// `PASS  [ 1] exact power law (0.01s): detail`.
pub fn summary_line(c: &check::CriterionResult) -> String {
    format!(
        "{}  [{:>2}] {} ({:.2}s): {}",
        if c.passed { "PASS" } else { "FAIL" },
        c.id,
        c.name,
        c.seconds,
        c.detail
    )
}
