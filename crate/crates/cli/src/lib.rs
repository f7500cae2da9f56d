//! Driver behind the `lookahead` binary. [`run`] takes an argument vector and
//! returns the process exit code, so tests can call it in-process.

mod args;
pub mod config;
mod evaluate;
mod files;
mod generate;
pub mod manifest;
mod perturb;
mod profile;
mod session;
mod translate;

use std::ffi::OsString;
use std::fmt;

use clap::Parser;

pub use args::{Cli, Command, Format};
pub use generate::parse_grid;
pub use perturb::VerificationItem;

pub const EXIT_OK: i32 = 0;
pub const EXIT_INTERNAL: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

/// An error and the exit code it maps to.
#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub error: anyhow::Error,
}

impl CliError {
    pub fn usage(error: impl Into<anyhow::Error>) -> Self {
        Self {
            code: EXIT_USAGE,
            error: error.into(),
        }
    }

    pub fn internal(error: impl Into<anyhow::Error>) -> Self {
        Self {
            code: EXIT_INTERNAL,
            error: error.into(),
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:#}", self.error)
    }
}

impl From<anyhow::Error> for CliError {
    fn from(e: anyhow::Error) -> Self {
        Self::internal(e)
    }
}

impl From<lookahead_core::Error> for CliError {
    fn from(e: lookahead_core::Error) -> Self {
        Self::internal(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        Self::internal(e)
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        Self::internal(e)
    }
}

pub type CliResult<T> = Result<T, CliError>;

/// Marks an error as a usage, config or input problem (exit code 2).
pub(crate) trait UsageExt<T> {
    fn usage(self) -> CliResult<T>;
    fn usage_ctx(self, ctx: impl fmt::Display) -> CliResult<T>;
}

impl<T, E: Into<anyhow::Error>> UsageExt<T> for Result<T, E> {
    fn usage(self) -> CliResult<T> {
        self.map_err(CliError::usage)
    }

    fn usage_ctx(self, ctx: impl fmt::Display) -> CliResult<T> {
        self.map_err(|e| CliError::usage(e.into().context(ctx.to_string())))
    }
}

pub(crate) fn usage_err(msg: impl fmt::Display) -> CliError {
    CliError::usage(anyhow::anyhow!("{msg}"))
}

/// Parses `argv` (program name first), runs the subcommand and returns the
/// exit code. Errors are printed to stderr.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let argv: Vec<OsString> = argv.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    let words: Vec<String> = argv.iter().map(|a| a.to_string_lossy().into_owned()).collect();
    match execute(cli, words) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            e.code
        }
    }
}

fn execute(cli: Cli, argv: Vec<String>) -> CliResult<()> {
    let mut session = session::Session::open(&cli, argv)?;
    let (name, resolved) = match &cli.command {
        Command::Generate(a) => ("generate", generate::generate(&mut session, a)?),
        Command::Chain(a) => ("chain", generate::chain(&mut session, a)?),
        Command::Translate(a) => ("translate", translate::translate(&mut session, a)?),
        Command::Profile(a) => ("profile", profile::profile(&mut session, a)?),
        Command::ProfileProofs(a) => ("profile-proofs", profile::profile_proofs(&mut session, a)?),
        Command::Evaluate(a) => ("evaluate", evaluate::evaluate(&mut session, a)?),
        Command::Perturb(a) => ("perturb", perturb::perturb(&mut session, a)?),
        Command::Grade(a) => ("grade", evaluate::grade(&mut session, a)?),
        Command::Report(a) => ("report", evaluate::report(&mut session, a)?),
    };
    let path = session.finish(name, resolved)?;
    log::info!("wrote {}", path.display());
    Ok(())
}
