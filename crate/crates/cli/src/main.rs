mod commands;
mod config;

use std::fmt;
use std::process::ExitCode;

use clap::{CommandFactory, FromArgMatches};

use commands::Cli;

/// Malformed input file; exits with code 2 like I/O failures.
#[derive(Debug)]
pub struct FormatError(pub String);

impl fmt::Display for FormatError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "format error: {}", self.0)
    }
}

impl std::error::Error for FormatError {}

/// 2 for I/O and format problems anywhere in the chain, 1 otherwise.
fn exit_code(err: &anyhow::Error) -> u8 {
    let io_like = err.chain().any(|e| {
        e.is::<std::io::Error>()
            || e.is::<FormatError>()
            || e.is::<toml::de::Error>()
            || e.is::<csv::Error>()
            || e.is::<serde_json::Error>()
            || e.downcast_ref::<ran_core::RanError>().is_some_and(|r| r.is_io_or_format())
            || e.downcast_ref::<ran_tensor::TensorError>().is_some_and(|t| {
                matches!(t, ran_tensor::TensorError::Format { .. } | ran_tensor::TensorError::Io(_))
            })
    });
    if io_like {
        2
    } else {
        1
    }
}

fn main() -> ExitCode {
    let keys = config::keys_help();
    let cmd = Cli::command()
        .after_long_help(keys.clone())
        .mut_subcommand("train", |c| c.after_long_help(keys));
    let matches = match cmd.try_get_matches() {
        Ok(m) => m,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let cli = match Cli::from_arg_matches(&matches) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(1);
        }
    };
    match commands::run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
