//! `doa`: dataset generation, training, transfer calibration and evaluation.

mod args;
mod eval;
mod files;
mod gen;
mod train;
mod transfer;

use clap::Parser;
use std::process::ExitCode;

use doa_core::DoaError;

/// Failure with its process exit code.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Mismatch(String),
    Numeric(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Mismatch(_) => 3,
            CliError::Numeric(_) => 4,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Usage(m) | CliError::Mismatch(m) | CliError::Numeric(m) => m,
        }
    }
}

impl From<DoaError> for CliError {
    fn from(e: DoaError) -> Self {
        let msg = e.to_string();
        match e {
            DoaError::Numeric(_) => CliError::Numeric(msg),
            e if e.is_mismatch() || matches!(e, DoaError::Empty(_) | DoaError::Contract(_)) => CliError::Mismatch(msg),
            _ => CliError::Usage(msg),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Usage(e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Usage(format!("bad JSON: {e}"))
    }
}

pub type CliResult<T> = Result<T, CliError>;

fn configure_threads() -> CliResult<()> {
    let Ok(raw) = std::env::var("DOA_THREADS") else {
        return Ok(());
    };
    let n: usize = raw.trim().parse().map_err(|_| CliError::Usage(format!("DOA_THREADS must be an integer, got '{raw}'")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n.max(1))
        .build_global()
        .map_err(|e| CliError::Usage(e.to_string()))
}

fn main() -> ExitCode {
    let cli = match args::Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let result = configure_threads().and_then(|_| match cli.command {
        args::Command::Gen(a) => gen::run(a),
        args::Command::Train(a) => train::run(a),
        args::Command::Transfer(a) => transfer::run(a),
        args::Command::Eval(a) => eval::run(a),
        args::Command::Config(a) => gen::print_config(a),
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message());
            ExitCode::from(e.code())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn core_errors_map_to_exit_codes() {
        let code = |e: DoaError| CliError::from(e).code();
        assert_eq!(code(DoaError::Numeric("nan".into())), 4);
        assert_eq!(code(DoaError::Dimension("m".into())), 3);
        assert_eq!(code(DoaError::DegreesOfFreedom("k".into())), 3);
        assert_eq!(code(DoaError::Empty("set".into())), 3);
        assert_eq!(code(DoaError::InvalidArgument("x".into())), 2);
    }
}
