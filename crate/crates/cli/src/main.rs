mod args;
mod commands;
mod output;
mod source;

use std::process::ExitCode;

use clap::{CommandFactory, FromArgMatches};

use args::{Cli, Command};

/// Failure of one CLI invocation, carrying its exit status.
#[derive(Debug)]
pub enum CliError {
    /// Bad flags or configuration: exit 2.
    Usage(String),
    /// Unreadable, malformed or mismatched data: exit 3.
    Data(String),
    Core(phmadv::Error),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Data(_) => 3,
            CliError::Core(e) => core_exit_code(e),
        }
    }
}

fn core_exit_code(e: &phmadv::Error) -> u8 {
    use phmadv::Error;
    match e {
        Error::AttackFailed { source, .. } => core_exit_code(source),
        Error::Config(_) => 2,
        e if e.is_numerical() => 4,
        e if e.is_data_error() => 3,
        Error::Contract(_) => 3,
        _ => 1,
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Data(m) => f.write_str(m),
            CliError::Core(e) => write!(f, "{e}"),
        }
    }
}

impl From<phmadv::Error> for CliError {
    fn from(e: phmadv::Error) -> Self {
        CliError::Core(e)
    }
}

pub fn version_line() -> String {
    format!(
        "{} (container and report format {})",
        env!("CARGO_PKG_VERSION"),
        phmadv::FORMAT_VERSION
    )
}

fn main() -> ExitCode {
    let matches = Cli::command().version(version_line()).get_matches();
    let cli = match Cli::from_arg_matches(&matches) {
        Ok(cli) => cli,
        Err(e) => e.exit(),
    };
    let result = match cli.command {
        Command::Synth(a) => commands::synth(a),
        Command::Train(a) => commands::train(a),
        Command::AttackEval(a) => commands::attack_eval(a),
        Command::Report(a) => commands::report(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use phmadv::Error;

    #[test]
    fn exit_codes_follow_error_kinds() {
        assert_eq!(CliError::Usage("x".into()).exit_code(), 2);
        assert_eq!(CliError::from(Error::Config("x".into())).exit_code(), 2);
        let parse = Error::Parse {
            path: "f".into(),
            line: 3,
            detail: "x".into(),
        };
        assert_eq!(CliError::from(parse).exit_code(), 3);
        let diverged = Error::Diverged {
            epoch: 2,
            loss: 10.0,
            previous: 0.5,
        };
        assert_eq!(CliError::from(diverged).exit_code(), 4);
        let wrapped = Error::AttackFailed {
            provenance: "run 1 @ 4".into(),
            source: Box::new(Error::NonFiniteGradient { step: 2 }),
        };
        assert_eq!(CliError::from(wrapped).exit_code(), 4);
    }

    #[test]
    fn cli_definition_is_consistent() {
        Cli::command().debug_assert();
    }
}
