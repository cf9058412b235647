//! Experiment driver for the `hiddendrift` library.
//!
//! The binary (`hiddendrift`) exposes one subcommand per experiment —
//! `simulate`, `filter`, `riccati`, `xi`, `fig1`, `fig2`, `checks` — all
//! driven by a small `key = value` config file (see [`config`]) plus a few
//! command-line overrides.  Results are CSV files with a header row, LF
//! endings, and 17 significant digits; runs are byte-reproducible from
//! `(config, seed)` regardless of how many worker threads execute them.
//!
//! Exit codes: `0` success, `2` configuration error, `3` applicability
//! condition failed (the run aborts rather than emit unsupported numbers),
//! `4` numeric failure at run time.

#![forbid(unsafe_code)]
#![warn(missing_docs)]

pub mod config;
pub mod output;
pub mod runner;

/// CLI-level error: what went wrong and which exit code it maps to.
#[derive(Debug)]
pub enum CliError {
    /// The configuration (file or flags) could not be read, parsed, or
    /// validated.
    Config(String),
    /// The library rejected or aborted the computation.
    Lib(hiddendrift::Error),
    /// A result file could not be written.
    Output(std::io::Error),
}

impl CliError {
    /// Process exit code for this error.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Lib(hiddendrift::Error::InvalidParameter(_)) => 2,
            CliError::Lib(hiddendrift::Error::Condition(_)) => 3,
            CliError::Lib(hiddendrift::Error::Numeric(_)) => 4,
            CliError::Output(_) => 4,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(msg) => write!(f, "configuration error: {msg}"),
            CliError::Lib(e) => write!(f, "{e}"),
            CliError::Output(e) => write!(f, "output error: {e}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<hiddendrift::Error> for CliError {
    fn from(e: hiddendrift::Error) -> Self {
        CliError::Lib(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Output(e)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn test_exit_codes_follow_the_error_taxonomy() {
        assert_eq!(CliError::Config("x".into()).exit_code(), 2);
        assert_eq!(
            CliError::Lib(hiddendrift::Error::invalid("x")).exit_code(),
            2
        );
        assert_eq!(
            CliError::Lib(hiddendrift::Error::condition("x")).exit_code(),
            3
        );
        assert_eq!(
            CliError::Lib(hiddendrift::Error::numeric("x")).exit_code(),
            4
        );
        let io = std::io::Error::other("disk");
        assert_eq!(CliError::Output(io).exit_code(), 4);
    }
}
