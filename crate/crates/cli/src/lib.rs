//! Command-line front end for `splinept`: TOML configs in, CSV and JSON out.

pub mod commands;
pub mod config;
pub mod output;

use std::path::Path;

/// Failure of a CLI command, split by exit code.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// Bad or unreadable configuration (exit 2).
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Run(String),
}

impl CliError {
    pub fn config(e: splinept::Error) -> Self {
        CliError::Config(e.to_string())
    }

    pub fn run(e: splinept::Error) -> Self {
        CliError::Run(e.to_string())
    }

    pub fn io(path: &Path, e: std::io::Error) -> Self {
        CliError::Run(format!("{}: {e}", path.display()))
    }

    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Run(_) => 1,
        }
    }
}

/// Parses `a..b` (both ends included) or a single seed.
pub fn parse_seed_range(s: &str) -> Result<(u64, u64), String> {
    let parse = |x: &str| x.trim().parse::<u64>().map_err(|e| format!("bad seed '{x}': {e}"));
    let (a, b) = match s.split_once("..") {
        Some((a, b)) => (parse(a)?, parse(b.trim_start_matches('='))?),
        None => {
            let a = parse(s)?;
            (a, a)
        }
    };
    if a > b {
        return Err(format!("empty seed range {s}"));
    }
    Ok((a, b))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seed_ranges() {
        assert_eq!(parse_seed_range("1..10"), Ok((1, 10)));
        assert_eq!(parse_seed_range("3..=4"), Ok((3, 4)));
        assert_eq!(parse_seed_range("7"), Ok((7, 7)));
        assert!(parse_seed_range("5..2").is_err());
        assert!(parse_seed_range("a..2").is_err());
    }
}
