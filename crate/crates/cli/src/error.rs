use std::fmt;

use cspscale::{ExpandError, ParseError, PresetError, RewriteError, ScaleError, SpecError};

pub const USAGE: u8 = 1;
pub const PARSE: u8 = 2;
pub const SEMANTIC: u8 = 3;

/// Errors raised by the front end itself.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) => f.write_str(m),
        }
    }
}

impl std::error::Error for CliError {}

pub fn usage(message: impl Into<String>) -> anyhow::Error {
    CliError::Usage(message.into()).into()
}

/// Maps an error chain to the documented exit code.
pub fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.downcast_ref::<CliError>().is_some() {
            return USAGE;
        }
        if let Some(p) = cause.downcast_ref::<ParseError>() {
            return match p {
                ParseError::Semantic(_) => SEMANTIC,
                _ => PARSE,
            };
        }
        if let Some(p) = cause.downcast_ref::<PresetError>() {
            return match p {
                PresetError::Unknown(_) => USAGE,
                PresetError::Prune { .. } => SEMANTIC,
            };
        }
        if cause.downcast_ref::<SpecError>().is_some()
            || cause.downcast_ref::<ExpandError>().is_some()
            || cause.downcast_ref::<RewriteError>().is_some()
            || cause.downcast_ref::<ScaleError>().is_some()
        {
            return SEMANTIC;
        }
        if cause.downcast_ref::<std::io::Error>().is_some() {
            return USAGE;
        }
    }
    USAGE
}
