//! Exit codes: 2 bad input, 3 model or key mismatch, 4 i/o, 1 anything else
//! (divergence, solver failure).

use std::fmt;
use std::path::Path;

use otsteg::Error;

pub const BAD_INPUT: u8 = 2;
pub const MISMATCH: u8 = 3;
pub const IO: u8 = 4;
pub const FAILURE: u8 = 1;

#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub message: String,
}

impl CliError {
    pub fn bad_input(message: impl Into<String>) -> Self {
        Self { code: BAD_INPUT, message: message.into() }
    }

    pub fn io(path: &Path, e: std::io::Error) -> Self {
        Self { code: IO, message: format!("{}: {e}", path.display()) }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let code = match &e {
            Error::Io { .. } => IO,
            Error::KeyMismatch(_) | Error::ModelMismatch(_) => MISMATCH,
            Error::Divergence { .. } | Error::NonConvergence { .. } | Error::KernelUnderflow { .. } => FAILURE,
            _ => BAD_INPUT,
        };
        Self { code, message: e.to_string() }
    }
}
