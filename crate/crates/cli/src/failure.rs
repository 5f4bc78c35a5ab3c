use std::fmt;

use hfe_core::Error;

pub const USAGE: u8 = 2;
pub const IO: u8 = 3;
pub const NUMERIC: u8 = 4;
pub const CHECKPOINT: u8 = 5;

#[derive(Debug)]
pub enum Failure {
    Usage(String),
    Core(Error),
}

impl Failure {
    pub fn exit_code(&self) -> u8 {
        match self {
            Failure::Usage(_) => USAGE,
            Failure::Core(e) => match e {
                Error::Io { .. } | Error::Image { .. } => IO,
                Error::NonFinite { .. } | Error::Diverged { .. } => NUMERIC,
                Error::Checkpoint { .. } | Error::ConfigMismatch(_) => CHECKPOINT,
                _ => USAGE,
            },
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Usage(msg) => f.write_str(msg),
            Failure::Core(e) => write!(f, "{e}"),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Core(e)
    }
}

pub fn usage(msg: impl Into<String>) -> Failure {
    Failure::Usage(msg.into())
}

pub type CliResult<T = ()> = Result<T, Failure>;
