pub mod certify;
pub mod converge;
pub mod track;

use wdrkf_core::Error as CoreError;

/// Command failure with the exit code it maps to: 1 for usage/config
/// problems, 2 for mathematical failures (certification, divergence).
pub enum CmdError {
    Usage(anyhow::Error),
    Math(anyhow::Error),
}

pub type CmdResult = Result<(), CmdError>;

pub fn usage(e: impl Into<anyhow::Error>) -> CmdError {
    CmdError::Usage(e.into())
}

pub fn math(e: impl Into<anyhow::Error>) -> CmdError {
    CmdError::Math(e.into())
}

/// Core errors raised while computing are mathematical failures; dimension
/// and argument errors indicate a bad configuration.
pub fn from_core(e: CoreError) -> CmdError {
    match &e {
        CoreError::Dimension(_) | CoreError::Invalid(_) => usage(e),
        _ => math(e),
    }
}
