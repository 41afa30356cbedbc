use thiserror::Error;

use crate::dualquat::DqError;
use crate::io::ParseError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("invalid match set: {0}")]
    InvalidMatchSet(String),
    #[error("degenerate scale: all points coincide")]
    DegenerateScale,
    #[error("degenerate geometry around control match {control}")]
    DegenerateGeometry { control: usize },
    #[error("invalid rigid transform: {0}")]
    InvalidTransform(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error(transparent)]
    DualQuaternion(#[from] DqError),
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    /// True for failures caused by the geometry of the input rather than its
    /// encoding.
    pub fn is_degenerate(&self) -> bool {
        matches!(
            self,
            Error::DegenerateScale | Error::DegenerateGeometry { .. } | Error::InvalidMatchSet(_)
        )
    }
}
