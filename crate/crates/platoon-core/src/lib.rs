//! Mesoscopic platoon control.
//!
//! A string of vehicles follows a virtual leader under a backstepping
//! controller that blends each vehicle's own car-following error with
//! running statistics (mean/variance of spacing and closing speed) of the
//! platoon prefix ahead of it. The crate provides the closed-loop
//! simulator, the scenario/sweep harness, and a numerical certification
//! toolkit that checks the string-stability conditions the design rests on.

pub mod certify;
pub mod config;
pub mod controller;
pub mod dynamics;
pub mod harness;
pub mod macroscopic;
pub mod state;

use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("empty platoon")]
    EmptyPlatoon,
    #[error("prefix index {index} out of range for length {len}")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("state has {got} followers, scenario expects {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid scenario: {field}: {reason}")]
    InvalidScenario { field: &'static str, reason: String },
    #[error("invalid parameter {name}: {reason}")]
    InvalidParameter { name: &'static str, reason: String },
    #[error("platoon is not string stable: small-gain value {gamma_tilde} >= 1")]
    NotStringStable { gamma_tilde: f64 },
    #[error(
        "no diagonal scaling on the search grid is positive definite (best margin {best_margin:e})"
    )]
    ScalingSearchFailed { best_margin: f64 },
    #[error("sweep run with {size} vehicles failed: {source}")]
    SweepRun { size: usize, source: Box<Error> },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },
}

impl Error {
    /// An I/O error tagged with the path it occurred on.
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// A malformed-content error tagged with the offending file.
    pub fn format(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            message: message.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
