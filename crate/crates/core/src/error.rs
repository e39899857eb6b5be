//! Error values shared across the crate.
//!
//! Errors are plain values with a coarse category so that front ends can map
//! them to exit codes; nothing in the library aborts the process.

use thiserror::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("group family mismatch: expected {expected}, found {found}")]
    FamilyMismatch { expected: String, found: String },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("resource cap exceeded while {what}: needed {needed}, cap {cap}{hint}")]
    ResourceCap {
        what: String,
        needed: u64,
        cap: u64,
        hint: String,
    },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("measure is not symmetric: mass {forward} at an element vs {backward} at its inverse")]
    NotSymmetric { forward: f64, backward: f64 },

    #[error("family {family} is not flagged rapid-decay; the RD upper bound does not apply")]
    NotRapidDecay { family: String },

    #[error("cylinder depth {got} is too small: need depth >= {needed}")]
    DepthTooSmall { needed: usize, got: usize },
}

impl Error {
    pub fn cap(what: impl Into<String>, needed: u64, cap: u64) -> Self {
        Error::ResourceCap {
            what: what.into(),
            needed,
            cap,
            hint: String::new(),
        }
    }

    pub fn cap_with_hint(
        what: impl Into<String>,
        needed: u64,
        cap: u64,
        hint: impl Into<String>,
    ) -> Self {
        Error::ResourceCap {
            what: what.into(),
            needed,
            cap,
            hint: format!(" ({})", hint.into()),
        }
    }

    /// Coarse category used by front ends for exit codes.
    pub fn category(&self) -> ErrorCategory {
        match self {
            Error::FamilyMismatch { .. } | Error::InvalidParameter(_) => ErrorCategory::Config,
            Error::ResourceCap { .. } => ErrorCategory::Resource,
            Error::Domain(_)
            | Error::NotSymmetric { .. }
            | Error::NotRapidDecay { .. }
            | Error::DepthTooSmall { .. } => ErrorCategory::Domain,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorCategory {
    Config,
    Resource,
    Domain,
}

impl ErrorCategory {
    pub fn as_str(self) -> &'static str {
        match self {
            ErrorCategory::Config => "config",
            ErrorCategory::Resource => "resource",
            ErrorCategory::Domain => "domain",
        }
    }
}
