//! Config-driven orchestration of the tailrisk pipeline.

pub mod config;
pub mod manifest;
pub mod stages;

use tailrisk::Error;

pub use config::{Overrides, PipelineConfig};
pub use stages::{Outcome, Runner, Stage};

/// Process exit status for an error.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) => 2,
        Error::Io { .. } | Error::Parse { .. } | Error::Data(_) | Error::Serde(_) | Error::MissingArtifact { .. } => 3,
        Error::Estimation(_) | Error::FilterAbort { .. } => 4,
        Error::Degenerate(_) => 5,
    }
}
