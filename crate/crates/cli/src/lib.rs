//! Pipeline orchestration behind the `bermudan` binary.

pub mod bench;
pub mod commands;
pub mod config;
pub mod provenance;

use std::path::PathBuf;

/// Bad flags, config values or domain inputs. Exit code 2.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

/// An upstream artifact is absent or was produced from different inputs.
/// Exit code 3.
#[derive(Debug)]
pub struct MissingArtifact {
    pub path: PathBuf,
    pub hint: String,
}

impl std::fmt::Display for MissingArtifact {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "missing or stale artifact {}: {}", self.path.display(), self.hint)
    }
}

impl std::error::Error for MissingArtifact {}

pub const EXIT_USAGE: i32 = 2;
pub const EXIT_MISSING: i32 = 3;
pub const EXIT_NUMERICAL: i32 = 4;

/// Maps an error chain to the process exit code.
pub fn exit_code(err: &anyhow::Error) -> i32 {
    for cause in err.chain() {
        if cause.is::<MissingArtifact>() {
            return EXIT_MISSING;
        }
        if cause.is::<UsageError>() {
            return EXIT_USAGE;
        }
        if let Some(e) = cause.downcast_ref::<bermudan_core::Error>() {
            return match e {
                bermudan_core::Error::Numerical(_) => EXIT_NUMERICAL,
                _ => EXIT_USAGE,
            };
        }
        if let Some(e) = cause.downcast_ref::<bermudan_ml::MlError>() {
            return match e {
                bermudan_ml::MlError::Training(_) => EXIT_NUMERICAL,
                bermudan_ml::MlError::Format(_) => EXIT_MISSING,
                _ => EXIT_USAGE,
            };
        }
    }
    EXIT_USAGE
}
