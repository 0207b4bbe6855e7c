use std::fmt;
use std::path::Path;

use docrec::manifest::ManifestError;
use docrec::markup::MarkupError;
use docrec::metrics::MetricError;
use docrec::model::{CheckpointError, ModelError};
use docrec::raster::RasterError;
use docrec::synth::SynthError;
use docrec::train::TrainError;

/// A command failure, classified by exit code.
#[derive(Debug)]
pub enum Failure {
    /// Bad arguments, configuration or data: exit code 2.
    Validation(String),
    /// Reading or writing files: exit code 3.
    Io(String),
    /// Checkpoint of the wrong kind, version or layout: exit code 4.
    Checkpoint(String),
}

impl Failure {
    pub fn code(&self) -> u8 {
        match self {
            Failure::Validation(_) => 2,
            Failure::Io(_) => 3,
            Failure::Checkpoint(_) => 4,
        }
    }

    pub fn io(path: &Path, e: impl fmt::Display) -> Self {
        Failure::Io(format!("{}: {e}", path.display()))
    }

    /// Prefixes the message with `what`.
    pub fn context(self, what: impl fmt::Display) -> Self {
        match self {
            Failure::Validation(m) => Failure::Validation(format!("{what}: {m}")),
            Failure::Io(m) => Failure::Io(format!("{what}: {m}")),
            Failure::Checkpoint(m) => Failure::Checkpoint(format!("{what}: {m}")),
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Validation(m) | Failure::Io(m) | Failure::Checkpoint(m) => f.write_str(m),
        }
    }
}

pub type Result<T> = std::result::Result<T, Failure>;

macro_rules! validation {
    ($($t:ty),*) => {
        $(impl From<$t> for Failure {
            fn from(e: $t) -> Self {
                Failure::Validation(e.to_string())
            }
        })*
    };
}

validation!(MarkupError, MetricError, ModelError, serde_json::Error);

impl From<ManifestError> for Failure {
    fn from(e: ManifestError) -> Self {
        match e {
            ManifestError::Io(m) => Failure::Io(m),
            e => Failure::Validation(e.to_string()),
        }
    }
}

impl From<SynthError> for Failure {
    fn from(e: SynthError) -> Self {
        match e {
            SynthError::Io(m) => Failure::Io(m),
            e => Failure::Validation(e.to_string()),
        }
    }
}

impl From<TrainError> for Failure {
    fn from(e: TrainError) -> Self {
        match e {
            TrainError::Synth(s) => s.into(),
            e => Failure::Validation(e.to_string()),
        }
    }
}

impl From<CheckpointError> for Failure {
    fn from(e: CheckpointError) -> Self {
        match e {
            CheckpointError::Io(m) => Failure::Io(m),
            e => Failure::Checkpoint(e.to_string()),
        }
    }
}

impl From<RasterError> for Failure {
    fn from(e: RasterError) -> Self {
        match e {
            RasterError::Image(e) => Failure::Io(e.to_string()),
            e => Failure::Validation(e.to_string()),
        }
    }
}
