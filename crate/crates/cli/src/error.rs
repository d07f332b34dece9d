//! CLI error taxonomy mapped to exit codes: 1 usage/config, 2 data,
//! 3 internal invariant violation.

use std::fmt;

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Data(String),
    Internal(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::Internal(_) => 3,
        }
    }

    pub fn usage(msg: impl Into<String>) -> CliError {
        CliError::Usage(msg.into())
    }

    pub fn data(msg: impl Into<String>) -> CliError {
        CliError::Data(msg.into())
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "{m}"),
            CliError::Data(m) => write!(f, "{m}"),
            CliError::Internal(m) => write!(f, "internal invariant violation: {m}"),
        }
    }
}

impl std::error::Error for CliError {}

macro_rules! data_error_from {
    ($($ty:ty),+) => {
        $(impl From<$ty> for CliError {
            fn from(e: $ty) -> Self {
                CliError::Data(e.to_string())
            }
        })+
    };
}

data_error_from!(
    longwatch_core::ingest::IngestError,
    longwatch_core::ingest::fetch::FetchError,
    longwatch_core::boundary::BoundaryError,
    longwatch_core::evaluate::EvaluateError,
    longwatch_core::curation::CurationError,
    longwatch_core::tagging::TaggingError,
    longwatch_core::geo::GeoError,
    longwatch_core::simulate::SimError
);

impl From<longwatch_core::amplify::AmplifyError> for CliError {
    fn from(e: longwatch_core::amplify::AmplifyError) -> Self {
        // bad model parameters are operator input mistakes
        CliError::Usage(e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Data(e.to_string())
    }
}
