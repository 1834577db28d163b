use std::fmt;

use flexhost::capacity::CapacityError;
use flexhost::feeder::FeederError;
use flexhost::hosting::{HostingError, TuneError};
use flexhost::study::StudyError;
use flexhost::timeseries::TimeseriesError;

/// Process exit status. The numeric values are a stable contract.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ExitKind {
    Usage = 1,
    InputInvalid = 2,
    BaselineInfeasible = 3,
    LpInfeasible = 4,
    Unbounded = 5,
}

impl ExitKind {
    pub fn code(self) -> i32 {
        self as i32
    }
}

#[derive(Debug)]
pub struct CliError {
    pub kind: ExitKind,
    pub message: String,
}

impl CliError {
    pub fn new(kind: ExitKind, message: impl Into<String>) -> Self {
        CliError { kind, message: message.into() }
    }

    pub fn usage(message: impl Into<String>) -> Self {
        Self::new(ExitKind::Usage, message)
    }

    pub fn input(message: impl Into<String>) -> Self {
        Self::new(ExitKind::InputInvalid, message)
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for CliError {}

impl From<HostingError> for CliError {
    fn from(e: HostingError) -> Self {
        let kind = match e {
            HostingError::BaselineInfeasible { .. } | HostingError::NoPositiveResidual => ExitKind::BaselineInfeasible,
            HostingError::Infeasible | HostingError::IterationLimit => ExitKind::LpInfeasible,
            HostingError::Unbounded => ExitKind::Unbounded,
            HostingError::Invalid(_) | HostingError::Lp(_) | HostingError::Risk(_) => ExitKind::InputInvalid,
        };
        CliError::new(kind, e.to_string())
    }
}

impl From<TuneError> for CliError {
    fn from(e: TuneError) -> Self {
        match e {
            TuneError::Hosting(h) => h.into(),
            TuneError::Unreachable { .. } => CliError::new(ExitKind::LpInfeasible, e.to_string()),
            TuneError::NoTarget | TuneError::BadBracket(..) => CliError::usage(e.to_string()),
        }
    }
}

impl From<StudyError> for CliError {
    fn from(e: StudyError) -> Self {
        match e {
            StudyError::Hosting(h) => h.into(),
            other => CliError::input(other.to_string()),
        }
    }
}

impl From<FeederError> for CliError {
    fn from(e: FeederError) -> Self {
        CliError::input(e.to_string())
    }
}

impl From<TimeseriesError> for CliError {
    fn from(e: TimeseriesError) -> Self {
        CliError::input(e.to_string())
    }
}

impl From<CapacityError> for CliError {
    fn from(e: CapacityError) -> Self {
        CliError::input(e.to_string())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::input(e.to_string())
    }
}
