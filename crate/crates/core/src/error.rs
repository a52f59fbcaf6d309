//! Error type shared across the toolkit.
//!
//! Every variant carries a stable machine-readable code (`E...`) that is part
//! of the public contract: scripts may match on the code, messages may change.
//! The full table lives in FORMATS.md at the repository root.

use thiserror::Error;

/// Toolkit-wide error. `Display` output is a single line starting with the
/// stable code, e.g. `E101: unknown arm id "T9"`.
#[derive(Debug, Error)]
pub enum Error {
    /// Malformed input that failed to parse at all (bad CSV row, bad number).
    #[error("E001: {0}")]
    Parse(String),

    /// Structurally valid input violating a schema rule (wrong header,
    /// unknown key, value out of domain).
    #[error("E002: {0}")]
    Schema(String),

    /// An arm id that is not declared by the design.
    #[error("E101: unknown arm id {0:?}")]
    UnknownArm(String),

    /// A learner is missing one or more periods required by the design.
    #[error("E102: {0}")]
    IncompletePeriods(String),

    /// Duplicate learner ids in a cohort passed to assignment.
    #[error("E103: duplicate learner id {0:?} in cohort")]
    DuplicateLearner(String),

    /// An estimator precondition failed (empty selection, empty cell,
    /// out-of-range period, overlapping groups, n < p, ...).
    #[error("E201: {0}")]
    EstimatorPrecondition(String),

    /// A moderator referencing data measured after the focal randomization.
    #[error("E202: post-randomization moderator rejected: {0}")]
    PostRandomizationModerator(String),

    /// Feature matrix is rank deficient.
    #[error("E203: collinear features: {0}")]
    CollinearFeatures(String),

    /// Design failed validation and the requested operation needs a valid one.
    #[error("E301: invalid design: {0}")]
    InvalidDesign(String),

    /// Sequence enumeration requested on a design whose sequence probabilities
    /// are not constants of the design (eligibility restricts randomization).
    #[error("E302: sequence probabilities are not design-constant: {0}")]
    SequenceProbabilitiesNotConstant(String),

    /// Behavior model configuration problem (uncovered table entry, nonzero
    /// control effect, groups not a partition, unknown group).
    #[error("E303: invalid behavior model: {0}")]
    ModelConfig(String),

    /// Event-trigger decision points are declared types only; executing
    /// assignment over one is unsupported.
    #[error("E304: event-trigger decision points cannot be executed (no event stream at this layer)")]
    EventTriggerUnsupported,

    /// Learner history passed to assignment is missing prior periods.
    #[error("E305: incomplete learner history: {0}")]
    IncompleteHistory(String),

    /// Filesystem or OS-level failure.
    #[error("E401: io error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Stable machine-readable code for this error.
    pub fn code(&self) -> &'static str {
        match self {
            Error::Parse(_) => "E001",
            Error::Schema(_) => "E002",
            Error::UnknownArm(_) => "E101",
            Error::IncompletePeriods(_) => "E102",
            Error::DuplicateLearner(_) => "E103",
            Error::EstimatorPrecondition(_) => "E201",
            Error::PostRandomizationModerator(_) => "E202",
            Error::CollinearFeatures(_) => "E203",
            Error::InvalidDesign(_) => "E301",
            Error::SequenceProbabilitiesNotConstant(_) => "E302",
            Error::ModelConfig(_) => "E303",
            Error::EventTriggerUnsupported => "E304",
            Error::IncompleteHistory(_) => "E305",
            Error::Io(_) => "E401",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
