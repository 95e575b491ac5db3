use thiserror::Error;

/// Errors raised by estimation, matching, simulation and I/O.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid spell for subject {subject}: {reason}")]
    InvalidSpell { subject: String, reason: String },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("design matrix is singular at term `{term}`")]
    SingularDesign { term: String },

    #[error("collinear term `{term}` in fixed-effects design")]
    CollinearTerm { term: String },

    #[error("no events in any stratum; nothing to estimate")]
    NoEvents,

    #[error("model does not contain term `{0}`")]
    MissingTerm(String),

    #[error("robust variance requires at least two clusters (found {0})")]
    SingleCluster(usize),

    #[error("fit did not converge: {0}")]
    NotConverged(String),

    #[error("estimation arm is empty: {0}")]
    EmptyArm(String),

    #[error("pseudo window [{pseudo_start}, {pseudo_end}) overlaps the true pilot starting {true_start}")]
    PseudoWindowOverlap {
        pseudo_start: i32,
        pseudo_end: i32,
        true_start: i32,
    },

    #[error("hazard {value} outside [0, 1) for subject {subject} at age {age}")]
    HazardOutOfRange {
        subject: String,
        age: u32,
        value: f64,
    },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("csv error{}: {msg}", line.map(|l| format!(" at line {l}")).unwrap_or_default())]
    Csv { line: Option<u64>, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
