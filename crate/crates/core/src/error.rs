use alloc::string::String;
use core::fmt;

/// Errors raised by the numerical core.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// Two operands disagree on a dimension.
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },
    /// A configuration or argument violates its documented contract.
    InvalidArgument(String),
    /// Expert training produced a non-finite loss.
    Diverged { epoch: usize },
    /// Control-point optimisation produced a non-finite loss.
    ControlPointDiverged { iteration: usize },
    /// The student unroll produced non-finite parameters.
    StudentDiverged { step: usize },
    /// A matching segment has (numerically) coincident endpoints.
    DegenerateSegment,
    /// A label vector contains a single class where both are required.
    SingleClass,
    /// A label vector has no positive examples.
    NoPositives,
    /// Not enough members of a class for the requested sample.
    InsufficientClassMembers {
        class: u8,
        available: usize,
        requested: usize,
    },
    /// A trajectory is too short for the requested operation.
    TrajectoryTooShort { checkpoints: usize, required: usize },
    /// Path and trajectory endpoints do not coincide.
    EndpointMismatch(f64),
    /// Too many evaluation seeds failed.
    EvaluationFailed { failed: usize, total: usize },
    /// Condensation aborted; carries the iteration and the underlying error.
    Condense {
        iteration: usize,
        source: alloc::boxed::Box<Error>,
    },
    /// A raw table could not be interpreted.
    Table(String),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::DimensionMismatch {
                what,
                expected,
                found,
            } => write!(f, "dimension mismatch in {what}: expected {expected}, found {found}"),
            Error::InvalidArgument(msg) => write!(f, "invalid argument: {msg}"),
            Error::Diverged { epoch } => write!(f, "expert training diverged at epoch {epoch}"),
            Error::ControlPointDiverged { iteration } => {
                write!(f, "control point optimisation diverged at iteration {iteration}")
            }
            Error::StudentDiverged { step } => write!(f, "student unroll diverged at step {step}"),
            Error::DegenerateSegment => f.write_str("matching segment has coincident endpoints"),
            Error::SingleClass => f.write_str("labels contain a single class"),
            Error::NoPositives => f.write_str("labels contain no positives"),
            Error::InsufficientClassMembers {
                class,
                available,
                requested,
            } => write!(
                f,
                "class {class} has {available} members, {requested} requested"
            ),
            Error::TrajectoryTooShort {
                checkpoints,
                required,
            } => write!(
                f,
                "trajectory has {checkpoints} checkpoints, at least {required} required"
            ),
            Error::EndpointMismatch(d) => {
                write!(f, "path endpoints differ from trajectory endpoints by {d:e}")
            }
            Error::EvaluationFailed { failed, total } => {
                write!(f, "{failed} of {total} evaluation seeds diverged")
            }
            Error::Condense { iteration, source } => {
                write!(f, "condensation failed at iteration {iteration}: {source}")
            }
            Error::Table(msg) => write!(f, "table error: {msg}"),
        }
    }
}

impl core::error::Error for Error {}

pub type Result<T> = core::result::Result<T, Error>;

pub(crate) fn check_dim(what: &'static str, expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::DimensionMismatch {
            what,
            expected,
            found,
        })
    }
}
