use alloc::boxed::Box;
use alloc::string::String;
use core::fmt;

/// Errors raised by the numerical core.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// A vector or matrix did not have the expected length.
    DimensionMismatch { expected: usize, found: usize },
    /// Two objects that must share a shape do not.
    ShapeMismatch(String),
    /// A feature value was NaN or infinite.
    NonFinite { sample: usize, index: usize },
    /// A label exceeded the declared class count.
    LabelOutOfRange { label: usize, classes: usize },
    /// A configuration value was outside its legal range.
    InvalidParameter(String),
    /// The requested task split cannot be built.
    InfeasibleSplit { classes: usize, tasks: usize },
    /// Domain-incremental splitting needs per-sample domain ids.
    MissingDomains,
    /// A class prototype was requested for a class without samples.
    UndefinedPrototype { class: usize },
    /// Cosine similarity or correlation with a zero-norm (or constant) vector.
    UndefinedSimilarity,
    /// A symmetric system could not be factorized, even after jitter.
    Singular { min_eigenvalue_bound: f64 },
    /// The normal-equation residual exceeded the accepted tolerance.
    ResidualTooLarge { residual: f64 },
    /// Cross-validation needs at least this many samples in the task.
    DegenerateSplit { samples: usize },
    /// The iterative oracle diverged.
    StepSize { lr: f64 },
    /// A serialized blob has the wrong magic or version.
    VersionMismatch,
    /// A serialized blob ended early or has inconsistent lengths.
    Corrupt(String),
    /// An error raised while processing a given task (zero-based).
    InTask { task: usize, source: Box<Error> },
}

pub type Result<T> = core::result::Result<T, Error>;

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::DimensionMismatch { expected, found } => {
                write!(f, "dimension mismatch: expected {expected}, found {found}")
            }
            Error::ShapeMismatch(what) => write!(f, "shape mismatch: {what}"),
            Error::NonFinite { sample, index } => {
                write!(f, "non-finite feature value in sample {sample} at index {index}")
            }
            Error::LabelOutOfRange { label, classes } => {
                write!(f, "label {label} out of range for {classes} classes")
            }
            Error::InvalidParameter(what) => write!(f, "invalid parameter: {what}"),
            Error::InfeasibleSplit { classes, tasks } => {
                write!(f, "cannot split {classes} classes into {tasks} tasks")
            }
            Error::MissingDomains => write!(f, "dataset has no domain annotations"),
            Error::UndefinedPrototype { class } => {
                write!(f, "class {class} has no samples; prototype undefined")
            }
            Error::UndefinedSimilarity => write!(f, "similarity undefined for zero-norm vector"),
            Error::Singular { min_eigenvalue_bound } => write!(
                f,
                "matrix is not positive definite (min eigenvalue <= {min_eigenvalue_bound:e})"
            ),
            Error::ResidualTooLarge { residual } => {
                write!(f, "solve residual {residual:e} exceeds tolerance")
            }
            Error::DegenerateSplit { samples } => {
                write!(f, "task with {samples} samples is too small for a holdout split")
            }
            Error::StepSize { lr } => write!(f, "gradient descent diverged with step size {lr}"),
            Error::VersionMismatch => write!(f, "unrecognised magic or format version"),
            Error::Corrupt(what) => write!(f, "corrupt data: {what}"),
            Error::InTask { task, source } => write!(f, "task {}: {source}", task + 1),
        }
    }
}

impl core::error::Error for Error {}

impl Error {
    /// True for errors caused by the numerics rather than the inputs.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self.root(),
            Error::Singular { .. } | Error::ResidualTooLarge { .. } | Error::StepSize { .. }
        )
    }

    /// The innermost error, with task context stripped.
    pub fn root(&self) -> &Error {
        match self {
            Error::InTask { source, .. } => source.root(),
            other => other,
        }
    }

    pub fn in_task(self, task: usize) -> Error {
        match self {
            Error::InTask { .. } => self,
            other => Error::InTask { task, source: Box::new(other) },
        }
    }
}
