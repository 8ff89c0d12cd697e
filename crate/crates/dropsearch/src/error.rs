//! Crate-wide error type and result alias.

use std::fmt;
use std::path::PathBuf;

pub type Result<T> = std::result::Result<T, Error>;

/// Errors emitted anywhere in the search pipeline.
#[derive(Debug)]
pub enum Error {
    /// A network layer is inconsistent with its input shape.
    LayerShape { layer: usize, message: String },
    /// A dropout mask does not match the activation shape at its slot.
    MaskShape {
        slot: usize,
        expected: Vec<usize>,
        got: Vec<usize>,
    },
    /// Generic tensor shape mismatch outside a network context.
    ShapeMismatch {
        context: &'static str,
        expected: Vec<usize>,
        got: Vec<usize>,
    },
    /// A class label is outside the logits range.
    LabelOutOfRange { label: usize, classes: usize },
    /// A scalar parameter violates its domain (rates, learning rates, counts).
    InvalidParam { name: &'static str, message: String },
    /// Mask generation kept redrawing all-zero masks until the retry budget ran out.
    DegenerateRate { kind: &'static str, rate: f64 },
    /// A genome choice index is outside the slot's option list.
    GenomeOutOfRange {
        slot: usize,
        choice: usize,
        options: usize,
    },
    /// A non-finite value appeared where the pipeline requires finite numbers.
    NonFinite { context: String },
    /// Supernet training produced a non-finite loss.
    Diverged { iteration: usize },
    /// Candidate evaluation failed; carries the genome that triggered it.
    Evaluation { genome: String, message: String },
    /// Gaussian-process fitting failed (non-positive-definite after max jitter).
    GpFit { message: String },
    /// A binary input file does not follow its declared format.
    Format {
        path: PathBuf,
        offset: u64,
        message: String,
    },
    /// Filesystem failure, tagged with the path involved.
    Io { path: PathBuf, source: std::io::Error },
    /// Run configuration could not be parsed or failed validation.
    Config { message: String },
    /// A checkpoint was produced from a different supernet than the current config.
    SpecHashMismatch { expected: String, got: String },
    /// Exhaustive enumeration was requested on a space larger than the cap.
    SpaceCap { size: u128, cap: u128 },
    /// An operation received an empty collection it cannot work with.
    EmptyInput(&'static str),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub fn config(message: impl Into<String>) -> Self {
        Error::Config { message: message.into() }
    }

    /// Process exit code for the CLI: 2 I/O, 3 checkpoint hash mismatch,
    /// 4 enumeration cap exceeded, 1 anything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Io { .. } | Error::Format { .. } => 2,
            Error::SpecHashMismatch { .. } => 3,
            Error::SpaceCap { .. } => 4,
            _ => 1,
        }
    }
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::LayerShape { layer, message } => {
                write!(f, "layer {layer}: {message}")
            }
            Error::MaskShape { slot, expected, got } => {
                write!(
                    f,
                    "mask shape mismatch at slot {slot}: expected {expected:?}, got {got:?}"
                )
            }
            Error::ShapeMismatch { context, expected, got } => {
                write!(f, "{context}: expected shape {expected:?}, got {got:?}")
            }
            Error::LabelOutOfRange { label, classes } => {
                write!(f, "label {label} out of range for {classes} classes")
            }
            Error::InvalidParam { name, message } => write!(f, "invalid {name}: {message}"),
            Error::DegenerateRate { kind, rate } => {
                write!(
                    f,
                    "{kind} dropout at rate {rate} produced 100 consecutive all-zero masks"
                )
            }
            Error::GenomeOutOfRange { slot, choice, options } => {
                write!(
                    f,
                    "genome choice {choice} at slot {slot} exceeds {options} options"
                )
            }
            Error::NonFinite { context } => write!(f, "non-finite value in {context}"),
            Error::Diverged { iteration } => {
                write!(f, "training diverged (non-finite loss) at iteration {iteration}")
            }
            Error::Evaluation { genome, message } => {
                write!(f, "evaluation of genome {genome} failed: {message}")
            }
            Error::GpFit { message } => write!(f, "gp fit failed: {message}"),
            Error::Format { path, offset, message } => {
                write!(f, "{}: format error at byte {offset}: {message}", path.display())
            }
            Error::Io { path, source } => write!(f, "{}: {source}", path.display()),
            Error::Config { message } => write!(f, "config error: {message}"),
            Error::SpecHashMismatch { expected, got } => {
                write!(
                    f,
                    "checkpoint spec hash {got} does not match config spec hash {expected}"
                )
            }
            Error::SpaceCap { size, cap } => {
                write!(f, "search space size {size} exceeds enumeration cap {cap}")
            }
            Error::EmptyInput(what) => write!(f, "empty input: {what}"),
        }
    }
}

impl std::error::Error for Error {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        match self {
            Error::Io { source, .. } => Some(source),
            _ => None,
        }
    }
}
