use std::fmt;

use crate::tensor::Shape;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Tensor axis, used to name the offending dimension in shape errors.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Axis {
    Batch,
    Channel,
    Height,
    Width,
}

impl fmt::Display for Axis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Axis::Batch => "batch",
            Axis::Channel => "channel",
            Axis::Height => "height",
            Axis::Width => "width",
        })
    }
}

#[derive(Debug)]
pub enum Error {
    /// A dimension did not match what the operation requires.
    Axis {
        op: &'static str,
        axis: Axis,
        expected: usize,
        found: usize,
    },
    /// Two operands cannot be combined (broadcast or exact match failed).
    Incompatible {
        op: &'static str,
        left: Shape,
        right: Shape,
    },
    /// Zero-sized dimension or data length disagreeing with the shape.
    InvalidShape(String),
    /// `maxpool2` on a plane smaller than 2×2.
    PoolUnderflow { height: usize, width: usize },
    /// Upsampling target smaller than the source.
    UpsampleTarget {
        height: usize,
        width: usize,
        target_height: usize,
        target_width: usize,
    },
    /// Explicit stepper stability bound violated.
    Cfl {
        bound: &'static str,
        value: f64,
        limit: f64,
    },
    /// Spectral field carries the wrong basis for the requested transform.
    Basis {
        expected: &'static str,
        found: &'static str,
    },
    /// Argument outside its admissible range.
    Domain(String),
    /// An evaluation produced NaN or infinity.
    NonFinite(String),
    /// Malformed or truncated image / tensor file.
    Format(String),
    /// Bad run configuration.
    Config(String),
    Io(std::io::Error),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Axis {
                op,
                axis,
                expected,
                found,
            } => write!(
                f,
                "{op}: shape mismatch on {axis} axis (expected {expected}, found {found})"
            ),
            Error::Incompatible { op, left, right } => {
                write!(f, "{op}: incompatible shapes {left} and {right}")
            }
            Error::InvalidShape(msg) => write!(f, "invalid shape: {msg}"),
            Error::PoolUnderflow { height, width } => {
                write!(f, "pool underflow: {height}x{width} plane is smaller than 2x2")
            }
            Error::UpsampleTarget {
                height,
                width,
                target_height,
                target_width,
            } => write!(
                f,
                "upsample target {target_height}x{target_width} is smaller than source {height}x{width}"
            ),
            Error::Cfl { bound, value, limit } => {
                write!(f, "CFL violation: {bound} = {value} exceeds {limit}")
            }
            Error::Basis { expected, found } => {
                write!(f, "spectral basis mismatch: expected {expected}, found {found}")
            }
            Error::Domain(msg) => write!(f, "{msg}"),
            Error::NonFinite(msg) => write!(f, "non-finite value: {msg}"),
            Error::Format(msg) => write!(f, "{msg}"),
            Error::Config(msg) => write!(f, "config: {msg}"),
            Error::Io(e) => write!(f, "io: {e}"),
        }
    }
}

impl std::error::Error for Error {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        match self {
            Error::Io(e) => Some(e),
            _ => None,
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e)
    }
}
