use alloc::string::String;
use core::fmt;

pub type Result<T> = core::result::Result<T, Error>;

/// Errors raised by the simulation and training core.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// A qubit count, vector length or matrix dimension is out of range.
    Size(String),
    /// Wires collide, are out of range, or do not match the gate arity.
    Wire(String),
    /// The requested evaluation exceeds what a backend can hold in memory.
    Backend(String),
    /// A parameter index does not address an angle of the circuit.
    Index { index: usize, len: usize },
    /// Operands with incompatible dimensions.
    Dimension { expected: usize, found: usize },
    /// A loss or weight became NaN or infinite.
    Divergence(String),
    /// Invalid configuration value.
    Config(String),
    /// An operation produced no data (e.g. filtering away every sample).
    Empty(String),
    /// A state or operator violates its defining invariant (norm, trace, unitarity).
    Invariant(String),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Size(msg) => write!(f, "size error: {msg}"),
            Error::Wire(msg) => write!(f, "wire error: {msg}"),
            Error::Backend(msg) => write!(f, "backend error: {msg}"),
            Error::Index { index, len } => {
                write!(f, "parameter index {index} out of range for {len} parameters")
            }
            Error::Dimension { expected, found } => {
                write!(f, "dimension mismatch: expected {expected}, found {found}")
            }
            Error::Divergence(msg) => write!(f, "divergence: {msg}"),
            Error::Config(msg) => write!(f, "config error: {msg}"),
            Error::Empty(msg) => write!(f, "empty result: {msg}"),
            Error::Invariant(msg) => write!(f, "invariant violated: {msg}"),
        }
    }
}

impl core::error::Error for Error {}
