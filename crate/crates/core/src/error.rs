use std::fmt;

use thiserror::Error;

/// Category of a runtime failure. Shared by every execution mode so outcomes
/// can be compared verbatim.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub enum ErrorKind {
    TypeError,
    ReadOnlyError,
    ReferenceError,
    RangeError,
    /// Engine self-check failure (`--assert-contexts`); never produced by the oracle.
    InternalError,
}

impl fmt::Display for ErrorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            ErrorKind::TypeError => "TypeError",
            ErrorKind::ReadOnlyError => "ReadOnlyError",
            ErrorKind::ReferenceError => "ReferenceError",
            ErrorKind::RangeError => "RangeError",
            ErrorKind::InternalError => "InternalError",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error, serde::Serialize, serde::Deserialize)]
#[error("{kind}: {message}")]
pub struct RuntimeError {
    pub kind: ErrorKind,
    pub message: String,
}

impl RuntimeError {
    pub fn new(kind: ErrorKind, message: impl Into<String>) -> Self {
        RuntimeError { kind, message: message.into() }
    }

    pub fn type_error(message: impl Into<String>) -> Self {
        Self::new(ErrorKind::TypeError, message)
    }

    pub fn read_only(name: &str) -> Self {
        Self::new(ErrorKind::ReadOnlyError, format!("cannot assign to read-only property '{name}'"))
    }

    pub fn not_defined(name: &str) -> Self {
        Self::new(ErrorKind::ReferenceError, format!("{name} is not defined"))
    }

    pub fn stack_overflow() -> Self {
        Self::new(ErrorKind::RangeError, "maximum call depth exceeded")
    }

    pub fn not_callable() -> Self {
        Self::type_error("value is not a function")
    }

    pub fn cannot_read(name: &str, base: &str) -> Self {
        Self::type_error(format!("cannot read property '{name}' of {base}"))
    }

    pub fn cannot_write(name: &str, base: &str) -> Self {
        Self::type_error(format!("cannot set property '{name}' of {base}"))
    }

    pub fn bad_proto(kind: &str) -> Self {
        Self::type_error(format!("object prototype may only be an object or null, got {kind}"))
    }

    pub fn not_indexable(kind: &str) -> Self {
        Self::type_error(format!("cannot index {kind}"))
    }

    pub fn bad_index(kind: &str) -> Self {
        Self::type_error(format!("array index must be int32, got {kind}"))
    }

    pub fn index_out_of_bounds(index: i32, len: usize) -> Self {
        Self::type_error(format!("array index {index} out of bounds for length {len}"))
    }

    pub fn bad_argument(builtin: &str, expected: &str) -> Self {
        Self::type_error(format!("{builtin} expects {expected}"))
    }
}

/// Calls nested deeper than this raise a `RangeError` in every mode.
pub const MAX_CALL_DEPTH: usize = 200;
