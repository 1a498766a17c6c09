//! The closed error catalog shared by every request-facing operation.

use std::fmt;

/// Error codes as they appear on the wire (`error <Code> <message>`).
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ErrorCode {
    ParseError,
    UnknownKind,
    UnknownIdentifier,
    UnknownFeature,
    TypeMismatch,
    PositionOutOfRange,
    FrozenFeature,
    PotencyViolation,
    IntegrityViolation,
    CardinalityViolation,
    CapacityExceeded,
    SingletonViolation,
    LevelViolation,
    RootDeletion,
    InheritanceCycle,
    InvalidCapacity,
}

impl ErrorCode {
    pub fn as_str(self) -> &'static str {
        match self {
            ErrorCode::ParseError => "ParseError",
            ErrorCode::UnknownKind => "UnknownKind",
            ErrorCode::UnknownIdentifier => "UnknownIdentifier",
            ErrorCode::UnknownFeature => "UnknownFeature",
            ErrorCode::TypeMismatch => "TypeMismatch",
            ErrorCode::PositionOutOfRange => "PositionOutOfRange",
            ErrorCode::FrozenFeature => "FrozenFeature",
            ErrorCode::PotencyViolation => "PotencyViolation",
            ErrorCode::IntegrityViolation => "IntegrityViolation",
            ErrorCode::CardinalityViolation => "CardinalityViolation",
            ErrorCode::CapacityExceeded => "CapacityExceeded",
            ErrorCode::SingletonViolation => "SingletonViolation",
            ErrorCode::LevelViolation => "LevelViolation",
            ErrorCode::RootDeletion => "RootDeletion",
            ErrorCode::InheritanceCycle => "InheritanceCycle",
            ErrorCode::InvalidCapacity => "InvalidCapacity",
        }
    }
}

impl fmt::Display for ErrorCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A request failure: exactly one code plus a deterministic message.
#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
#[error("{code} {message}")]
pub struct CrudError {
    pub code: ErrorCode,
    pub message: String,
}

impl CrudError {
    pub fn new(code: ErrorCode, message: impl Into<String>) -> Self {
        CrudError {
            code,
            message: message.into(),
        }
    }
}

pub type CrudResult<T> = Result<T, CrudError>;

macro_rules! crud_err {
    ($code:ident, $($arg:tt)*) => {
        $crate::error::CrudError::new($crate::error::ErrorCode::$code, format!($($arg)*))
    };
}
pub(crate) use crud_err;
