//! Error type shared by every module of the crate.

use thiserror::Error;

/// Convenience alias used throughout the crate.
pub type Result<T, E = Error> = std::result::Result<T, E>;

/// All failures reported by parsing, rewriting, selection and analysis.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum Error {
    /// The input text does not follow the grammar.
    #[error("syntax error at {line}:{col}: expected {expected}, found {found}")]
    Syntax {
        line: usize,
        col: usize,
        expected: String,
        found: String,
    },

    /// An identifier was used before being declared.
    #[error("undeclared identifier `{name}` at {line}:{col}")]
    UndeclaredIdentifier { name: String, line: usize, col: usize },

    /// A variable was written in the key position of an encryption.
    #[error("variable `{name}` used as an encryption key at {line}:{col}")]
    VariableInKeyPosition { name: String, line: usize, col: usize },

    /// A substitution tried to place a compound message in key position.
    #[error("substitution places compound message `{value}` in the key position of `{key}`")]
    SubstitutedIntoKeyPosition { key: String, value: String },

    /// The atom is not registered as a key in the context.
    #[error("`{atom}` is not a key")]
    NotAKey { atom: String },

    /// A key has no security level for its inverse.
    #[error("key `{key}` has no declared level")]
    UnleveledKey { key: String },

    /// The rewriting step budget was exhausted.
    #[error("rewriting did not terminate within {steps} steps")]
    NonTermination { steps: usize },

    /// `f_derivative` could not locate the analysed atom in the source.
    #[error("atom `{atom}` does not occur in source `{source_msg}`")]
    OccurrenceNotFound { atom: String, source_msg: String },

    /// A non-public atom is sent outside any encryption.
    #[error("atom `{atom}` is sent in clear without a protective encryption")]
    NoProtectivePattern { atom: String },

    /// The message space contains an insufficiently protected atom.
    #[error("message space is not well-protected: {details}")]
    WellProtectionViolation { details: String },

    /// Inconsistent or incomplete context declarations.
    #[error("context error: {0}")]
    Context(String),

    /// Two protocol steps share an identifier or are out of order.
    #[error("step {id} is duplicated or out of order")]
    DuplicateStep { id: u64 },

    /// Failure while reading input or writing output.
    #[error("I/O failure on `{path}`: {reason}")]
    Io { path: String, reason: String },
}
