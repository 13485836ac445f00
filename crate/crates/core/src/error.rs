use alloc::string::String;
use core::fmt;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// A value's shape does not match its attribute descriptor or bound.
    TypeMismatch { attribute: String, expected: &'static str },
    /// Vector lengths disagree with the schema.
    Schema { expected: usize, found: usize },
    InvalidDescriptor { attribute: String, reason: &'static str },
    DuplicateAttribute(String),
    IdentityNotCategorical,
    UnknownLabel { attribute: String, label: String },
    InvalidWeight { index: usize, value: f64 },
    /// Input outside the mathematical domain of an operation.
    Domain(&'static str),
    ModelConfig(String),
    ForeignProposal { model: String, proposal: String },
    Registry(String),
    EmptyRegistry,
    /// Operation requires an open episode (or no open episode).
    EpisodeState(&'static str),
    /// Every candidate proposal for the request has been rejected.
    Exhausted,
    /// A structural invariant was violated; indicates a bug or corrupt input.
    Invariant(&'static str),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::TypeMismatch { attribute, expected } => {
                write!(f, "type mismatch for `{attribute}`: expected {expected}")
            }
            Error::Schema { expected, found } => {
                write!(f, "schema length mismatch: expected {expected}, found {found}")
            }
            Error::InvalidDescriptor { attribute, reason } => {
                write!(f, "invalid descriptor `{attribute}`: {reason}")
            }
            Error::DuplicateAttribute(name) => write!(f, "duplicate attribute `{name}`"),
            Error::IdentityNotCategorical => {
                f.write_str("attribute 0 (user identity) must be categorical")
            }
            Error::UnknownLabel { attribute, label } => {
                write!(f, "label `{label}` is not declared for `{attribute}`")
            }
            Error::InvalidWeight { index, value } => {
                write!(f, "weight {index} = {value} is outside (0, 1)")
            }
            Error::Domain(what) => write!(f, "domain error: {what}"),
            Error::ModelConfig(msg) => write!(f, "model configuration error: {msg}"),
            Error::ForeignProposal { model, proposal } => {
                write!(f, "proposal for `{proposal}` sent to the model of `{model}`")
            }
            Error::Registry(msg) => write!(f, "registry error: {msg}"),
            Error::EmptyRegistry => f.write_str("no devices are registered"),
            Error::EpisodeState(msg) => write!(f, "episode state error: {msg}"),
            Error::Exhausted => f.write_str("no remaining proposals"),
            Error::Invariant(msg) => write!(f, "internal invariant violated: {msg}"),
        }
    }
}

impl core::error::Error for Error {}
