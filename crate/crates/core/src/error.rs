use thiserror::Error;

use crate::mdspec::MdClass;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("schema line {line}: {message}")]
    Schema { line: usize, message: String },

    #[error("csv for relation {relation}: {message}")]
    Csv { relation: String, message: String },

    #[error("unknown relation `{0}`")]
    UnknownRelation(String),

    #[error("unknown attribute `{relation}[{attribute}]`")]
    UnknownAttribute { relation: String, attribute: String },

    #[error("type mismatch: {0}")]
    TagMismatch(String),

    #[error("duplicate tuple id {id} in relation {relation}")]
    DuplicateId { relation: String, id: u64 },

    #[error("instances are not comparable: {0}")]
    Incomparable(String),

    #[error("md line {line}: {message}")]
    MdParse { line: usize, message: String },

    #[error("query: {0}")]
    QueryParse(String),

    #[error("MD set classified as {0}; this operation supports NonInteracting, SimpleCycle and HSC only")]
    UnsupportedClass(MdClass),

    #[error("closed-form MRI candidate is not stable ({unstable} of {candidates} candidates); the MD set and instance fall outside the frequency characterization")]
    ClosedFormViolated { unstable: usize, candidates: usize },

    #[error("chase did not reach a stable instance within {0} steps")]
    MaxStepsExceeded(usize),

    #[error("oracle guard exceeded: {0}")]
    GuardExceeded(String),

    #[error("query is not an unchangeable-attribute-join query: variable `{0}` is bound, repeated and touches a changeable attribute")]
    NotUcaj(String),

    #[error("rewriting does not support equality/disjunction conditions")]
    ConditionsNotRewritable,

    #[error("MRI enumeration truncated at {0}; resolved answers would be unsound")]
    Truncated(usize),

    #[error("no legal answering strategy: {0}")]
    NoStrategy(String),

    #[error("MD is not of the form R[A]=R[A] -> R[B]<=>R[B] with A and B partitioning the attributes: {0}")]
    ReductionShape(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Stable machine-readable name of the variant.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Schema { .. } => "schema",
            Error::Csv { .. } => "csv",
            Error::UnknownRelation(_) => "unknown_relation",
            Error::UnknownAttribute { .. } => "unknown_attribute",
            Error::TagMismatch(_) => "tag_mismatch",
            Error::DuplicateId { .. } => "duplicate_id",
            Error::Incomparable(_) => "incomparable",
            Error::MdParse { .. } => "md_parse",
            Error::QueryParse(_) => "query_parse",
            Error::UnsupportedClass(_) => "unsupported_class",
            Error::ClosedFormViolated { .. } => "closed_form_violated",
            Error::MaxStepsExceeded(_) => "max_steps_exceeded",
            Error::GuardExceeded(_) => "guard_exceeded",
            Error::NotUcaj(_) => "not_ucaj",
            Error::ConditionsNotRewritable => "conditions_not_rewritable",
            Error::Truncated(_) => "truncated",
            Error::NoStrategy(_) => "no_strategy",
            Error::ReductionShape(_) => "reduction_shape",
            Error::Io(_) => "io",
        }
    }
}
