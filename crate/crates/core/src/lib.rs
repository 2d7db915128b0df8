//! Matching-dependency enforcement on relational instances.
//!
//! The crate computes resolved and minimally resolved instances (MRIs) of an
//! instance under a set of matching dependencies, and answers conjunctive
//! queries under resolved-answer semantics, either by enumerating MRIs or by
//! evaluating a Count-based rewriting of the query.

pub mod closure;
pub mod cqa;
pub mod error;
pub mod instance;
pub mod mdspec;
pub mod query;
pub mod resolve;
pub mod similarity;
pub mod unionfind;
pub mod workload;

pub use error::{Error, Result};
