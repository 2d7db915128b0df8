//! Modifiability, satisfaction, the chase, MRIs and the exhaustive oracle.

mod chase;
mod enforcement;
mod mri;
mod oracle;

pub use chase::{chase, chase_step, level_sum, resolve, step_bound, ChaseTrace, HighestLevel, Levels, ValuePolicy};
pub use enforcement::{
    check_fan_semantics, check_pair, is_stable, modifiable_positions, Edge, EnforcementGraph, FanCondition,
    FanViolation, SatisfactionReport, Violation,
};
pub use mri::{compute_mris, is_closed_form_mri, most_frequent, value_groups, ResolutionResult, DEFAULT_LIMIT};
pub use oracle::{oracle_explore, oracle_mris, OracleReport, MAX_ARITY, MAX_TUPLES};
