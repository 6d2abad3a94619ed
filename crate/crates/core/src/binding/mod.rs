//! Binding choice variables to values, and reducing bound programs to query
//! strings.

mod domain;
mod enumerate;
mod eval;
mod parse;
mod reduce;
mod state;
mod unroll;

pub use domain::{
    attr_parameter, coerce, coerce_to, finite_values, is_regex_site, validate_value, DomainError,
    EnumerationError, MAX_ENUMERATED_RANGE,
};
pub use enumerate::{enumerate, enumerate_root, EnumerateError};
pub use eval::{bounds, check_predicate, compare, eval, eval_bool, listed_values, loose_eq, Bounds, EvalError};
pub use parse::{accepts, parse_input, recognize, Derivation, ParseError, ParseOutcome};
pub use reduce::{
    reduce, reduce_root, reduce_term, violations_for, ReduceError, ReductionResult, RootReduction,
};
pub use state::{Binding, BindingState, Effects, Provenance, Violation, ViolationKind};
pub use unroll::{level_name, unroll, UnrollError};

use crate::error::{BackendError, ModelError};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum BindError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Domain(#[from] DomainError),
    #[error("this domain needs a database connection")]
    BackendUnavailable,
    #[error("`{variable}` depends on `{parameter}`, which is unbound")]
    UnboundParameter { variable: String, parameter: String },
    #[error(transparent)]
    Backend(BackendError),
    #[error(transparent)]
    Parse(ParseError),
}
