//! Data Interface Grammars: parse grammars describing an interface's query
//! space, bind choice variables, reduce to SQL, and synthesize interfaces.

pub mod choice;
pub mod binding;
pub mod catalog;
pub mod dbt;
pub mod error;
pub mod fixtures;
pub mod interface;
pub mod syntax;
pub mod tooling;
pub mod validate;
pub mod value;

pub use choice::{ChoiceModel, ChoiceVariable, QualifiedName};
pub use error::{BackendError, ModelError, ParseGrammarError};
pub use syntax::{format_grammar, parse_grammar, GrammarAst};
pub use validate::{validate_grammar, Finding, ValidationReport};
pub use value::Value;
