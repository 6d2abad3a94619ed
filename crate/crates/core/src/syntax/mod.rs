//! Concrete `.dig` syntax: AST, parser and pretty-printer.

mod ast;
mod format;
mod parser;

pub use ast::{BinOp, Cond, Expr, GrammarAst, RuleDef, ValueType};
pub use format::{format_constraint, format_expr, format_grammar, format_predicate, format_rule, quote};
pub use parser::{compute_starting_rules, parse_constraint, parse_grammar, parse_predicate};
