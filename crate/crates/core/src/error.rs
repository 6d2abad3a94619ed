use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseGrammarError {
    #[error("syntax error at {line}:{col}: expected {}, found {found}", .expected.join(" or "))]
    Syntax {
        line: usize,
        col: usize,
        expected: Vec<String>,
        found: String,
    },
    #[error("duplicate rule `{name}` at {line}:{col}")]
    DuplicateRule {
        name: String,
        line: usize,
        col: usize,
    },
}

/// Errors raised while compiling a grammar into its choice model.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ModelError {
    #[error("reference to undefined rule `{0}`")]
    UndefinedRule(String),
    #[error("invalid regex in rule `{rule}`: {message}")]
    InvalidRegex { rule: String, message: String },
    #[error("grammar has no starting rule")]
    NoStartingRule,
    #[error("recursive rule `{rule}` reached at `{path}`; unroll the grammar or use the summary form")]
    RecursionUnbounded { rule: String, path: String },
    #[error("constraint variable `{0}` does not resolve to a choice variable")]
    UnresolvedConstraintVariable(String),
    #[error("constraint variable `{path}` is ambiguous: {candidates:?}")]
    AmbiguousConstraintVariable {
        path: String,
        candidates: Vec<String>,
    },
    #[error("unknown choice variable or term `{0}`")]
    UnknownVariable(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BackendError {
    #[error("database error: {0}")]
    Sql(String),
    #[error("query timed out after {0} ms")]
    Timeout(u64),
    #[error("no database backend is attached")]
    Unavailable,
}
