//! Static well-formedness checks. Every problem becomes a finding; an empty
//! report means the grammar is well-formed.

use std::fmt;

use serde::Serialize;

use crate::choice::ChoiceModel;
use crate::error::ModelError;
use crate::syntax::{compute_starting_rules, Expr, GrammarAst, ValueType};
use crate::value::parse_date;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Finding {
    UndefinedRule { rule: String, referenced_from: String },
    /// Declared as a starting rule but referenced by another rule.
    StartingRuleReferenced { rule: String },
    /// Referenced by no rule but missing from the starting rules.
    UndeclaredStartingRule { rule: String },
    NoStartingRule,
    UnresolvedConstraintVariable { path: String },
    AmbiguousConstraintVariable { path: String, candidates: Vec<String> },
    TypeViolation { rule: String, message: String },
    InvalidRegex { rule: String, message: String },
    /// A predicate-domain predicate mentions a variable other than its own.
    ForeignPredicateVariable { rule: String, variable: String },
    MalformedExpression { rule: String, message: String },
}

impl fmt::Display for Finding {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Finding::UndefinedRule { rule, referenced_from } => {
                write!(f, "rule `{referenced_from}` references undefined rule `{rule}`")
            }
            Finding::StartingRuleReferenced { rule } => {
                write!(f, "starting rule `{rule}` is referenced by another rule")
            }
            Finding::UndeclaredStartingRule { rule } => {
                write!(f, "rule `{rule}` is unreferenced but not a starting rule")
            }
            Finding::NoStartingRule => f.write_str("grammar has no starting rule"),
            Finding::UnresolvedConstraintVariable { path } => {
                write!(f, "constraint variable `{path}` resolves to no choice variable")
            }
            Finding::AmbiguousConstraintVariable { path, candidates } => {
                write!(f, "constraint variable `{path}` is ambiguous: {}", candidates.join(", "))
            }
            Finding::TypeViolation { rule, message } => write!(f, "rule `{rule}`: {message}"),
            Finding::InvalidRegex { rule, message } => {
                write!(f, "rule `{rule}`: invalid regex: {message}")
            }
            Finding::ForeignPredicateVariable { rule, variable } => {
                write!(f, "rule `{rule}`: predicate mentions foreign variable `{variable}`")
            }
            Finding::MalformedExpression { rule, message } => write!(f, "rule `{rule}`: {message}"),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct ValidationReport {
    pub findings: Vec<Finding>,
}

impl ValidationReport {
    pub fn is_empty(&self) -> bool {
        self.findings.is_empty()
    }
}

pub fn validate_grammar(ast: &GrammarAst) -> ValidationReport {
    let mut findings = Vec::new();

    for rule in ast.rules.values() {
        rule.body.for_each_ref(&mut |target, _| {
            if !ast.rules.contains_key(target) {
                findings.push(Finding::UndefinedRule {
                    rule: target.to_string(),
                    referenced_from: rule.name.clone(),
                });
            }
        });
        check_shape(&rule.name, &rule.body, &mut findings);
        if let Some(tag) = &rule.type_tag {
            check_tag(&rule.name, tag, &rule.body, &mut findings);
        }
    }

    let computed = compute_starting_rules(&ast.rules);
    for declared in &ast.starting_rules {
        if ast.rules.contains_key(declared) && !computed.contains(declared) {
            findings.push(Finding::StartingRuleReferenced {
                rule: declared.clone(),
            });
        }
    }
    for rule in &computed {
        if !ast.starting_rules.contains(rule) {
            findings.push(Finding::UndeclaredStartingRule { rule: rule.clone() });
        }
    }
    if ast.starting_rules.is_empty() && !ast.rules.is_empty() {
        findings.push(Finding::NoStartingRule);
    }

    let structural = findings.iter().any(|f| {
        matches!(
            f,
            Finding::UndefinedRule { .. } | Finding::NoStartingRule | Finding::StartingRuleReferenced { .. }
        )
    });
    if !structural {
        match ChoiceModel::build(ast) {
            Ok(_) => {}
            Err(ModelError::InvalidRegex { rule, message }) => {
                findings.push(Finding::InvalidRegex { rule, message })
            }
            Err(ModelError::UnresolvedConstraintVariable(path)) => {
                findings.push(Finding::UnresolvedConstraintVariable { path })
            }
            Err(ModelError::AmbiguousConstraintVariable { path, candidates }) => {
                findings.push(Finding::AmbiguousConstraintVariable { path, candidates })
            }
            Err(ModelError::UndefinedRule(rule)) => findings.push(Finding::UndefinedRule {
                rule,
                referenced_from: String::new(),
            }),
            Err(ModelError::NoStartingRule) => findings.push(Finding::NoStartingRule),
            Err(_) => {}
        }
    }
    ValidationReport { findings }
}

fn check_shape(rule: &str, e: &Expr, out: &mut Vec<Finding>) {
    let bad = |msg: &str| Finding::MalformedExpression {
        rule: rule.to_string(),
        message: msg.to_string(),
    };
    match e {
        Expr::Sequence(items) => {
            if items.len() < 2 {
                out.push(bad("sequence needs at least two elements"));
            }
            items.iter().for_each(|i| check_shape(rule, i, out));
        }
        Expr::Selection(alts) => {
            if alts.len() < 2 {
                out.push(bad("selection needs at least two alternatives"));
            }
            alts.iter().for_each(|a| check_shape(rule, a, out));
        }
        Expr::ZeroOrMore(body) => {
            if matches!(body.as_ref(), Expr::Literal(t) if t.is_empty()) {
                out.push(bad("zero-or-more body matches nothing"));
            }
            check_shape(rule, body, out);
        }
        Expr::PredicateDomain {
            var,
            predicate: Some(p),
            ..
        } => {
            for path in p.variables() {
                if path.len() != 1 || path[0] != *var {
                    out.push(Finding::ForeignPredicateVariable {
                        rule: rule.to_string(),
                        variable: path.join("/"),
                    });
                }
            }
        }
        _ => {}
    }
}

/// Literal alternatives must be members of the tagged type; predicate
/// domains must agree with the tag.
fn check_tag(rule: &str, tag: &ValueType, body: &Expr, out: &mut Vec<Finding>) {
    let alts: Vec<&Expr> = match body {
        Expr::Selection(alts) => alts.iter().collect(),
        other => vec![other],
    };
    for alt in alts {
        match alt {
            Expr::Literal(text) if !literal_has_type(text, tag) => out.push(Finding::TypeViolation {
                rule: rule.to_string(),
                message: format!("literal '{text}' is not a valid {tag}"),
            }),
            Expr::PredicateDomain { ty, .. } if ty != tag && !(tag.is_numeric() && ty.is_numeric()) => {
                out.push(Finding::TypeViolation {
                    rule: rule.to_string(),
                    message: format!("domain of type {ty} under a rule tagged {tag}"),
                })
            }
            Expr::Sequence(_) | Expr::ZeroOrMore(_) => out.push(Finding::TypeViolation {
                rule: rule.to_string(),
                message: format!("a {tag}-tagged rule must produce a single token"),
            }),
            _ => {}
        }
    }
}

pub(crate) fn is_identifier(text: &str) -> bool {
    let mut chars = text.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_alphabetic() || c == '_')
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

fn literal_has_type(text: &str, tag: &ValueType) -> bool {
    match tag {
        ValueType::Int => text.parse::<i64>().is_ok(),
        ValueType::Float => text.parse::<f64>().is_ok(),
        ValueType::Date => parse_date(text).is_some(),
        ValueType::Str => true,
        ValueType::Rel | ValueType::Attr(_) => is_identifier(text),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::syntax::parse_grammar;

    fn report(src: &str) -> Vec<Finding> {
        validate_grammar(&parse_grammar(src).unwrap()).findings
    }

    #[test]
    fn undefined_rule() {
        assert_eq!(
            report("q = 'a' z"),
            [Finding::UndefinedRule {
                rule: "z".into(),
                referenced_from: "q".into()
            }]
        );
    }

    #[test]
    fn rel_tag_needs_identifiers() {
        let f = report("q = 'FROM ' t\nt:rel = 'chirps' | 'not a table'");
        assert!(matches!(&f[..], [Finding::TypeViolation { rule, .. }] if rule == "t"));
    }

    #[test]
    fn starting_rule_mismatch() {
        let mut ast = parse_grammar("q = a\na = 'x'").unwrap();
        ast.starting_rules = vec!["q".into(), "a".into()];
        assert_eq!(
            validate_grammar(&ast).findings,
            [Finding::StartingRuleReferenced { rule: "a".into() }]
        );
    }

    #[test]
    fn foreign_predicate_variable() {
        let f = report("q = v\nv = { x:int | y > 1 }");
        assert_eq!(
            f,
            [Finding::ForeignPredicateVariable {
                rule: "v".into(),
                variable: "y".into()
            }]
        );
    }

    #[test]
    fn bad_regex() {
        let f = report("q = /(/");
        assert!(matches!(&f[..], [Finding::InvalidRegex { .. }]));
    }
}
