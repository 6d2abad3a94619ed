use std::fmt;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::value::Value;

/// A parsed grammar: rules in declaration order, the starting rules and the
/// global constraints.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GrammarAst {
    pub rules: IndexMap<String, RuleDef>,
    pub starting_rules: Vec<String>,
    pub constraints: Vec<Cond>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuleDef {
    pub name: String,
    pub type_tag: Option<ValueType>,
    pub body: Expr,
}

/// Types usable as a rule tag or as the base type of a predicate domain.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ValueType {
    Int,
    Float,
    Str,
    Date,
    Rel,
    /// Attribute name, optionally of the relation chosen by another rule.
    Attr(Option<String>),
}

impl ValueType {
    pub fn is_numeric(&self) -> bool {
        matches!(self, ValueType::Int | ValueType::Float)
    }

    pub fn parse(name: &str, param: Option<&str>) -> Option<ValueType> {
        let ty = match name {
            "int" => ValueType::Int,
            "float" => ValueType::Float,
            "str" => ValueType::Str,
            "date" => ValueType::Date,
            "rel" => ValueType::Rel,
            "attr" => return Some(ValueType::Attr(param.map(str::to_string))),
            _ => return None,
        };
        param.is_none().then_some(ty)
    }
}

impl fmt::Display for ValueType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ValueType::Int => f.write_str("int"),
            ValueType::Float => f.write_str("float"),
            ValueType::Str => f.write_str("str"),
            ValueType::Date => f.write_str("date"),
            ValueType::Rel => f.write_str("rel"),
            ValueType::Attr(None) => f.write_str("attr"),
            ValueType::Attr(Some(p)) => write!(f, "attr[{p}]"),
        }
    }
}

/// A parsing expression.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Expr {
    Literal(String),
    Regex(String),
    PredicateDomain {
        var: String,
        ty: ValueType,
        predicate: Option<Cond>,
    },
    QueryDomain(String),
    Ref {
        rule: String,
        annotation: Option<String>,
    },
    Sequence(Vec<Expr>),
    Selection(Vec<Expr>),
    ZeroOrMore(Box<Expr>),
}

impl Expr {
    pub fn lit(text: impl Into<String>) -> Expr {
        Expr::Literal(text.into())
    }

    pub fn rule_ref(rule: impl Into<String>) -> Expr {
        Expr::Ref {
            rule: rule.into(),
            annotation: None,
        }
    }

    pub fn annotated(rule: impl Into<String>, var: impl Into<String>) -> Expr {
        Expr::Ref {
            rule: rule.into(),
            annotation: Some(var.into()),
        }
    }

    /// Selection, star, predicate domain, query domain and regex terminal
    /// nodes are where a grammar varies.
    pub fn is_variability_site(&self) -> bool {
        matches!(
            self,
            Expr::Selection(_)
                | Expr::ZeroOrMore(_)
                | Expr::PredicateDomain { .. }
                | Expr::QueryDomain(_)
                | Expr::Regex(_)
        )
    }

    /// Calls `f` on every nonterminal reference in the expression, in order.
    pub fn for_each_ref<'a>(&'a self, f: &mut impl FnMut(&'a str, Option<&'a str>)) {
        match self {
            Expr::Ref { rule, annotation } => f(rule, annotation.as_deref()),
            Expr::Sequence(items) | Expr::Selection(items) => {
                items.iter().for_each(|e| e.for_each_ref(f))
            }
            Expr::ZeroOrMore(body) => body.for_each_ref(f),
            Expr::PredicateDomain {
                ty: ValueType::Attr(Some(param)),
                ..
            } => f(param, None),
            _ => {}
        }
    }
}

/// Operators of the predicate/constraint language.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BinOp {
    Or,
    And,
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
    Add,
    Sub,
    Mul,
    Div,
}

impl BinOp {
    pub fn symbol(self) -> &'static str {
        match self {
            BinOp::Or => "or",
            BinOp::And => "and",
            BinOp::Eq => "=",
            BinOp::Ne => "!=",
            BinOp::Lt => "<",
            BinOp::Le => "<=",
            BinOp::Gt => ">",
            BinOp::Ge => ">=",
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Mul => "*",
            BinOp::Div => "/",
        }
    }

    pub fn precedence(self) -> u8 {
        match self {
            BinOp::Or => 1,
            BinOp::And => 2,
            BinOp::Eq | BinOp::Ne | BinOp::Lt | BinOp::Le | BinOp::Gt | BinOp::Ge => 4,
            BinOp::Add | BinOp::Sub => 5,
            BinOp::Mul | BinOp::Div => 6,
        }
    }

    pub fn is_comparison(self) -> bool {
        self.precedence() == 4
    }

    /// Swap the operand order of a comparison (`a < b` == `b > a`).
    pub fn flipped(self) -> BinOp {
        match self {
            BinOp::Lt => BinOp::Gt,
            BinOp::Le => BinOp::Ge,
            BinOp::Gt => BinOp::Lt,
            BinOp::Ge => BinOp::Le,
            op => op,
        }
    }
}

/// Boolean/arithmetic expression used both for predicate-domain predicates
/// (variables are bare identifiers) and for grammar constraints (variables
/// are `$a/$b` paths).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Cond {
    Const(Value),
    Var(Vec<String>),
    Not(Box<Cond>),
    Neg(Box<Cond>),
    Binary(BinOp, Box<Cond>, Box<Cond>),
    In(Box<Cond>, Vec<Cond>),
    Matches(Box<Cond>, String),
}

impl Cond {
    pub fn binary(op: BinOp, lhs: Cond, rhs: Cond) -> Cond {
        Cond::Binary(op, Box::new(lhs), Box::new(rhs))
    }

    pub fn var(name: &str) -> Cond {
        Cond::Var(vec![name.to_string()])
    }

    /// All variable paths in the expression, in order of appearance.
    pub fn variables(&self) -> Vec<&[String]> {
        let mut out = Vec::new();
        self.collect_vars(&mut out);
        out
    }

    fn collect_vars<'a>(&'a self, out: &mut Vec<&'a [String]>) {
        match self {
            Cond::Const(_) => {}
            Cond::Var(path) => out.push(path),
            Cond::Not(e) | Cond::Neg(e) | Cond::Matches(e, _) => e.collect_vars(out),
            Cond::Binary(_, a, b) => {
                a.collect_vars(out);
                b.collect_vars(out);
            }
            Cond::In(e, items) => {
                e.collect_vars(out);
                items.iter().for_each(|i| i.collect_vars(out));
            }
        }
    }
}
