//! Pretty-printer producing `.dig` text that reparses to the same AST.

use std::fmt::Write;

use super::ast::{Cond, Expr, GrammarAst, RuleDef};
use crate::value::{format_float, Value};

pub fn format_grammar(ast: &GrammarAst) -> String {
    let mut out = String::new();
    for rule in ast.rules.values() {
        out.push_str(&format_rule(rule));
        out.push('\n');
    }
    for c in &ast.constraints {
        let _ = writeln!(out, "constraint {}", format_constraint(c));
    }
    out
}

pub fn format_rule(rule: &RuleDef) -> String {
    let mut out = rule.name.clone();
    if let Some(tag) = &rule.type_tag {
        let _ = write!(out, ":{tag}");
    }
    out.push_str(" = ");
    out.push_str(&format_expr(&rule.body));
    out
}

pub fn format_expr(e: &Expr) -> String {
    let mut out = String::new();
    write_expr(&mut out, e, Ctx::Top);
    out
}

pub fn quote(text: &str) -> String {
    let mut out = String::with_capacity(text.len() + 2);
    out.push('\'');
    for c in text.chars() {
        match c {
            '\'' => out.push_str("\\'"),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\t' => out.push_str("\\t"),
            '\r' => out.push_str("\\r"),
            c => out.push(c),
        }
    }
    out.push('\'');
    out
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Ctx {
    Top,
    /// Alternative of a selection.
    Alt,
    /// Element of a sequence.
    Item,
    /// Operand of `*`.
    Postfix,
}

fn write_expr(out: &mut String, e: &Expr, ctx: Ctx) {
    let needs_parens = match e {
        Expr::Selection(_) => ctx != Ctx::Top,
        Expr::Sequence(_) => matches!(ctx, Ctx::Item | Ctx::Postfix),
        _ => false,
    };
    if needs_parens {
        out.push('(');
    }
    match e {
        Expr::Literal(text) => out.push_str(&quote(text)),
        Expr::Regex(pat) => {
            out.push('/');
            out.push_str(&pat.replace('/', "\\/"));
            out.push('/');
        }
        Expr::PredicateDomain { var, ty, predicate } => {
            let _ = write!(out, "{{ {var}:{ty}");
            if let Some(p) = predicate {
                let _ = write!(out, " | {}", format_predicate(p));
            }
            out.push_str(" }");
        }
        Expr::QueryDomain(q) => {
            let _ = write!(out, "{{ {q} }}");
        }
        Expr::Ref { rule, annotation } => {
            out.push_str(rule);
            if let Some(a) = annotation {
                let _ = write!(out, ":${a}");
            }
        }
        Expr::Sequence(items) => {
            for (i, item) in items.iter().enumerate() {
                if i > 0 {
                    out.push(' ');
                }
                write_expr(out, item, Ctx::Item);
            }
        }
        Expr::Selection(alts) => {
            for (i, alt) in alts.iter().enumerate() {
                if i > 0 {
                    out.push_str(" | ");
                }
                write_expr(out, alt, Ctx::Alt);
            }
        }
        Expr::ZeroOrMore(body) => {
            write_expr(out, body, Ctx::Postfix);
            out.push('*');
        }
    }
    if needs_parens {
        out.push(')');
    }
}

pub fn format_predicate(c: &Cond) -> String {
    let mut out = String::new();
    write_cond(&mut out, c, 0, false);
    out
}

pub fn format_constraint(c: &Cond) -> String {
    let mut out = String::new();
    write_cond(&mut out, c, 0, true);
    out
}

fn write_const(out: &mut String, v: &Value) {
    match v {
        Value::Bool(b) => out.push_str(if *b { "true" } else { "false" }),
        Value::Int(i) => {
            let _ = write!(out, "{i}");
        }
        Value::Float(f) => out.push_str(&format_float(*f)),
        Value::Str(s) => out.push_str(&quote(s)),
        Value::Date(d) => {
            let _ = write!(out, "date '{}'", d.format("%Y-%m-%d"));
        }
        Value::Tuple(items) => {
            // tuples never come out of the parser; render as a list literal
            out.push('[');
            for (i, item) in items.iter().enumerate() {
                if i > 0 {
                    out.push_str(", ");
                }
                write_const(out, item);
            }
            out.push(']');
        }
    }
}

/// `min_prec` is the binding strength required by the surrounding context;
/// anything weaker gets parenthesized.
fn write_cond(out: &mut String, c: &Cond, min_prec: u8, dollar: bool) {
    match c {
        Cond::Const(v) => {
            let negative = matches!(v, Value::Int(i) if *i < 0)
                || matches!(v, Value::Float(f) if f.is_sign_negative());
            if negative && min_prec > 5 {
                out.push('(');
                write_const(out, v);
                out.push(')');
            } else {
                write_const(out, v);
            }
        }
        Cond::Var(path) => {
            for (i, seg) in path.iter().enumerate() {
                if i > 0 {
                    out.push('/');
                }
                if dollar {
                    out.push('$');
                }
                out.push_str(seg);
            }
        }
        Cond::Not(inner) => {
            let paren = min_prec > 3;
            if paren {
                out.push('(');
            }
            out.push_str("not ");
            write_cond(out, inner, 3, dollar);
            if paren {
                out.push(')');
            }
        }
        Cond::Neg(inner) => {
            out.push_str("-(");
            write_cond(out, inner, 0, dollar);
            out.push(')');
        }
        Cond::Binary(op, lhs, rhs) => {
            let prec = op.precedence();
            let paren = prec < min_prec;
            if paren {
                out.push('(');
            }
            // left-associative: the right operand binds one tighter; chained
            // comparisons are not allowed, so both sides of one must be tighter
            let lhs_min = if op.is_comparison() { prec + 1 } else { prec };
            write_cond(out, lhs, lhs_min, dollar);
            let _ = write!(out, " {} ", op.symbol());
            write_cond(out, rhs, prec + 1, dollar);
            if paren {
                out.push(')');
            }
        }
        Cond::In(lhs, items) => {
            let paren = min_prec > 4;
            if paren {
                out.push('(');
            }
            write_cond(out, lhs, 5, dollar);
            out.push_str(" in [");
            for (i, item) in items.iter().enumerate() {
                if i > 0 {
                    out.push_str(", ");
                }
                write_cond(out, item, 5, dollar);
            }
            out.push(']');
            if paren {
                out.push(')');
            }
        }
        Cond::Matches(lhs, pat) => {
            let paren = min_prec > 4;
            if paren {
                out.push('(');
            }
            write_cond(out, lhs, 5, dollar);
            out.push_str(" matches ");
            out.push_str(&quote(pat));
            if paren {
                out.push(')');
            }
        }
    }
}
