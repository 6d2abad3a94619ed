//! Factoring rewrite: a selection of literal strings that is the product of
//! a left part, a shared separator and a right part becomes a sequence of
//! two smaller selections, each in its own rule.

use std::collections::HashSet;

use indexmap::{IndexMap, IndexSet};

use crate::syntax::{Expr, GrammarAst, RuleDef};

/// Rewrite every factorable selection. The language is unchanged; a grammar
/// with nothing to factor comes back structurally equal.
pub fn factor_rewrite(ast: &GrammarAst) -> GrammarAst {
    let mut taken: HashSet<String> = ast.rules.keys().cloned().collect();
    let mut out: IndexMap<String, RuleDef> = IndexMap::new();
    let mut queue: Vec<RuleDef> = ast.rules.values().cloned().collect();
    queue.reverse();
    while let Some(rule) = queue.pop() {
        let mut fresh = Vec::new();
        // typed rules keep their alternatives (they name relations etc.)
        if rule.type_tag.is_some() {
            out.insert(rule.name.clone(), rule);
            continue;
        }
        let body = factor_expr(&rule.body, &rule.name, &mut taken, &mut fresh);
        out.insert(
            rule.name.clone(),
            RuleDef {
                body,
                ..rule
            },
        );
        // new rules may factor further; process them right after their parent
        for r in fresh.into_iter().rev() {
            queue.push(r);
        }
    }
    GrammarAst {
        rules: out,
        starting_rules: ast.starting_rules.clone(),
        constraints: ast.constraints.clone(),
    }
}

fn factor_expr(e: &Expr, rule: &str, taken: &mut HashSet<String>, fresh: &mut Vec<RuleDef>) -> Expr {
    match e {
        Expr::Selection(alts) => {
            if let Some(strings) = alts.iter().map(literal_text).collect::<Option<Vec<_>>>() {
                if let Some((left, sep, right)) = factor(&strings) {
                    let mut side = |parts: Vec<String>, suffix: &str| -> Option<Expr> {
                        match parts.len() {
                            1 if parts[0].is_empty() => None,
                            1 => Some(Expr::Literal(parts[0].clone())),
                            _ => {
                                let name = unique(&format!("{rule}_{suffix}"), taken);
                                fresh.push(RuleDef {
                                    name: name.clone(),
                                    type_tag: None,
                                    body: Expr::Selection(parts.into_iter().map(Expr::Literal).collect()),
                                });
                                Some(Expr::rule_ref(name))
                            }
                        }
                    };
                    let mut items = Vec::new();
                    items.extend(side(left, "lhs"));
                    items.push(Expr::Literal(sep));
                    items.extend(side(right, "rhs"));
                    return Expr::Sequence(items);
                }
            }
            Expr::Selection(alts.iter().map(|a| factor_expr(a, rule, taken, fresh)).collect())
        }
        Expr::Sequence(items) => Expr::Sequence(items.iter().map(|i| factor_expr(i, rule, taken, fresh)).collect()),
        Expr::ZeroOrMore(b) => Expr::ZeroOrMore(Box::new(factor_expr(b, rule, taken, fresh))),
        _ => e.clone(),
    }
}

fn unique(base: &str, taken: &mut HashSet<String>) -> String {
    let mut name = base.to_string();
    let mut k = 2;
    while taken.contains(&name) {
        name = format!("{base}{k}");
        k += 1;
    }
    taken.insert(name.clone());
    name
}

/// Text of an alternative made only of literals.
fn literal_text(e: &Expr) -> Option<String> {
    match e {
        Expr::Literal(t) => Some(t.clone()),
        Expr::Sequence(items) => items.iter().map(literal_text).collect(),
        _ => None,
    }
}

/// Find the longest separator occurring exactly once in every string such
/// that the strings are exactly {l + sep + r | l ∈ L, r ∈ R} and the split
/// is not trivial (at least one side has two or more parts).
pub(crate) fn factor(strings: &[String]) -> Option<(Vec<String>, String, Vec<String>)> {
    let distinct: IndexSet<&str> = strings.iter().map(String::as_str).collect();
    if distinct.len() < 2 {
        return None;
    }
    let first = strings[0].as_str();
    let mut candidates: Vec<&str> = Vec::new();
    for i in 0..first.len() {
        if !first.is_char_boundary(i) {
            continue;
        }
        for j in (i + 1)..=first.len() {
            if first.is_char_boundary(j) {
                candidates.push(&first[i..j]);
            }
        }
    }
    candidates.sort_by_key(|c| std::cmp::Reverse(c.len()));
    let mut tried = HashSet::new();
    for sep in candidates {
        if !tried.insert(sep) {
            continue;
        }
        let mut left: IndexSet<&str> = IndexSet::new();
        let mut right: IndexSet<&str> = IndexSet::new();
        let mut pairs = HashSet::new();
        let ok = distinct.iter().all(|s| {
            let mut hits = s.match_indices(sep);
            let (Some((at, _)), None) = (hits.next(), hits.next()) else {
                return false;
            };
            let (l, r) = (&s[..at], &s[at + sep.len()..]);
            left.insert(l);
            right.insert(r);
            pairs.insert((l, r));
            true
        });
        if !ok || left.len() * right.len() != distinct.len() || pairs.len() != distinct.len() {
            continue;
        }
        if left.len() < 2 && right.len() < 2 {
            continue;
        }
        return Some((
            left.into_iter().map(str::to_string).collect(),
            sep.to_string(),
            right.into_iter().map(str::to_string).collect(),
        ));
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::binding::enumerate_root;
    use crate::choice::ChoiceModel;
    use crate::fixtures;
    use crate::syntax::{format_grammar, parse_grammar};

    fn strings(xs: &[&str]) -> Vec<String> {
        xs.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn splits_on_the_separator() {
        let (l, sep, r) = factor(&strings(&["a=1", "a=2", "b=1", "b=2"])).unwrap();
        assert_eq!((l, sep.as_str(), r), (strings(&["a", "b"]), "=", strings(&["1", "2"])));
    }

    #[test]
    fn non_products_are_left_alone() {
        assert_eq!(factor(&strings(&["a=1", "b=2"])), None);
        assert_eq!(factor(&strings(&["x", "y"])), None);
    }

    #[test]
    fn predicates_grammar() {
        let ast = parse_grammar(fixtures::PREDICATES).unwrap();
        let f = factor_rewrite(&ast);
        let text = format_grammar(&f);
        assert!(text.contains("pred = pred_lhs '=' pred_rhs"), "{text}");
        let before = enumerate_root(&ChoiceModel::build(&ast).unwrap(), "q", None, 100).unwrap();
        let after = enumerate_root(&ChoiceModel::build(&f).unwrap(), "q", None, 100).unwrap();
        let set = |v: Vec<String>| v.into_iter().collect::<HashSet<_>>();
        assert_eq!(set(before), set(after));
    }

    #[test]
    fn fixed_point_without_common_parts() {
        let ast = parse_grammar(fixtures::DROUGHT).unwrap();
        assert_eq!(factor_rewrite(&ast), ast);
    }
}
