//! Bounded unrolling of recursive grammars.
//!
//! Rules on a cycle are copied once per level; following a DFS back edge
//! moves to the next level. References beyond the requested depth are dead,
//! and dead parts are pruned until a fixpoint.

use std::collections::{HashMap, HashSet};

use indexmap::IndexMap;
use petgraph::algo::tarjan_scc;
use petgraph::graph::DiGraph;

use crate::syntax::{Expr, GrammarAst, RuleDef};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum UnrollError {
    #[error("`{0}` has no derivation within the unrolling depth")]
    NoBaseCase(String),
}

/// Name of the level-`k` copy of `rule`.
pub fn level_name(rule: &str, k: usize) -> String {
    if k == 0 {
        rule.to_string()
    } else {
        format!("{rule}_d{k}")
    }
}

/// Rewrite `ast` so that every recursive rule is expanded at most `depth`
/// times along any derivation.
pub fn unroll(ast: &GrammarAst, depth: usize) -> Result<GrammarAst, UnrollError> {
    let names: Vec<&str> = ast.rules.keys().map(String::as_str).collect();
    let index: HashMap<&str, usize> = names.iter().enumerate().map(|(i, n)| (*n, i)).collect();

    let mut graph = DiGraph::<(), ()>::new();
    let nodes: Vec<_> = names.iter().map(|_| graph.add_node(())).collect();
    let mut succ: Vec<Vec<usize>> = vec![Vec::new(); names.len()];
    for (i, rule) in ast.rules.values().enumerate() {
        refs(&rule.body, &mut |r| {
            if let Some(&j) = index.get(r) {
                graph.add_edge(nodes[i], nodes[j], ());
                if !succ[i].contains(&j) {
                    succ[i].push(j);
                }
            }
        });
    }
    let mut component = vec![usize::MAX; names.len()];
    let mut cyclic = vec![false; names.len()];
    for (c, scc) in tarjan_scc(&graph).into_iter().enumerate() {
        let looped = scc.len() > 1 || succ[scc[0].index()].contains(&scc[0].index());
        for n in scc {
            component[n.index()] = c;
            cyclic[n.index()] = looped;
        }
    }

    // back edges of a DFS from the starting rules
    let mut back: HashSet<(usize, usize)> = HashSet::new();
    let mut state = vec![0u8; names.len()]; // 0 new, 1 on stack, 2 done
    fn dfs(u: usize, succ: &[Vec<usize>], state: &mut [u8], back: &mut HashSet<(usize, usize)>) {
        state[u] = 1;
        for &v in &succ[u] {
            match state[v] {
                0 => dfs(v, succ, state, back),
                1 => {
                    back.insert((u, v));
                }
                _ => {}
            }
        }
        state[u] = 2;
    }
    for root in &ast.starting_rules {
        if let Some(&r) = index.get(root.as_str()) {
            if state[r] == 0 {
                dfs(r, &succ, &mut state, &mut back);
            }
        }
    }

    let taken: HashSet<&str> = names.iter().copied().collect();
    let mut copy_name: HashMap<(usize, usize), String> = HashMap::new();
    let mut name_of = |i: usize, k: usize| -> String {
        copy_name
            .entry((i, k))
            .or_insert_with(|| {
                let mut n = level_name(names[i], k);
                while k > 0 && taken.contains(n.as_str()) {
                    n.push('_');
                }
                n
            })
            .clone()
    };

    // expand reachable copies; None marks a reference beyond the depth
    let mut out: IndexMap<String, Option<Expr>> = IndexMap::new();
    let mut work: Vec<(usize, usize)> = ast
        .starting_rules
        .iter()
        .filter_map(|r| index.get(r.as_str()).map(|&i| (i, 0)))
        .collect();
    let mut seen: HashSet<(usize, usize)> = work.iter().copied().collect();
    let mut defs: Vec<(usize, usize)> = Vec::new();
    while let Some((i, k)) = work.pop() {
        defs.push((i, k));
        let body = rewrite(&ast.rules[i].body, &mut |target| {
            let j = *index.get(target)?;
            let level = if !cyclic[j] || component[j] != component[i] {
                0
            } else if back.contains(&(i, j)) {
                k + 1
            } else {
                k
            };
            if level > depth {
                return Some(None);
            }
            if seen.insert((j, level)) {
                work.push((j, level));
            }
            Some(Some(name_of(j, level)))
        });
        out.insert(name_of(i, k), Some(body));
    }

    // prune to a fixpoint
    loop {
        let dead: HashSet<String> = out
            .iter()
            .filter(|(_, b)| b.is_none())
            .map(|(n, _)| n.clone())
            .collect();
        let mut changed = false;
        for body in out.values_mut() {
            if let Some(e) = body {
                let pruned = prune(e, &dead);
                if pruned.as_ref() != Some(e) {
                    changed = true;
                    *body = pruned;
                }
            }
        }
        if !changed {
            break;
        }
    }

    for root in &ast.starting_rules {
        if out.get(root).is_some_and(Option::is_none) {
            return Err(UnrollError::NoBaseCase(root.clone()));
        }
    }

    // keep declaration order, copies right after their original
    defs.sort_unstable();
    let live: HashSet<String> = reachable(&out, &ast.starting_rules);
    let mut rules = IndexMap::new();
    for (i, k) in defs {
        let name = name_of(i, k);
        if !live.contains(&name) {
            continue;
        }
        if let Some(Some(body)) = out.get(&name) {
            let orig = &ast.rules[i];
            rules.insert(
                name.clone(),
                RuleDef {
                    name,
                    type_tag: orig.type_tag.clone(),
                    body: body.clone(),
                },
            );
        }
    }
    Ok(GrammarAst {
        rules,
        starting_rules: ast.starting_rules.clone(),
        constraints: ast.constraints.clone(),
    })
}

fn refs(e: &Expr, f: &mut impl FnMut(&str)) {
    match e {
        Expr::Ref { rule, .. } => f(rule),
        Expr::Sequence(items) | Expr::Selection(items) => items.iter().for_each(|i| refs(i, f)),
        Expr::ZeroOrMore(b) => refs(b, f),
        _ => {}
    }
}

/// Replace reference targets. `target` returns `Some(None)` for a dead
/// reference (kept as a placeholder that `prune` removes) and `None` to
/// leave the name alone.
fn rewrite(e: &Expr, target: &mut impl FnMut(&str) -> Option<Option<String>>) -> Expr {
    match e {
        Expr::Ref { rule, annotation } => match target(rule) {
            Some(Some(name)) => Expr::Ref {
                rule: name,
                annotation: annotation.clone(),
            },
            Some(None) => Expr::Ref {
                rule: DEAD.to_string(),
                annotation: annotation.clone(),
            },
            None => e.clone(),
        },
        Expr::Sequence(items) => Expr::Sequence(items.iter().map(|i| rewrite(i, target)).collect()),
        Expr::Selection(items) => Expr::Selection(items.iter().map(|i| rewrite(i, target)).collect()),
        Expr::ZeroOrMore(b) => Expr::ZeroOrMore(Box::new(rewrite(b, target))),
        _ => e.clone(),
    }
}

/// Not a valid rule name, so it cannot collide.
const DEAD: &str = "#dead";

fn prune(e: &Expr, dead: &HashSet<String>) -> Option<Expr> {
    match e {
        Expr::Ref { rule, .. } if rule == DEAD || dead.contains(rule) => None,
        Expr::Sequence(items) => items
            .iter()
            .map(|i| prune(i, dead))
            .collect::<Option<Vec<_>>>()
            .map(Expr::Sequence),
        Expr::Selection(items) => {
            let mut alive: Vec<Expr> = items.iter().filter_map(|i| prune(i, dead)).collect();
            match alive.len() {
                0 => None,
                1 => alive.pop(),
                _ => Some(Expr::Selection(alive)),
            }
        }
        Expr::ZeroOrMore(b) => Some(match prune(b, dead) {
            Some(b) => Expr::ZeroOrMore(Box::new(b)),
            None => Expr::Literal(String::new()),
        }),
        _ => Some(e.clone()),
    }
}

fn reachable(rules: &IndexMap<String, Option<Expr>>, roots: &[String]) -> HashSet<String> {
    let mut live = HashSet::new();
    let mut work: Vec<String> = roots.to_vec();
    while let Some(r) = work.pop() {
        if !live.insert(r.clone()) {
            continue;
        }
        if let Some(Some(body)) = rules.get(&r) {
            refs(body, &mut |t| work.push(t.to_string()));
        }
    }
    live
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::binding::accepts;
    use crate::choice::ChoiceModel;
    use crate::fixtures;
    use crate::syntax::{format_grammar, parse_grammar};

    fn nested(n: usize) -> String {
        let mut q = "SELECT * FROM t WHERE a > 1".to_string();
        for _ in 0..n {
            q = format!("SELECT * FROM ({q}) WHERE b = 2");
        }
        q
    }

    #[test]
    fn query_builder_depths() {
        let ast = parse_grammar(fixtures::QUERYBUILDER).unwrap();
        for d in 0..3 {
            let u = unroll(&ast, d).unwrap();
            let m = ChoiceModel::build(&u).unwrap();
            assert!(!m.is_recursive(), "{}", format_grammar(&u));
            for n in 0..5 {
                assert_eq!(accepts(&m, "root", &nested(n), None), n <= d, "d={d} n={n}");
            }
        }
    }

    #[test]
    fn copies_are_named_by_level() {
        let ast = parse_grammar(fixtures::QUERYBUILDER).unwrap();
        let u = unroll(&ast, 1).unwrap();
        let names: Vec<&str> = u.rules.keys().map(String::as_str).collect();
        assert!(names.contains(&"query_d1") && names.contains(&"src_d1"));
        assert!(!names.contains(&"query_d2"));
    }

    #[test]
    fn no_base_case() {
        let ast = parse_grammar("r = a\na = '(' a ')'").unwrap();
        assert_eq!(unroll(&ast, 2), Err(UnrollError::NoBaseCase("r".into())));
    }

    #[test]
    fn non_recursive_grammar_is_unchanged() {
        let ast = parse_grammar(fixtures::DROUGHT).unwrap();
        assert_eq!(unroll(&ast, 3).unwrap(), ast);
    }
}
