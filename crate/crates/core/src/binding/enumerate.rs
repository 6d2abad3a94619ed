//! Exhaustive listing of the queries a non-recursive grammar expresses.

use std::collections::HashMap;

use indexmap::{IndexMap, IndexSet};

use crate::catalog::Catalog;
use crate::choice::{ChoiceModel, DomainDescriptor, NodeId, NodeKind, QualifiedName, VariableKind};
use crate::error::ModelError;
use crate::syntax::ValueType;
use crate::value::Value;

use super::domain::{attr_parameter, finite_values, EnumerationError};
use super::eval::{eval_bool, loose_eq};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EnumerateError {
    #[error("grammar is recursive; unroll it first")]
    Recursive,
    #[error(transparent)]
    Domain(#[from] EnumerationError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("`{root}` has more than {cap} distinct queries")]
    TooMany { root: String, cap: usize },
}

/// Every distinct query string of every starting rule, in discovery order.
/// Fails once a root exceeds `cap` strings.
pub fn enumerate(
    model: &ChoiceModel,
    catalog: Option<&Catalog>,
    cap: usize,
) -> Result<IndexMap<String, Vec<String>>, EnumerateError> {
    if model.is_recursive() {
        return Err(EnumerateError::Recursive);
    }
    let mut out = IndexMap::new();
    for root in model.grammar.roots() {
        let strings = enumerate_root(model, root, catalog, cap)?;
        out.insert(root.to_string(), strings);
    }
    Ok(out)
}

pub fn enumerate_root(
    model: &ChoiceModel,
    root: &str,
    catalog: Option<&Catalog>,
    cap: usize,
) -> Result<Vec<String>, EnumerateError> {
    if model.is_recursive() {
        return Err(EnumerateError::Recursive);
    }
    let rid = model
        .grammar
        .rule_id(root)
        .ok_or_else(|| ModelError::UndefinedRule(root.to_string()))?;
    let mut e = Enumerator {
        model,
        catalog,
        cap,
        root,
        env: HashMap::new(),
        bound: Vec::new(),
        out: String::new(),
        found: IndexSet::new(),
        domains: HashMap::new(),
        classes: HashMap::new(),
    };
    let work = vec![Item::Scope(model.grammar.rule(rid).body, QualifiedName::root(root))];
    e.run(work)?;
    Ok(e.found.into_iter().collect())
}

#[derive(Debug, Clone)]
enum Item {
    /// Node is the scope root at the path.
    Scope(NodeId, QualifiedName),
    /// Node sits inside the scope at the path.
    Inner(NodeId, QualifiedName),
}

struct Enumerator<'a> {
    model: &'a ChoiceModel,
    catalog: Option<&'a Catalog>,
    cap: usize,
    root: &'a str,
    /// Class key → value of every class bound on the current derivation.
    env: HashMap<String, Value>,
    bound: Vec<(QualifiedName, Value)>,
    out: String,
    found: IndexSet<String>,
    domains: HashMap<(QualifiedName, Option<Value>), Vec<Value>>,
    classes: HashMap<QualifiedName, String>,
}

impl Enumerator<'_> {
    fn run(&mut self, mut work: Vec<Item>) -> Result<(), EnumerateError> {
        let model = self.model;
        let g = &model.grammar;
        while let Some(item) = work.pop() {
            match item {
                Item::Inner(node, path) => {
                    let n = g.node(node);
                    match &n.kind {
                        NodeKind::Literal(t) => self.out.push_str(t),
                        NodeKind::Seq(items) => {
                            work.extend(items.iter().rev().map(|&i| Item::Inner(i, path.clone())))
                        }
                        NodeKind::Ref { rule, .. } => work.push(Item::Scope(
                            g.rule(*rule).body,
                            path.child(n.segment.clone().unwrap()),
                        )),
                        _ => match &n.segment {
                            Some(seg) => work.push(Item::Scope(node, path.child(seg.clone()))),
                            None => work.push(Item::Scope(node, path)),
                        },
                    }
                }
                Item::Scope(node, path) => match &g.node(node).kind {
                    NodeKind::Sel(alts) => {
                        let choices: Vec<Value> = (1..=alts.len() as i64).map(Value::Int).collect();
                        return self.branch(&work, &path, choices, |k| {
                            vec![Item::Inner(alts[k.as_int().unwrap() as usize - 1], path.clone())]
                        });
                    }
                    NodeKind::Star(body) => {
                        let choices: Vec<Value> =
                            (0..=g.star_cap() as i64).map(Value::Int).collect();
                        return self.branch(&work, &path, choices, |k| {
                            (1..=k.as_int().unwrap())
                                .rev()
                                .map(|i| Item::Scope(*body, path.child(i.to_string())))
                                .collect()
                        });
                    }
                    NodeKind::Predicate { .. } | NodeKind::Query(_) | NodeKind::Regex { .. } => {
                        let choices = self.domain(&path)?;
                        return self.branch(&work, &path, choices, |_| Vec::new());
                    }
                    _ => work.push(Item::Inner(node, path)),
                },
            }
        }
        if !self.found.contains(&self.out) {
            if self.found.len() == self.cap {
                return Err(EnumerateError::TooMany {
                    root: self.root.to_string(),
                    cap: self.cap,
                });
            }
            self.found.insert(self.out.clone());
        }
        Ok(())
    }

    /// Try every admissible value of the variable at `path`, continuing with
    /// `work` plus whatever the value expands to.
    fn branch(
        &mut self,
        work: &[Item],
        path: &QualifiedName,
        choices: Vec<Value>,
        expand: impl Fn(&Value) -> Vec<Item>,
    ) -> Result<(), EnumerateError> {
        let class = self.class(path)?;
        let fixed = self.env.get(&class).cloned();
        let mark = self.out.len();
        let model = self.model;
        let g = &model.grammar;
        let is_terminal = !matches!(g.node(g.resolve(path)?.node).kind, NodeKind::Sel(_) | NodeKind::Star(_));
        for v in choices {
            if fixed.as_ref().is_some_and(|f| !loose_eq(f, &v)) {
                continue;
            }
            if fixed.is_none() {
                self.env.insert(class.clone(), v.clone());
                if !self.constraints_hold(&class) {
                    self.env.remove(&class);
                    continue;
                }
            }
            self.bound.push((path.clone(), v.clone()));
            if is_terminal {
                self.out.push_str(&v.to_string());
            }
            let mut next = work.to_vec();
            next.extend(expand(&v));
            let r = self.run(next);
            self.out.truncate(mark);
            self.bound.pop();
            if fixed.is_none() {
                self.env.remove(&class);
            }
            r?;
        }
        Ok(())
    }

    fn class(&mut self, path: &QualifiedName) -> Result<String, ModelError> {
        if let Some(c) = self.classes.get(path) {
            return Ok(c.clone());
        }
        let c = self.model.class_of(path)?;
        self.classes.insert(path.clone(), c.clone());
        Ok(c)
    }

    /// Constraints mentioning `class` whose classes are now all bound.
    fn constraints_hold(&self, class: &str) -> bool {
        self.model.graph.constraints.iter().all(|c| {
            if !c.classes().any(|k| k == class) {
                return true;
            }
            let mut lookup = |p: &[String]| c.class_of(p).and_then(|k| self.env.get(k).cloned());
            !matches!(eval_bool(&c.cond, &mut lookup), Ok(Some(false)) | Err(_))
        })
    }

    fn domain(&mut self, path: &QualifiedName) -> Result<Vec<Value>, EnumerateError> {
        let cv = self.model.variable_at(path)?;
        let param = match &cv.domain {
            DomainDescriptor::PredicateDom {
                base: ValueType::Attr(Some(rule)),
                ..
            } => {
                let p = attr_parameter(self.model, path, rule, self.bound.iter().map(|(q, _)| q.clone()));
                p.and_then(|p| {
                    let v = self.bound.iter().find(|(q, _)| *q == p)?.1.clone();
                    let pcv = self.model.variable_at(&p).ok()?;
                    Some(match (pcv.kind, v) {
                        (VariableKind::Selection, Value::Int(i)) => Value::Str(
                            self.model.alternative_labels(pcv.node).get(i as usize - 1)?.clone(),
                        ),
                        (_, v) => v,
                    })
                })
            }
            _ => None,
        };
        let key = (path.to_template(), param.clone());
        if let Some(d) = self.domains.get(&key) {
            return Ok(d.clone());
        }
        let d = finite_values(self.model, &cv, param.as_ref(), self.catalog)?;
        self.domains.insert(key, d.clone());
        Ok(d)
    }
}
