use indexmap::IndexMap;
use serde::Serialize;

use crate::choice::{ChoiceModel, NodeId, NodeKind, QualifiedName};
use crate::value::Value;

use super::state::{BindingState, Violation};

/// Guard against rules that recurse without passing a choice.
const MAX_DEPTH: usize = 512;

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum RootReduction {
    Query { sql: String },
    Incomplete { missing: Vec<QualifiedName> },
    Blocked { violations: Vec<Violation> },
}

impl RootReduction {
    pub fn sql(&self) -> Option<&str> {
        match self {
            RootReduction::Query { sql } => Some(sql),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReductionResult {
    pub roots: IndexMap<String, RootReduction>,
}

impl ReductionResult {
    pub fn sql(&self, root: &str) -> Option<&str> {
        self.roots.get(root).and_then(RootReduction::sql)
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ReduceError {
    #[error("unbound choice variables: {}", .0.iter().map(ToString::to_string).collect::<Vec<_>>().join(", "))]
    Incomplete(Vec<QualifiedName>),
    #[error("bindings violate {} constraint(s)", .0.len())]
    ViolationsPresent(Vec<Violation>),
    #[error("unknown starting rule `{0}`")]
    UnknownRoot(String),
}

/// Reduce every starting rule.
pub fn reduce(model: &ChoiceModel, state: &BindingState) -> ReductionResult {
    let roots = model
        .grammar
        .roots()
        .map(|r| {
            let red = match reduce_root(model, state, r) {
                Ok(sql) => RootReduction::Query { sql },
                Err(ReduceError::Incomplete(missing)) => RootReduction::Incomplete { missing },
                Err(ReduceError::ViolationsPresent(violations)) => {
                    RootReduction::Blocked { violations }
                }
                Err(ReduceError::UnknownRoot(_)) => unreachable!(),
            };
            (r.to_string(), red)
        })
        .collect();
    ReductionResult { roots }
}

/// Violations whose variables live under the given starting rule.
pub fn violations_for<'a>(state: &'a BindingState, root: &str) -> Vec<&'a Violation> {
    state
        .violations()
        .iter()
        .filter(|v| v.involved.iter().any(|q| q.root_rule() == root))
        .collect()
}

pub fn reduce_root(model: &ChoiceModel, state: &BindingState, root: &str) -> Result<String, ReduceError> {
    let rid = model
        .grammar
        .rule_id(root)
        .filter(|id| model.grammar.root_ids().contains(id))
        .ok_or_else(|| ReduceError::UnknownRoot(root.to_string()))?;
    let blocking: Vec<Violation> = violations_for(state, root).into_iter().cloned().collect();
    if !blocking.is_empty() {
        return Err(ReduceError::ViolationsPresent(blocking));
    }
    reduce_term(model, state, &QualifiedName::root(root), model.grammar.rule(rid).body)
}

/// Reduce the subtree at `path`, whose scope node is `scope`.
pub fn reduce_term(
    model: &ChoiceModel,
    state: &BindingState,
    path: &QualifiedName,
    scope: NodeId,
) -> Result<String, ReduceError> {
    let mut r = Reducer {
        model,
        state,
        out: String::new(),
        missing: Vec::new(),
    };
    r.scope(scope, path, 0);
    if r.missing.is_empty() {
        Ok(r.out)
    } else {
        Err(ReduceError::Incomplete(r.missing))
    }
}

struct Reducer<'a> {
    model: &'a ChoiceModel,
    state: &'a BindingState,
    out: String,
    missing: Vec<QualifiedName>,
}

impl Reducer<'_> {
    /// `node` is the scope root at `path`: its own value lives at `path`.
    fn scope(&mut self, node: NodeId, path: &QualifiedName, depth: usize) {
        if depth > MAX_DEPTH {
            self.missing.push(path.clone());
            return;
        }
        let g = &self.model.grammar;
        match &g.node(node).kind {
            NodeKind::Sel(alts) => match self.state.value(path) {
                Some(Value::Int(k)) if *k >= 1 && (*k as usize) <= alts.len() => {
                    self.inner(alts[*k as usize - 1], path, depth)
                }
                _ => self.missing.push(path.clone()),
            },
            NodeKind::Star(body) => match self.state.value(path) {
                Some(Value::Int(n)) if *n >= 0 => {
                    for i in 1..=*n {
                        self.scope(*body, &path.child(i.to_string()), depth + 1);
                    }
                }
                _ => self.missing.push(path.clone()),
            },
            NodeKind::Predicate { .. } | NodeKind::Query(_) | NodeKind::Regex { .. } => {
                match self.state.value(path) {
                    Some(v) => self.out.push_str(&v.to_string()),
                    None => self.missing.push(path.clone()),
                }
            }
            _ => self.inner(node, path, depth),
        }
    }

    /// `node` sits inside the scope at `path`.
    fn inner(&mut self, node: NodeId, path: &QualifiedName, depth: usize) {
        let g = &self.model.grammar;
        let n = g.node(node);
        match &n.kind {
            NodeKind::Literal(t) => self.out.push_str(t),
            NodeKind::Seq(items) => {
                for &i in items {
                    self.inner(i, path, depth);
                }
            }
            NodeKind::Ref { rule, .. } => {
                let child = path.child(n.segment.clone().unwrap());
                self.scope(g.rule(*rule).body, &child, depth + 1);
            }
            _ => match &n.segment {
                Some(seg) => self.scope(node, &path.child(seg.clone()), depth + 1),
                // a site without a segment is the scope root itself
                None => self.scope(node, path, depth + 1),
            },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::syntax::parse_grammar;

    #[test]
    fn drought_end_state() {
        let m = ChoiceModel::build(&parse_grammar(fixtures::DROUGHT).unwrap()).unwrap();
        let mut st = BindingState::new();
        for (n, v) in [("t", 2), ("s", 1), ("e", 2)] {
            st.bind(&m, &m.lookup(n).unwrap(), &Value::Int(v), None).unwrap();
        }
        assert_eq!(
            reduce(&m, &st).sql("q"),
            Some("SELECT year, payout1(*), ... FROM evi WHERE dekad BETWEEN 1 AND 2")
        );
    }

    #[test]
    fn literal_grammar_reduces_with_empty_state() {
        let m = ChoiceModel::build(&parse_grammar("q = 'SELECT 1'").unwrap()).unwrap();
        assert_eq!(reduce_root(&m, &BindingState::new(), "q").unwrap(), "SELECT 1");
    }

    #[test]
    fn unselected_branches_need_no_bindings() {
        let m = ChoiceModel::build(&parse_grammar(fixtures::CROSSFILTER).unwrap()).unwrap();
        let mut st = BindingState::new();
        for n in ["q1/pair", "q1/pd", "q2/parr"] {
            st.bind(&m, &m.lookup(n).unwrap(), &Value::Int(1), None).unwrap();
        }
        assert_eq!(
            reduce_root(&m, &st, "q1").unwrap(),
            "SELECT arrival, count(*) FROM flights WHERE true AND true GROUP BY arrival"
        );
        let missing = match reduce_root(&m, &BindingState::new(), "q1") {
            Err(ReduceError::Incomplete(m)) => m,
            other => panic!("{other:?}"),
        };
        assert_eq!(missing.len(), 2);
    }
}
