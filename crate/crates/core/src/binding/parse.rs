//! PEG recognition of text against a sub-grammar, producing the bindings of
//! the derivation. Memoized per (node, position); ordered choice commits to
//! the first alternative that matches.

use std::collections::{BTreeSet, HashMap};
use std::rc::Rc;
use std::sync::LazyLock;

use regex::Regex;
use serde::Serialize;

use crate::catalog::Catalog;
use crate::choice::{ChoiceModel, NodeId, NodeKind, QualifiedName};
use crate::syntax::{quote, ValueType};
use crate::value::Value;

use super::domain::coerce_to;
use super::eval::{check_predicate, listed_values};
use super::state::{BindingState, Effects, Provenance};
use super::BindError;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, thiserror::Error)]
#[error("parse error at offset {position}: expected {}", .expected.iter().cloned().collect::<Vec<_>>().join(" or "))]
pub struct ParseError {
    /// Byte offset of the furthest failure.
    pub position: usize,
    pub expected: BTreeSet<String>,
}

/// Bindings relative to the parsed term.
pub type Derivation = Vec<(Vec<String>, Value)>;

type Memo = HashMap<(NodeId, usize), Option<(usize, Rc<Derivation>)>>;

static INT: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"^-?[0-9]+").unwrap());
static FLOAT: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"^-?[0-9]+(\.[0-9]+)?([eE][-+]?[0-9]+)?").unwrap());
static DATE: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"^[0-9]{4}-[0-9]{2}-[0-9]{2}").unwrap());
static IDENT: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"^[A-Za-z_][A-Za-z0-9_]*").unwrap());

struct Recognizer<'a> {
    model: &'a ChoiceModel,
    text: &'a str,
    catalog: Option<&'a Catalog>,
    memo: Memo,
    furthest: usize,
    expected: BTreeSet<String>,
}

/// Recognize all of `text` as the term whose scope node is `scope`.
pub fn recognize(
    model: &ChoiceModel,
    scope: NodeId,
    text: &str,
    catalog: Option<&Catalog>,
) -> Result<Derivation, ParseError> {
    let mut r = Recognizer {
        model,
        text,
        catalog,
        memo: HashMap::new(),
        furthest: 0,
        expected: BTreeSet::new(),
    };
    match r.scope(scope, 0) {
        Some((end, d)) if end == text.len() => Ok(Rc::try_unwrap(d).unwrap_or_else(|d| (*d).clone())),
        Some((end, _)) => {
            r.fail(end, "end of input".to_string());
            Err(r.error())
        }
        None => Err(r.error()),
    }
}

/// Whether `text` is in the language of a starting rule.
pub fn accepts(model: &ChoiceModel, root: &str, text: &str, catalog: Option<&Catalog>) -> bool {
    model
        .grammar
        .rule_id(root)
        .is_some_and(|r| recognize(model, model.grammar.rule(r).body, text, catalog).is_ok())
}

impl Recognizer<'_> {
    fn error(&self) -> ParseError {
        ParseError {
            position: self.furthest,
            expected: self.expected.clone(),
        }
    }

    fn fail(&mut self, pos: usize, what: String) {
        if pos > self.furthest {
            self.furthest = pos;
            self.expected.clear();
        }
        if pos == self.furthest {
            self.expected.insert(what);
        }
    }

    /// Match `node` as a scope root: its value is recorded at the empty
    /// relative path.
    fn scope(&mut self, node: NodeId, pos: usize) -> Option<(usize, Rc<Derivation>)> {
        let key = (node, pos);
        if let Some(hit) = self.memo.get(&key) {
            return hit.clone();
        }
        // seed with failure so left recursion terminates
        self.memo.insert(key, None);
        let result = self.scope_uncached(node, pos).map(|(e, d)| (e, Rc::new(d)));
        self.memo.insert(key, result.clone());
        result
    }

    fn scope_uncached(&mut self, node: NodeId, pos: usize) -> Option<(usize, Derivation)> {
        let g = &self.model.grammar;
        match &g.node(node).kind {
            NodeKind::Sel(alts) => {
                let alts = alts.clone();
                for (k, alt) in alts.into_iter().enumerate() {
                    if let Some((end, mut d)) = self.inner(alt, pos) {
                        d.insert(0, (Vec::new(), Value::Int(k as i64 + 1)));
                        return Some((end, d));
                    }
                }
                None
            }
            NodeKind::Star(body) => {
                let body = *body;
                let mut d = vec![(Vec::new(), Value::Int(0))];
                let mut at = pos;
                let mut n = 0i64;
                while let Some((end, sub)) = self.scope(body, at) {
                    if end == at {
                        break;
                    }
                    n += 1;
                    for (rel, v) in sub.iter() {
                        let mut p = vec![n.to_string()];
                        p.extend(rel.iter().cloned());
                        d.push((p, v.clone()));
                    }
                    at = end;
                }
                d[0].1 = Value::Int(n);
                Some((at, d))
            }
            NodeKind::Predicate { .. } | NodeKind::Query(_) | NodeKind::Regex { .. } => {
                let (end, v) = self.terminal(node, pos)?;
                Some((end, vec![(Vec::new(), v)]))
            }
            _ => self.inner(node, pos),
        }
    }

    fn inner(&mut self, node: NodeId, pos: usize) -> Option<(usize, Derivation)> {
        let g = &self.model.grammar;
        let n = g.node(node);
        match &n.kind {
            NodeKind::Literal(t) => {
                if self.text[pos..].starts_with(t.as_str()) {
                    Some((pos + t.len(), Vec::new()))
                } else {
                    self.fail(pos, quote(t));
                    None
                }
            }
            NodeKind::Seq(items) => {
                let items = items.clone();
                let mut at = pos;
                let mut d = Vec::new();
                for i in items {
                    let (end, sub) = self.inner(i, at)?;
                    d.extend(sub);
                    at = end;
                }
                Some((at, d))
            }
            NodeKind::Ref { rule, .. } => {
                let seg = n.segment.clone().unwrap();
                let body = g.rule(*rule).body;
                let (end, sub) = self.scope(body, pos)?;
                Some((end, prefixed(&seg, &sub)))
            }
            _ => match n.segment.clone() {
                Some(seg) => {
                    let (end, sub) = self.scope(node, pos)?;
                    Some((end, prefixed(&seg, &sub)))
                }
                None => self.scope(node, pos).map(|(e, d)| (e, (*d).clone())),
            },
        }
    }

    /// Match one domain token at `pos`.
    fn terminal(&mut self, node: NodeId, pos: usize) -> Option<(usize, Value)> {
        let rest = &self.text[pos..];
        let g = &self.model.grammar;
        match &g.node(node).kind {
            NodeKind::Regex { pattern, anchored, .. } => match anchored.find(rest) {
                Some(m) => Some((pos + m.end(), Value::Str(m.as_str().to_string()))),
                None => {
                    self.fail(pos, format!("/{pattern}/"));
                    None
                }
            },
            NodeKind::Predicate { var, ty, predicate } => {
                let what = format!("{{{var}:{ty}}}");
                if let Some(listed) = predicate.as_ref().and_then(|p| listed_values(p, var)) {
                    let mut cands: Vec<Value> =
                        listed.iter().filter_map(|v| coerce_to(ty, v)).collect();
                    cands.sort_by_key(|v| std::cmp::Reverse(v.to_string().len()));
                    for v in cands {
                        let s = v.to_string();
                        if rest.starts_with(&s)
                            && check_predicate(predicate.as_ref().unwrap(), var, &v).unwrap_or(false)
                        {
                            return Some((pos + s.len(), v));
                        }
                    }
                    self.fail(pos, what);
                    return None;
                }
                let token = match ty {
                    ValueType::Int => &INT,
                    ValueType::Float => &FLOAT,
                    ValueType::Date => &DATE,
                    _ => &IDENT,
                };
                let found = token.find(rest).and_then(|m| {
                    let v = coerce_to(ty, &Value::Str(m.as_str().to_string()))?;
                    let ok = match (ty, predicate) {
                        (ValueType::Rel | ValueType::Attr(_), _) | (_, None) => true,
                        (_, Some(p)) => check_predicate(p, var, &v).unwrap_or(false),
                    };
                    ok.then_some((pos + m.end(), v))
                });
                if found.is_none() {
                    self.fail(pos, what);
                }
                found
            }
            NodeKind::Query(q) => {
                let q = q.clone();
                let found = match self.catalog.map(|c| c.domain_values(&q)) {
                    Some(Ok(values)) => {
                        let mut best: Option<(usize, Value)> = None;
                        for v in values.iter() {
                            let s = v.to_string();
                            if rest.starts_with(&s) && best.as_ref().is_none_or(|(l, _)| s.len() > *l) {
                                best = Some((s.len(), v.clone()));
                            }
                        }
                        best.map(|(l, v)| (pos + l, v))
                    }
                    Some(Err(_)) => None,
                    None => generic_token(rest).map(|(l, v)| (pos + l, v)),
                };
                if found.is_none() {
                    self.fail(pos, format!("a value of {{ {q} }}"));
                }
                found
            }
            _ => unreachable!("terminal called on a non-terminal node"),
        }
    }
}

/// Best-effort token when no database is available to list a query domain.
fn generic_token(rest: &str) -> Option<(usize, Value)> {
    if let Some(m) = DATE.find(rest) {
        return crate::value::parse_date(m.as_str()).map(|d| (m.end(), Value::Date(d)));
    }
    if let Some(m) = FLOAT.find(rest) {
        let s = m.as_str();
        let v = s
            .parse::<i64>()
            .map(Value::Int)
            .or_else(|_| s.parse::<f64>().map(Value::Float))
            .ok()?;
        return Some((m.end(), v));
    }
    IDENT
        .find(rest)
        .map(|m| (m.end(), Value::Str(m.as_str().to_string())))
}

fn prefixed(seg: &str, d: &Derivation) -> Derivation {
    d.iter()
        .map(|(rel, v)| {
            let mut p = Vec::with_capacity(rel.len() + 1);
            p.push(seg.to_string());
            p.extend(rel.iter().cloned());
            (p, v.clone())
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ParseOutcome {
    pub bindings: Vec<(QualifiedName, Value)>,
    pub effects: Effects,
}

/// Parse text typed into an input mapped to the term `target` and bind every
/// choice variable of the derivation. Atomic: on error nothing is bound.
pub fn parse_input(
    model: &ChoiceModel,
    state: &mut BindingState,
    target: &QualifiedName,
    text: &str,
    catalog: Option<&Catalog>,
) -> Result<ParseOutcome, BindError> {
    let scope = model.grammar.resolve(target)?.node;
    let derivation = recognize(model, scope, text, catalog).map_err(BindError::Parse)?;
    let bindings: Vec<(QualifiedName, Value)> = derivation
        .into_iter()
        .map(|(rel, v)| {
            let mut segs = target.segments().to_vec();
            segs.extend(rel);
            (QualifiedName::new(segs), v)
        })
        .collect();
    let effects = state.bind_all(model, &bindings, Provenance::ParsedFromText, catalog)?;
    Ok(ParseOutcome { bindings, effects })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::binding::reduce_root;
    use crate::fixtures;
    use crate::syntax::parse_grammar;

    fn model(src: &str) -> ChoiceModel {
        ChoiceModel::build(&parse_grammar(src).unwrap()).unwrap()
    }

    #[test]
    fn predicate_text_binds_attr_op_val() {
        let m = model(fixtures::QUERYBUILDER);
        let target: QualifiedName = "root/query1/where1/pred1".parse().unwrap();
        let mut st = BindingState::new();
        let out = parse_input(&m, &mut st, &target, "age > 5", None).unwrap();
        let shown: Vec<String> = out
            .bindings
            .iter()
            .map(|(q, v)| format!("{}={v}", q.last()))
            .collect();
        assert_eq!(shown, ["attr1=age", "op1=1", "val1=5"]);
    }

    #[test]
    fn missing_value_is_a_parse_error_at_the_end() {
        let m = model(fixtures::QUERYBUILDER);
        let target: QualifiedName = "root/query1/where1/pred1".parse().unwrap();
        let err = parse_input(&m, &mut BindingState::new(), &target, "age >", None).unwrap_err();
        match err {
            BindError::Parse(e) => {
                assert_eq!(e.position, 5);
                assert!(e.expected.contains("' '"));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn root_text_roundtrips() {
        let m = model(fixtures::DROUGHT);
        let text = "SELECT year, payout1(*), ... FROM chirps WHERE dekad BETWEEN 10 AND 23";
        let mut st = BindingState::new();
        parse_input(&m, &mut st, &QualifiedName::root("q"), text, None).unwrap();
        assert_eq!(reduce_root(&m, &st, "q").unwrap(), text);
        assert!(parse_input(&m, &mut st, &QualifiedName::root("q"), &text.replace("10", "0"), None).is_err());
    }
}
