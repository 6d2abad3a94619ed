//! Random derivations of grammar terms, used for text-input payloads in
//! simulated workloads.

use std::collections::HashMap;

use chrono::{Duration, NaiveDate};
use rand::distr::Distribution;
use rand::{Rng, RngExt};

use crate::binding::{bounds, check_predicate, listed_values};
use crate::catalog::Catalog;
use crate::choice::{ChoiceModel, NodeId, NodeKind, QualifiedName};
use crate::syntax::{Cond, ValueType};
use crate::value::Value;

/// Reference depth past which a derivation is abandoned.
pub const MAX_SAMPLE_DEPTH: usize = 12;
/// Largest star instance count drawn.
pub const MAX_SAMPLE_INSTANCES: u32 = 3;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SampleError {
    #[error("derivation exceeded depth {MAX_SAMPLE_DEPTH}")]
    TooDeep,
    #[error("no value satisfies the domain of `{0}`")]
    EmptyDomain(String),
    #[error("bad regex `{0}`")]
    Regex(String),
}

pub struct TermSampler<'a> {
    model: &'a ChoiceModel,
    catalog: Option<&'a Catalog>,
    regexes: HashMap<String, rand_regex::Regex>,
}

impl<'a> TermSampler<'a> {
    pub fn new(model: &'a ChoiceModel, catalog: Option<&'a Catalog>) -> Self {
        TermSampler {
            model,
            catalog,
            regexes: HashMap::new(),
        }
    }

    /// A random string derivable from the term at `path`.
    pub fn sample_at<R: Rng + ?Sized>(&mut self, path: &QualifiedName, rng: &mut R) -> Result<String, SampleError> {
        let node = self
            .model
            .grammar
            .resolve(path)
            .map_err(|_| SampleError::EmptyDomain(path.to_string()))?
            .node;
        self.sample(node, rng)
    }

    pub fn sample<R: Rng + ?Sized>(&mut self, node: NodeId, rng: &mut R) -> Result<String, SampleError> {
        let mut out = String::new();
        self.term(node, rng, 0, &mut out)?;
        Ok(out)
    }

    fn term<R: Rng + ?Sized>(&mut self, node: NodeId, rng: &mut R, depth: usize, out: &mut String) -> Result<(), SampleError> {
        let g = &self.model.grammar;
        match &g.node(node).kind {
            NodeKind::Literal(s) => out.push_str(s),
            NodeKind::Regex { pattern, .. } => {
                if !self.regexes.contains_key(pattern) {
                    let r = rand_regex::Regex::compile(pattern, 4).map_err(|_| SampleError::Regex(pattern.clone()))?;
                    self.regexes.insert(pattern.clone(), r);
                }
                let s: String = self.regexes[pattern].sample(rng);
                out.push_str(&s);
            }
            NodeKind::Predicate { var, ty, predicate } => {
                let v = sample_predicate(ty, var, predicate.as_ref(), self.catalog, rng)
                    .ok_or_else(|| SampleError::EmptyDomain(var.clone()))?;
                out.push_str(&v.to_string());
            }
            NodeKind::Query(sql) => {
                let values = self
                    .catalog
                    .and_then(|c| c.domain_values(sql).ok())
                    .filter(|v| !v.is_empty())
                    .ok_or_else(|| SampleError::EmptyDomain(sql.clone()))?;
                out.push_str(&values[rng.random_range(0..values.len())].to_string());
            }
            NodeKind::Ref { rule, .. } => {
                if depth >= MAX_SAMPLE_DEPTH {
                    return Err(SampleError::TooDeep);
                }
                let body = g.rule(*rule).body;
                self.term(body, rng, depth + 1, out)?;
            }
            NodeKind::Seq(items) => {
                for &i in items.clone().iter() {
                    self.term(i, rng, depth, out)?;
                }
            }
            NodeKind::Sel(alts) => {
                let pick = alts[rng.random_range(0..alts.len())];
                self.term(pick, rng, depth, out)?;
            }
            NodeKind::Star(body) => {
                let body = *body;
                let n = rng.random_range(0..=MAX_SAMPLE_INSTANCES.min(g.star_cap()));
                for _ in 0..n {
                    self.term(body, rng, depth, out)?;
                }
            }
        }
        Ok(())
    }
}

fn ident<R: Rng + ?Sized>(rng: &mut R) -> String {
    let len = rng.random_range(1..=6);
    (0..len).map(|_| (b'a' + rng.random_range(0..26u8)) as char).collect()
}

/// Draw a value of the given type that satisfies `predicate` (by rejection,
/// within the predicate's bounds where it has them).
pub fn sample_predicate<R: Rng + ?Sized>(
    ty: &ValueType,
    var: &str,
    predicate: Option<&Cond>,
    catalog: Option<&Catalog>,
    rng: &mut R,
) -> Option<Value> {
    if let Some(listed) = predicate.and_then(|p| listed_values(p, var)) {
        if listed.is_empty() {
            return None;
        }
        let v = listed[rng.random_range(0..listed.len())].clone();
        return Some(v);
    }
    let b = predicate.map(|p| bounds(p, var)).unwrap_or_default();
    for _ in 0..100 {
        let v = match ty {
            ValueType::Int => {
                let lo = b.lo.as_ref().and_then(Value::as_f64).map(|x| x.ceil() as i64);
                let hi = b.hi.as_ref().and_then(Value::as_f64).map(|x| x.floor() as i64);
                let (lo, hi) = match (lo, hi) {
                    (Some(l), Some(h)) => (l, h),
                    (Some(l), None) => (l, l + 100),
                    (None, Some(h)) => (h - 100, h),
                    (None, None) => (0, 100),
                };
                if lo > hi {
                    return None;
                }
                Value::Int(rng.random_range(lo..=hi))
            }
            ValueType::Float => {
                let lo = b.lo.as_ref().and_then(Value::as_f64);
                let hi = b.hi.as_ref().and_then(Value::as_f64);
                let (lo, hi) = match (lo, hi) {
                    (Some(l), Some(h)) => (l, h),
                    (Some(l), None) => (l, l + 100.0),
                    (None, Some(h)) => (h - 100.0, h),
                    (None, None) => (0.0, 100.0),
                };
                if lo > hi {
                    return None;
                }
                let x = lo + (hi - lo) * rng.random::<f64>();
                Value::Float((x * 100.0).round() / 100.0)
            }
            ValueType::Date => {
                let lo = b.lo.as_ref().and_then(Value::as_date);
                let hi = b.hi.as_ref().and_then(Value::as_date);
                let lo = lo.unwrap_or_else(|| NaiveDate::from_ymd_opt(2000, 1, 1).unwrap());
                let hi = hi.unwrap_or_else(|| lo + Duration::days(3650));
                let span = (hi - lo).num_days();
                if span < 0 {
                    return None;
                }
                Value::Date(lo + Duration::days(rng.random_range(0..=span)))
            }
            ValueType::Str => Value::Str(ident(rng)),
            ValueType::Rel | ValueType::Attr(_) => {
                // without a database any identifier will do, as in parsing
                let Some(catalog) = catalog else { return Some(Value::Str(ident(rng))) };
                let snap = catalog.snapshot().ok()?;
                let names: Vec<&str> = match ty {
                    ValueType::Rel => snap.relations.iter().map(|r| r.name.as_str()).collect(),
                    _ => snap
                        .relations
                        .iter()
                        .flat_map(|r| r.attributes.iter().map(|a| a.name.as_str()))
                        .collect(),
                };
                if names.is_empty() {
                    return None;
                }
                // catalog names are not checked against the predicate
                return Some(Value::Str(names[rng.random_range(0..names.len())].to_string()));
            }
        };
        match predicate {
            None => return Some(v),
            Some(p) if check_predicate(p, var, &v).unwrap_or(false) => return Some(v),
            _ => {}
        }
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::binding::accepts;
    use crate::fixtures;
    use crate::syntax::parse_grammar;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn samples_are_in_the_language() {
        for src in [fixtures::DROUGHT, fixtures::QUERYBUILDER, fixtures::PREDICATES] {
            let m = ChoiceModel::build(&parse_grammar(src).unwrap()).unwrap();
            let mut s = TermSampler::new(&m, None);
            let mut rng = ChaCha8Rng::seed_from_u64(7);
            let root = m.grammar.roots().next().unwrap().to_string();
            let mut ok = 0;
            for _ in 0..50 {
                if let Ok(text) = s.sample_at(&QualifiedName::root(&root), &mut rng) {
                    assert!(accepts(&m, &root, &text, None), "{text}");
                    ok += 1;
                }
            }
            assert!(ok > 25);
        }
    }
}
