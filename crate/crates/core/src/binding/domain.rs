use crate::catalog::Catalog;
use crate::choice::{ChoiceModel, ChoiceVariable, DomainDescriptor, NodeKind, QualifiedName};
use crate::error::BackendError;
use crate::syntax::ValueType;
use crate::validate::is_identifier;
use crate::value::{parse_date, Value};

use super::eval::{bounds, check_predicate, listed_values, loose_eq};
use super::BindError;

/// Largest integer/date range enumerated by brute force.
pub const MAX_ENUMERATED_RANGE: i64 = 1_000_000;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("`{value}` is not a valid value for `{variable}`: {reason}")]
pub struct DomainError {
    pub variable: String,
    pub value: String,
    pub reason: String,
}

/// Convert user input to the variable's value type without checking the
/// domain. Selections accept an alternative's label; domains accept text for
/// numbers and dates.
pub fn coerce(model: &ChoiceModel, cv: &ChoiceVariable, value: &Value) -> Result<Value, DomainError> {
    let fail = |reason: &str| DomainError {
        variable: model.display(&cv.qname),
        value: value.to_string(),
        reason: reason.to_string(),
    };
    match &cv.domain {
        DomainDescriptor::EnumeratedInts { .. } => match value {
            Value::Int(_) => Ok(value.clone()),
            Value::Float(f) if f.fract() == 0.0 => Ok(Value::Int(*f as i64)),
            Value::Str(s) => {
                if let Ok(i) = s.trim().parse::<i64>() {
                    return Ok(Value::Int(i));
                }
                model
                    .alternative_labels(cv.node)
                    .iter()
                    .position(|l| l == s)
                    .map(|i| Value::Int(i as i64 + 1))
                    .ok_or_else(|| fail("no alternative with that label"))
            }
            _ => Err(fail("expected an alternative index or label")),
        },
        DomainDescriptor::Naturals { .. } => match value {
            Value::Int(_) => Ok(value.clone()),
            Value::Str(s) => s
                .trim()
                .parse::<i64>()
                .map(Value::Int)
                .map_err(|_| fail("expected a repetition count")),
            _ => Err(fail("expected a repetition count")),
        },
        DomainDescriptor::PredicateDom { base, .. } => coerce_to(base, value).ok_or_else(|| {
            fail(&format!("expected a value of type {base}"))
        }),
        DomainDescriptor::QueryDom { .. } => Ok(value.clone()),
    }
}

pub fn coerce_to(ty: &ValueType, value: &Value) -> Option<Value> {
    match (ty, value) {
        (ValueType::Int, Value::Int(_)) => Some(value.clone()),
        (ValueType::Int, Value::Float(f)) if f.fract() == 0.0 => Some(Value::Int(*f as i64)),
        (ValueType::Int, Value::Str(s)) => s.trim().parse().ok().map(Value::Int),
        (ValueType::Float, Value::Float(_)) => Some(value.clone()),
        (ValueType::Float, Value::Int(i)) => Some(Value::Float(*i as f64)),
        (ValueType::Float, Value::Str(s)) => s.trim().parse().ok().map(Value::Float),
        (ValueType::Date, Value::Date(_)) => Some(value.clone()),
        (ValueType::Date, Value::Str(s)) => parse_date(s).map(Value::Date),
        (ValueType::Str, Value::Str(_)) => Some(value.clone()),
        (ValueType::Str, v @ (Value::Int(_) | Value::Float(_) | Value::Date(_))) => {
            Some(Value::Str(v.to_string()))
        }
        (ValueType::Rel | ValueType::Attr(_), Value::Str(s)) if is_identifier(s) => {
            Some(value.clone())
        }
        _ => None,
    }
}

/// Variable bound to the rule that parameterises an `attr[rule]` domain:
/// the one sharing the longest prefix with `qname`.
pub fn attr_parameter(
    model: &ChoiceModel,
    qname: &QualifiedName,
    rule: &str,
    candidates: impl Iterator<Item = QualifiedName>,
) -> Option<QualifiedName> {
    let body = model.grammar.rule(model.grammar.rule_id(rule)?).body;
    candidates
        .filter(|c| {
            model
                .grammar
                .resolve(c)
                .is_ok_and(|r| r.node == body)
        })
        .max_by_key(|c| {
            c.segments()
                .iter()
                .zip(qname.segments())
                .take_while(|(a, b)| a == b)
                .count()
        })
}

/// Check a coerced value against the variable's domain and return the
/// normalised value (query-domain members are returned as stored).
/// `param` supplies the relation bound to an `attr[rule]` parameter.
pub fn validate_value(
    model: &ChoiceModel,
    cv: &ChoiceVariable,
    value: &Value,
    param: Option<&Value>,
    catalog: Option<&Catalog>,
) -> Result<Value, BindError> {
    let value = coerce(model, cv, value)?;
    let fail = |reason: String| {
        BindError::Domain(DomainError {
            variable: model.display(&cv.qname),
            value: value.to_string(),
            reason,
        })
    };
    match &cv.domain {
        DomainDescriptor::EnumeratedInts { lo, hi } => {
            let i = value.as_int().unwrap();
            if i < *lo || i > *hi {
                return Err(fail(format!("alternatives are numbered {lo}..={hi}")));
            }
            if let (Some(ValueType::Rel), Some(catalog)) = (&cv.rule_tag, catalog) {
                let label = &model.alternative_labels(cv.node)[(i - 1) as usize];
                if !catalog.has_relation(label).map_err(BindError::Backend)? {
                    return Err(fail(format!("relation `{label}` is not in the catalog")));
                }
            }
            Ok(value)
        }
        DomainDescriptor::Naturals { .. } => {
            if value.as_int().unwrap() < 0 {
                return Err(fail("repetition count must be non-negative".into()));
            }
            Ok(value)
        }
        DomainDescriptor::PredicateDom {
            var,
            base,
            predicate,
        } => {
            if let Some(p) = predicate {
                match check_predicate(p, var, &value) {
                    Ok(true) => {}
                    Ok(false) => return Err(fail("predicate is false".into())),
                    Err(e) => return Err(fail(e.0)),
                }
            }
            match base {
                ValueType::Rel => {
                    let catalog = catalog.ok_or(BindError::BackendUnavailable)?;
                    let name = value.as_str().unwrap();
                    if !catalog.has_relation(name).map_err(BindError::Backend)? {
                        return Err(fail("no such relation".into()));
                    }
                }
                ValueType::Attr(param_rule) => {
                    let catalog = catalog.ok_or(BindError::BackendUnavailable)?;
                    let name = value.as_str().unwrap();
                    let ok = match param_rule {
                        Some(rule) => {
                            let rel = param.ok_or_else(|| BindError::UnboundParameter {
                                variable: model.display(&cv.qname),
                                parameter: rule.clone(),
                            })?;
                            catalog
                                .has_attribute(&rel.to_string(), name)
                                .map_err(BindError::Backend)?
                        }
                        None => catalog
                            .snapshot()
                            .map_err(BindError::Backend)?
                            .relations
                            .iter()
                            .any(|r| r.attributes.iter().any(|a| a.name == name)),
                    };
                    if !ok {
                        return Err(fail("no such attribute".into()));
                    }
                }
                _ => {}
            }
            Ok(value)
        }
        DomainDescriptor::QueryDom { query } => {
            let catalog = catalog.ok_or(BindError::BackendUnavailable)?;
            match catalog.domain_member(query, &value).map_err(BindError::Backend)? {
                Some(member) => Ok(member),
                None => Err(fail("not in the query result".into())),
            }
        }
    }
}

/// Why a domain has no finite listing.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EnumerationError {
    #[error("domain of `{0}` is not finitely enumerable")]
    InfiniteDomain(String),
    #[error("domain of `{0}` needs a database")]
    BackendUnavailable(String),
    #[error("`{variable}` depends on unbound parameter `{parameter}`")]
    UnboundParameter { variable: String, parameter: String },
    #[error(transparent)]
    Backend(#[from] BackendError),
}

/// Every value of a finite domain, in ascending order. Star domains are
/// listed up to their cap.
pub fn finite_values(
    model: &ChoiceModel,
    cv: &ChoiceVariable,
    param: Option<&Value>,
    catalog: Option<&Catalog>,
) -> Result<Vec<Value>, EnumerationError> {
    let name = || model.display(&cv.qname);
    match &cv.domain {
        DomainDescriptor::EnumeratedInts { lo, hi } => Ok((*lo..=*hi).map(Value::Int).collect()),
        DomainDescriptor::Naturals { cap } => match cap {
            Some(cap) => Ok((0..=*cap as i64).map(Value::Int).collect()),
            None => Err(EnumerationError::InfiniteDomain(name())),
        },
        DomainDescriptor::QueryDom { query } => {
            let catalog = catalog.ok_or_else(|| EnumerationError::BackendUnavailable(name()))?;
            Ok(catalog.domain_values(query)?.as_ref().clone())
        }
        DomainDescriptor::PredicateDom {
            var,
            base,
            predicate,
        } => {
            let keep = |v: &Value| match predicate {
                Some(p) => check_predicate(p, var, v).unwrap_or(false),
                None => true,
            };
            if let Some(listed) = predicate.as_ref().and_then(|p| listed_values(p, var)) {
                let mut vals: Vec<Value> = listed
                    .iter()
                    .filter_map(|v| coerce_to(base, v))
                    .filter(|v| keep(v))
                    .collect();
                vals.sort();
                vals.dedup_by(|a, b| loose_eq(a, b));
                if !matches!(base, ValueType::Rel | ValueType::Attr(_)) {
                    return Ok(vals);
                }
                let Some(catalog) = catalog else {
                    return Err(EnumerationError::BackendUnavailable(name()));
                };
                let snapshot = catalog.snapshot()?;
                vals.retain(|v| catalog_member(&snapshot, base, v, param));
                return Ok(vals);
            }
            match base {
                ValueType::Int | ValueType::Date => {
                    let b = predicate.as_ref().map(|p| bounds(p, var)).unwrap_or_default();
                    let (Some(lo), Some(hi)) = (b.lo, b.hi) else {
                        return Err(EnumerationError::InfiniteDomain(name()));
                    };
                    let range: Vec<Value> = match (lo, hi) {
                        (Value::Int(lo), Value::Int(hi)) if hi - lo <= MAX_ENUMERATED_RANGE => {
                            (lo..=hi).map(Value::Int).collect()
                        }
                        (lo, hi) if lo.as_date().is_some() && hi.as_date().is_some() => {
                            let (lo, hi) = (lo.as_date().unwrap(), hi.as_date().unwrap());
                            if (hi - lo).num_days() > MAX_ENUMERATED_RANGE {
                                return Err(EnumerationError::InfiniteDomain(name()));
                            }
                            lo.iter_days()
                                .take_while(|d| *d <= hi)
                                .map(Value::Date)
                                .collect()
                        }
                        _ => return Err(EnumerationError::InfiniteDomain(name())),
                    };
                    Ok(range.into_iter().filter(|v| keep(v)).collect())
                }
                ValueType::Rel | ValueType::Attr(_) => {
                    let catalog =
                        catalog.ok_or_else(|| EnumerationError::BackendUnavailable(name()))?;
                    let snapshot = catalog.snapshot()?;
                    let mut names: Vec<Value> = match base {
                        ValueType::Rel => snapshot
                            .relations
                            .iter()
                            .map(|r| Value::Str(r.name.clone()))
                            .collect(),
                        ValueType::Attr(Some(rule)) => {
                            let rel = param.ok_or_else(|| EnumerationError::UnboundParameter {
                                variable: name(),
                                parameter: rule.clone(),
                            })?;
                            snapshot
                                .relation(&rel.to_string())
                                .map(|r| {
                                    r.attributes
                                        .iter()
                                        .map(|a| Value::Str(a.name.clone()))
                                        .collect()
                                })
                                .unwrap_or_default()
                        }
                        _ => snapshot
                            .relations
                            .iter()
                            .flat_map(|r| r.attributes.iter().map(|a| Value::Str(a.name.clone())))
                            .collect(),
                    };
                    names.sort();
                    names.dedup();
                    Ok(names.into_iter().filter(|v| keep(v)).collect())
                }
                _ => Err(EnumerationError::InfiniteDomain(name())),
            }
        }
    }
}

fn catalog_member(
    snapshot: &crate::catalog::CatalogSnapshot,
    base: &ValueType,
    v: &Value,
    param: Option<&Value>,
) -> bool {
    let name = v.to_string();
    match base {
        ValueType::Rel => snapshot.relation(&name).is_some(),
        ValueType::Attr(Some(_)) => {
            param.is_some_and(|rel| snapshot.has_attribute(&rel.to_string(), &name))
        }
        _ => snapshot
            .relations
            .iter()
            .any(|r| r.attributes.iter().any(|a| a.name == name)),
    }
}

/// Whether a site's node is a regex terminal (its values are open strings).
pub fn is_regex_site(model: &ChoiceModel, cv: &ChoiceVariable) -> bool {
    matches!(model.grammar.node(cv.node).kind, NodeKind::Regex { .. })
}
