//! Evaluation of predicate/constraint expressions, plus the interval analysis
//! used to turn predicates into finite candidate sets.

use std::cell::RefCell;
use std::cmp::Ordering;
use std::collections::HashMap;

use chrono::Duration;
use regex::Regex;

use crate::syntax::{BinOp, Cond};
use crate::value::Value;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("{0}")]
pub struct EvalError(pub String);

/// Evaluate `cond`; `Ok(None)` when some variable is unbound.
pub fn eval(
    cond: &Cond,
    lookup: &mut dyn FnMut(&[String]) -> Option<Value>,
) -> Result<Option<Value>, EvalError> {
    Ok(Some(match cond {
        Cond::Const(v) => v.clone(),
        Cond::Var(path) => match lookup(path) {
            Some(v) => v,
            None => return Ok(None),
        },
        Cond::Not(e) => match eval(e, lookup)? {
            Some(v) => Value::Bool(!truthy(&v)?),
            None => return Ok(None),
        },
        Cond::Neg(e) => match eval(e, lookup)? {
            Some(Value::Int(i)) => Value::Int(-i),
            Some(Value::Float(f)) => Value::Float(-f),
            Some(v) => return Err(EvalError(format!("cannot negate {}", v.type_name()))),
            None => return Ok(None),
        },
        Cond::Binary(op @ (BinOp::And | BinOp::Or), a, b) => {
            let (Some(a), Some(b)) = (eval(a, lookup)?, eval(b, lookup)?) else {
                return Ok(None);
            };
            let (a, b) = (truthy(&a)?, truthy(&b)?);
            Value::Bool(if *op == BinOp::And { a && b } else { a || b })
        }
        Cond::Binary(op, a, b) => {
            let (Some(a), Some(b)) = (eval(a, lookup)?, eval(b, lookup)?) else {
                return Ok(None);
            };
            binary(*op, &a, &b)?
        }
        Cond::In(e, items) => {
            let Some(v) = eval(e, lookup)? else {
                return Ok(None);
            };
            let mut found = false;
            for item in items {
                let Some(x) = eval(item, lookup)? else {
                    return Ok(None);
                };
                found |= loose_eq(&v, &x);
            }
            Value::Bool(found)
        }
        Cond::Matches(e, pattern) => {
            let Some(v) = eval(e, lookup)? else {
                return Ok(None);
            };
            Value::Bool(full_match(pattern, &v.to_string())?)
        }
    }))
}

pub fn eval_bool(
    cond: &Cond,
    lookup: &mut dyn FnMut(&[String]) -> Option<Value>,
) -> Result<Option<bool>, EvalError> {
    eval(cond, lookup)?.map(|v| truthy(&v)).transpose()
}

/// Evaluate a predicate-domain predicate for one candidate value.
pub fn check_predicate(cond: &Cond, var: &str, value: &Value) -> Result<bool, EvalError> {
    let mut lookup = |p: &[String]| (p.len() == 1 && p[0] == var).then(|| value.clone());
    Ok(eval_bool(cond, &mut lookup)?.unwrap_or(false))
}

fn truthy(v: &Value) -> Result<bool, EvalError> {
    v.as_bool()
        .ok_or_else(|| EvalError(format!("expected a boolean, got {}", v.type_name())))
}

thread_local! {
    static REGEX_CACHE: RefCell<HashMap<String, Regex>> = RefCell::new(HashMap::new());
}

fn full_match(pattern: &str, text: &str) -> Result<bool, EvalError> {
    REGEX_CACHE.with(|cache| {
        let mut cache = cache.borrow_mut();
        if !cache.contains_key(pattern) {
            let re = Regex::new(&format!("^(?:{pattern})$"))
                .map_err(|e| EvalError(format!("invalid regex: {e}")))?;
            cache.insert(pattern.to_string(), re);
        }
        Ok(cache[pattern].is_match(text))
    })
}

/// Equality that lets an ISO string stand for a date.
pub fn loose_eq(a: &Value, b: &Value) -> bool {
    compare(a, b) == Some(Ordering::Equal)
}

/// Ordering between comparable values; `None` for incomparable types.
pub fn compare(a: &Value, b: &Value) -> Option<Ordering> {
    match (a, b) {
        (Value::Date(_), Value::Str(_)) | (Value::Str(_), Value::Date(_)) => {
            Some(a.as_date()?.cmp(&b.as_date()?))
        }
        _ if a.as_f64().is_some() && b.as_f64().is_some() => a.as_f64()?.partial_cmp(&b.as_f64()?),
        (Value::Str(x), Value::Str(y)) => Some(x.cmp(y)),
        (Value::Date(x), Value::Date(y)) => Some(x.cmp(y)),
        (Value::Bool(x), Value::Bool(y)) => Some(x.cmp(y)),
        (Value::Tuple(_), Value::Tuple(_)) => Some(a.cmp(b)),
        _ => None,
    }
}

fn binary(op: BinOp, a: &Value, b: &Value) -> Result<Value, EvalError> {
    let mismatch = || {
        EvalError(format!(
            "cannot apply `{}` to {} and {}",
            op.symbol(),
            a.type_name(),
            b.type_name()
        ))
    };
    if op.is_comparison() {
        let ord = compare(a, b);
        return Ok(Value::Bool(match op {
            BinOp::Eq => ord == Some(Ordering::Equal),
            BinOp::Ne => ord != Some(Ordering::Equal),
            _ => {
                let ord = ord.ok_or_else(mismatch)?;
                match op {
                    BinOp::Lt => ord.is_lt(),
                    BinOp::Le => ord.is_le(),
                    BinOp::Gt => ord.is_gt(),
                    _ => ord.is_ge(),
                }
            }
        }));
    }
    match (a, b) {
        (Value::Int(x), Value::Int(y)) => match op {
            BinOp::Add => x.checked_add(*y).map(Value::Int).ok_or_else(|| EvalError("overflow".into())),
            BinOp::Sub => x.checked_sub(*y).map(Value::Int).ok_or_else(|| EvalError("overflow".into())),
            BinOp::Mul => x.checked_mul(*y).map(Value::Int).ok_or_else(|| EvalError("overflow".into())),
            _ if *y == 0 => Err(EvalError("division by zero".into())),
            _ if x % y == 0 => Ok(Value::Int(x / y)),
            _ => Ok(Value::Float(*x as f64 / *y as f64)),
        },
        (Value::Date(d), Value::Int(n)) if matches!(op, BinOp::Add | BinOp::Sub) => {
            let delta = Duration::days(if op == BinOp::Add { *n } else { -n });
            d.checked_add_signed(delta).map(Value::Date).ok_or_else(mismatch)
        }
        (Value::Date(x), Value::Date(y)) if op == BinOp::Sub => {
            Ok(Value::Int((*x - *y).num_days()))
        }
        (Value::Str(x), Value::Str(y)) if op == BinOp::Add => Ok(Value::Str(format!("{x}{y}"))),
        _ => {
            let (x, y) = (a.as_f64().ok_or_else(mismatch)?, b.as_f64().ok_or_else(mismatch)?);
            Ok(Value::Float(match op {
                BinOp::Add => x + y,
                BinOp::Sub => x - y,
                BinOp::Mul => x * y,
                _ if y == 0.0 => return Err(EvalError("division by zero".into())),
                _ => x / y,
            }))
        }
    }
}

/// Inclusive bounds on a variable implied by a predicate. Conjunctions
/// intersect, disjunctions take the hull, anything else is unbounded.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Bounds {
    pub lo: Option<Value>,
    pub hi: Option<Value>,
}

impl Bounds {
    pub fn is_finite(&self) -> bool {
        self.lo.is_some() && self.hi.is_some()
    }

    fn intersect(self, other: Bounds) -> Bounds {
        let pick = |a: Option<Value>, b: Option<Value>, want: Ordering| match (a, b) {
            (Some(a), Some(b)) => Some(if compare(&a, &b) == Some(want) { a } else { b }),
            (a, b) => a.or(b),
        };
        Bounds {
            lo: pick(self.lo, other.lo, Ordering::Greater),
            hi: pick(self.hi, other.hi, Ordering::Less),
        }
    }

    fn hull(self, other: Bounds) -> Bounds {
        let pick = |a: Option<Value>, b: Option<Value>, want: Ordering| match (a, b) {
            (Some(a), Some(b)) => Some(if compare(&a, &b) == Some(want) { a } else { b }),
            _ => None,
        };
        Bounds {
            lo: pick(self.lo, other.lo, Ordering::Less),
            hi: pick(self.hi, other.hi, Ordering::Greater),
        }
    }
}

pub fn bounds(cond: &Cond, var: &str) -> Bounds {
    let is_var = |c: &Cond| matches!(c, Cond::Var(p) if p.len() == 1 && p[0] == var);
    match cond {
        Cond::Binary(BinOp::And, a, b) => bounds(a, var).intersect(bounds(b, var)),
        Cond::Binary(BinOp::Or, a, b) => bounds(a, var).hull(bounds(b, var)),
        Cond::Binary(op, a, b) if op.is_comparison() => {
            let (op, c) = if is_var(a) {
                (*op, b.as_ref())
            } else if is_var(b) {
                (op.flipped(), a.as_ref())
            } else {
                return Bounds::default();
            };
            let Some(c) = const_value(c) else {
                return Bounds::default();
            };
            match op {
                BinOp::Eq => Bounds {
                    lo: Some(c.clone()),
                    hi: Some(c),
                },
                BinOp::Ge => Bounds { lo: Some(c), hi: None },
                BinOp::Gt => Bounds { lo: Some(step(c, 1)), hi: None },
                BinOp::Le => Bounds { lo: None, hi: Some(c) },
                BinOp::Lt => Bounds { lo: None, hi: Some(step(c, -1)) },
                _ => Bounds::default(),
            }
        }
        Cond::In(e, items) if is_var(e) => {
            let consts: Option<Vec<Value>> = items.iter().map(const_value).collect();
            match consts {
                Some(mut vals) if !vals.is_empty() => {
                    vals.sort_by(|a, b| compare(a, b).unwrap_or(Ordering::Equal));
                    Bounds {
                        lo: vals.first().cloned(),
                        hi: vals.last().cloned(),
                    }
                }
                _ => Bounds::default(),
            }
        }
        _ => Bounds::default(),
    }
}

/// Members of a top-level `var in [...]` conjunct, if the predicate has one.
pub fn listed_values(cond: &Cond, var: &str) -> Option<Vec<Value>> {
    match cond {
        Cond::In(e, items) if matches!(e.as_ref(), Cond::Var(p) if p.len() == 1 && p[0] == var) => {
            items.iter().map(const_value).collect()
        }
        Cond::Binary(BinOp::And, a, b) => listed_values(a, var).or_else(|| listed_values(b, var)),
        _ => None,
    }
}

fn const_value(c: &Cond) -> Option<Value> {
    match c {
        Cond::Const(v) => Some(v.clone()),
        Cond::Neg(e) => match const_value(e)? {
            Value::Int(i) => Some(Value::Int(-i)),
            Value::Float(f) => Some(Value::Float(-f)),
            _ => None,
        },
        _ => None,
    }
}

/// Next/previous discrete value for strict bounds (floats stay put).
fn step(v: Value, dir: i64) -> Value {
    match v {
        Value::Int(i) => Value::Int(i + dir),
        Value::Date(d) => d
            .checked_add_signed(Duration::days(dir))
            .map(Value::Date)
            .unwrap_or(Value::Date(d)),
        v => v,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::syntax::parse_predicate;
    use crate::value::parse_date;

    fn p(s: &str) -> Cond {
        parse_predicate(s).unwrap()
    }

    #[test]
    fn range_predicate() {
        let c = p("x >= 1 and x <= 36");
        assert!(check_predicate(&c, "x", &Value::Int(36)).unwrap());
        assert!(!check_predicate(&c, "x", &Value::Int(37)).unwrap());
        assert_eq!(
            bounds(&c, "x"),
            Bounds {
                lo: Some(Value::Int(1)),
                hi: Some(Value::Int(36))
            }
        );
    }

    #[test]
    fn strict_and_flipped_bounds() {
        let b = bounds(&p("0 < x and x < 10"), "x");
        assert_eq!((b.lo, b.hi), (Some(Value::Int(1)), Some(Value::Int(9))));
        assert!(!bounds(&p("x > 0"), "x").is_finite());
        assert!(!bounds(&p("x > 0 or x < 5"), "x").is_finite());
    }

    #[test]
    fn membership_and_regex() {
        let c = p("s in ['usproducts', 'euproducts']");
        assert!(check_predicate(&c, "s", &Value::Str("euproducts".into())).unwrap());
        assert_eq!(listed_values(&c, "s").unwrap().len(), 2);
        let r = p("s matches '[a-z]+'");
        assert!(check_predicate(&r, "s", &Value::Str("abc".into())).unwrap());
        assert!(!check_predicate(&r, "s", &Value::Str("abc1".into())).unwrap());
    }

    #[test]
    fn dates_compare_with_strings_and_do_arithmetic() {
        let d = Value::Date(parse_date("2024-01-10").unwrap());
        assert!(loose_eq(&d, &Value::Str("2024-01-10".into())));
        let c = p("x - date '2024-01-01' <= 9");
        assert!(check_predicate(&c, "x", &d).unwrap());
    }

    #[test]
    fn unbound_variables_defer() {
        let c = p("x <= y");
        let mut lookup = |path: &[String]| (path[0] == "x").then_some(Value::Int(1));
        assert_eq!(eval_bool(&c, &mut lookup).unwrap(), None);
    }
}
