use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::catalog::Catalog;
use crate::choice::{ChoiceModel, ChoiceVariable, DomainDescriptor, QualifiedName, VariableKind};
use crate::syntax::{format_constraint, ValueType};
use crate::value::Value;

use super::domain::{attr_parameter, validate_value};
use super::eval::eval_bool;
use super::BindError;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Provenance {
    Direct,
    Propagated { from: QualifiedName },
    ParsedFromText,
    Default,
}

impl Provenance {
    /// Bindings that are not derived by propagation.
    pub fn is_source(&self) -> bool {
        !matches!(self, Provenance::Propagated { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Binding {
    pub value: Value,
    pub provenance: Provenance,
    /// Order in which source bindings were made; propagated copies carry the
    /// sequence number of their source.
    pub seq: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ViolationKind {
    Constraint,
    Equality,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub kind: ViolationKind,
    /// The constraint as written, for constraint violations.
    pub constraint: Option<String>,
    pub involved: Vec<QualifiedName>,
    pub message: String,
}

/// What a bind/unbind changed.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct Effects {
    pub bound: Vec<(QualifiedName, Value)>,
    pub propagated: Vec<(QualifiedName, Value)>,
    pub removed: Vec<QualifiedName>,
    pub violations_added: Vec<Violation>,
    pub violations_cleared: Vec<Violation>,
}

impl Effects {
    fn merge(&mut self, other: Effects) {
        self.bound.extend(other.bound);
        self.propagated.extend(other.propagated);
        self.removed.extend(other.removed);
        self.violations_added.extend(other.violations_added);
        self.violations_cleared.extend(other.violations_cleared);
    }
}

/// Per-session bindings of choice variables.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct BindingState {
    bindings: BTreeMap<QualifiedName, Binding>,
    violations: Vec<Violation>,
    next_seq: u64,
}

impl BindingState {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, qname: &QualifiedName) -> Option<&Binding> {
        self.bindings.get(qname)
    }

    pub fn value(&self, qname: &QualifiedName) -> Option<&Value> {
        self.bindings.get(qname).map(|b| &b.value)
    }

    pub fn bindings(&self) -> impl Iterator<Item = (&QualifiedName, &Binding)> {
        self.bindings.iter()
    }

    pub fn len(&self) -> usize {
        self.bindings.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bindings.is_empty()
    }

    pub fn violations(&self) -> &[Violation] {
        &self.violations
    }

    /// Source bindings in the order they were made.
    pub fn sources(&self) -> Vec<(&QualifiedName, &Binding)> {
        let mut out: Vec<_> = self
            .bindings
            .iter()
            .filter(|(_, b)| b.provenance.is_source())
            .collect();
        out.sort_by_key(|(_, b)| b.seq);
        out
    }

    pub fn bind(
        &mut self,
        model: &ChoiceModel,
        qname: &QualifiedName,
        value: &Value,
        catalog: Option<&Catalog>,
    ) -> Result<Effects, BindError> {
        self.bind_with(model, qname, value, Provenance::Direct, catalog)
    }

    /// Validate and bind; on error the state is unchanged. Violations are
    /// recorded, not raised.
    pub fn bind_with(
        &mut self,
        model: &ChoiceModel,
        qname: &QualifiedName,
        value: &Value,
        provenance: Provenance,
        catalog: Option<&Catalog>,
    ) -> Result<Effects, BindError> {
        let value = self.checked_value(model, qname, value, catalog)?;
        let before = self.clone();
        self.insert_source(qname.clone(), value, provenance);
        self.settle(model);
        Ok(self.diff(&before))
    }

    /// Bind several variables as one step; all-or-nothing.
    pub fn bind_all(
        &mut self,
        model: &ChoiceModel,
        items: &[(QualifiedName, Value)],
        provenance: Provenance,
        catalog: Option<&Catalog>,
    ) -> Result<Effects, BindError> {
        let before = self.clone();
        let mut scratch = self.clone();
        for (q, v) in items {
            let v = scratch.checked_value(model, q, v, catalog)?;
            scratch.insert_source(q.clone(), v, provenance.clone());
            // later items may depend on earlier ones (attr parameters)
            scratch.settle(model);
        }
        *self = scratch;
        Ok(self.diff(&before))
    }

    /// Remove the variable and everything in its equality class.
    pub fn unbind(&mut self, model: &ChoiceModel, qname: &QualifiedName) -> Result<Effects, BindError> {
        let cv = model.variable_at(qname)?;
        let before = self.clone();
        let mut doomed = vec![qname.clone()];
        for q in self.bindings.keys() {
            if model.class_of(q).ok().as_deref() == Some(cv.class.as_str()) {
                doomed.push(q.clone());
            }
        }
        for q in doomed {
            self.bindings.remove(&q);
        }
        self.settle(model);
        Ok(self.diff(&before))
    }

    /// Unbind several variables (each with its class).
    pub fn unbind_all(&mut self, model: &ChoiceModel, names: &[QualifiedName]) -> Result<Effects, BindError> {
        let mut effects = Effects::default();
        for q in names {
            effects.merge(self.unbind(model, q)?);
        }
        Ok(effects)
    }

    fn checked_value(
        &self,
        model: &ChoiceModel,
        qname: &QualifiedName,
        value: &Value,
        catalog: Option<&Catalog>,
    ) -> Result<Value, BindError> {
        let cv = model.variable_at(qname)?;
        let param = self.attr_param_value(model, &cv);
        validate_value(model, &cv, value, param.as_ref(), catalog)
    }

    /// The relation currently bound to the parameter of an `attr[rule]`
    /// domain.
    pub fn attr_param_value(&self, model: &ChoiceModel, cv: &ChoiceVariable) -> Option<Value> {
        let DomainDescriptor::PredicateDom {
            base: ValueType::Attr(Some(rule)),
            ..
        } = &cv.domain
        else {
            return None;
        };
        let param = attr_parameter(model, &cv.qname, rule, self.bindings.keys().cloned())?;
        let value = self.value(&param)?.clone();
        let pcv = model.variable_at(&param).ok()?;
        Some(match (pcv.kind, &value) {
            (VariableKind::Selection, Value::Int(i)) => {
                Value::Str(model.alternative_labels(pcv.node).get(*i as usize - 1)?.clone())
            }
            _ => value,
        })
    }

    fn insert_source(&mut self, qname: QualifiedName, value: Value, provenance: Provenance) {
        self.next_seq += 1;
        self.bindings.insert(
            qname,
            Binding {
                value,
                provenance,
                seq: self.next_seq,
            },
        );
    }

    /// Recompute propagated copies and violations from the source bindings.
    fn settle(&mut self, model: &ChoiceModel) {
        self.bindings.retain(|_, b| b.provenance.is_source());
        let mut classes: HashMap<String, Vec<QualifiedName>> = HashMap::new();
        for q in self.bindings.keys() {
            if let Ok(key) = model.class_of(q) {
                classes.entry(key).or_default().push(q.clone());
            }
        }
        let mut violations = Vec::new();
        let mut class_values: HashMap<String, Value> = HashMap::new();
        for (key, sources) in &classes {
            let latest = sources
                .iter()
                .max_by_key(|q| self.bindings[*q].seq)
                .unwrap()
                .clone();
            let latest_binding = self.bindings[&latest].clone();
            let distinct = sources
                .iter()
                .any(|q| self.bindings[q].value != latest_binding.value);
            if distinct {
                violations.push(Violation {
                    kind: ViolationKind::Equality,
                    constraint: None,
                    involved: sources.clone(),
                    message: format!(
                        "{} must hold equal values",
                        sources
                            .iter()
                            .map(|q| model.display(q))
                            .collect::<Vec<_>>()
                            .join(", ")
                    ),
                });
            }
            class_values.insert(key.clone(), latest_binding.value.clone());
            for member in model.variables.iter().filter(|v| &v.class == key) {
                if member.qname.is_template() || self.bindings.contains_key(&member.qname) {
                    continue;
                }
                self.bindings.insert(
                    member.qname.clone(),
                    Binding {
                        value: latest_binding.value.clone(),
                        provenance: Provenance::Propagated {
                            from: latest.clone(),
                        },
                        seq: latest_binding.seq,
                    },
                );
            }
        }

        for c in &model.graph.constraints {
            let mut lookup = |path: &[String]| {
                c.class_of(path).and_then(|k| class_values.get(k)).cloned()
            };
            let outcome = eval_bool(&c.cond, &mut lookup);
            let message = match outcome {
                Ok(Some(true)) | Ok(None) => continue,
                Ok(Some(false)) => format!("constraint `{}` is false", format_constraint(&c.cond)),
                Err(e) => format!("constraint `{}` cannot be evaluated: {e}", format_constraint(&c.cond)),
            };
            let involved = self
                .bindings
                .keys()
                .filter(|q| {
                    model
                        .class_of(q)
                        .is_ok_and(|k| c.classes().any(|ck| ck == k))
                })
                .cloned()
                .collect();
            violations.push(Violation {
                kind: ViolationKind::Constraint,
                constraint: Some(format_constraint(&c.cond)),
                involved,
                message,
            });
        }
        self.violations = violations;
    }

    pub(crate) fn diff(&self, before: &BindingState) -> Effects {
        let mut e = Effects::default();
        for (q, b) in &self.bindings {
            if before.bindings.get(q) == Some(b) {
                continue;
            }
            if b.provenance.is_source() {
                e.bound.push((q.clone(), b.value.clone()));
            } else {
                e.propagated.push((q.clone(), b.value.clone()));
            }
        }
        for q in before.bindings.keys() {
            if !self.bindings.contains_key(q) {
                e.removed.push(q.clone());
            }
        }
        for v in &self.violations {
            if !before.violations.contains(v) {
                e.violations_added.push(v.clone());
            }
        }
        for v in &before.violations {
            if !self.violations.contains(v) {
                e.violations_cleared.push(v.clone());
            }
        }
        e
    }

    /// Plain `display name → value` map of the source bindings, in binding
    /// order. This is the on-disk state format.
    pub fn to_assignments(&self, model: &ChoiceModel) -> serde_json::Map<String, serde_json::Value> {
        self.sources()
            .into_iter()
            .map(|(q, b)| (model.display(q), b.value.to_plain_json()))
            .collect()
    }

    /// Rebuild a state by binding each entry of an assignment map in order.
    pub fn from_assignments(
        model: &ChoiceModel,
        map: &serde_json::Map<String, serde_json::Value>,
        catalog: Option<&Catalog>,
    ) -> Result<BindingState, BindError> {
        let mut items = Vec::with_capacity(map.len());
        for (name, json) in map {
            let q = model.lookup(name)?;
            let v = Value::from_json(json).ok_or_else(|| {
                BindError::Domain(super::DomainError {
                    variable: name.clone(),
                    value: json.to_string(),
                    reason: "null is not a value".into(),
                })
            })?;
            items.push((q, v));
        }
        let mut state = BindingState::new();
        state.bind_all(model, &items, Provenance::Direct, catalog)?;
        Ok(state)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::syntax::parse_grammar;

    fn drought() -> ChoiceModel {
        ChoiceModel::build(&parse_grammar(fixtures::DROUGHT).unwrap()).unwrap()
    }

    fn q(m: &ChoiceModel, s: &str) -> QualifiedName {
        m.lookup(s).unwrap()
    }

    #[test]
    fn violation_is_recorded_and_bindings_kept() {
        let m = drought();
        let mut st = BindingState::new();
        st.bind(&m, &q(&m, "s"), &Value::Int(10), None).unwrap();
        st.bind(&m, &q(&m, "e"), &Value::Int(23), None).unwrap();
        assert!(st.violations().is_empty());
        let fx = st.bind(&m, &q(&m, "e"), &Value::Int(3), None).unwrap();
        assert_eq!(fx.violations_added.len(), 1);
        assert_eq!(st.value(&q(&m, "e")), Some(&Value::Int(3)));
        assert_eq!(st.value(&q(&m, "s")), Some(&Value::Int(10)));
    }

    #[test]
    fn domain_error_leaves_state_unchanged() {
        let m = drought();
        let mut st = BindingState::new();
        st.bind(&m, &q(&m, "s"), &Value::Int(5), None).unwrap();
        let before = st.clone();
        assert!(matches!(
            st.bind(&m, &q(&m, "s"), &Value::Int(0), None),
            Err(BindError::Domain(_))
        ));
        assert_eq!(st, before);
    }

    #[test]
    fn selection_accepts_labels() {
        let m = drought();
        let mut st = BindingState::new();
        st.bind(&m, &q(&m, "t"), &Value::Str("evi".into()), None).unwrap();
        assert_eq!(st.value(&q(&m, "t")), Some(&Value::Int(2)));
    }

    #[test]
    fn unbind_is_idempotent() {
        let m = drought();
        let mut st = BindingState::new();
        st.bind(&m, &q(&m, "s"), &Value::Int(10), None).unwrap();
        st.unbind(&m, &q(&m, "s")).unwrap();
        assert!(st.is_empty() && st.violations().is_empty());
        let fx = st.unbind(&m, &q(&m, "s")).unwrap();
        assert_eq!(fx, Effects::default());
    }

    #[test]
    fn assignments_roundtrip() {
        let m = drought();
        let mut st = BindingState::new();
        st.bind(&m, &q(&m, "t"), &Value::Int(1), None).unwrap();
        st.bind(&m, &q(&m, "s"), &Value::Int(4), None).unwrap();
        let map = st.to_assignments(&m);
        assert_eq!(serde_json::Value::Object(map.clone()).to_string(), r#"{"t":1,"s":4}"#);
        let back = BindingState::from_assignments(&m, &map, None).unwrap();
        assert_eq!(back.value(&q(&m, "s")), Some(&Value::Int(4)));
    }
}
