//! Applying an interaction's payload to a binding state through the spec's
//! mappings.

use indexmap::IndexMap;
use serde::Serialize;

use crate::binding::{parse_input, BindError, BindingState, Effects, Provenance};
use crate::catalog::Catalog;
use crate::choice::{ChoiceModel, NodeKind, QualifiedName, INSTANCE_WILDCARD};
use crate::interface::{mapping_targets, AttrDomain, InteractionDecl, InterfaceSpec, WidgetType};
use crate::value::Value;

/// Attribute name → value. Text inputs use `text`; interactions mapped to
/// star instances take the instance number as `instance`.
pub type Payload = IndexMap<String, Value>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum InteractionError {
    #[error("unknown interaction `{0}`")]
    UnknownInteraction(String),
    #[error("payload for `{interaction}`: {message}")]
    BadPayload { interaction: String, message: String },
    #[error(transparent)]
    Bind(#[from] BindError),
}

/// Read a JSON payload: an object keyed by attribute, or a bare value for
/// single-attribute interactions (a two-element array for range sliders).
pub fn payload_from_json(interaction: &InteractionDecl, json: &serde_json::Value) -> Result<Payload, InteractionError> {
    let bad = |message: &str| InteractionError::BadPayload {
        interaction: interaction.id.clone(),
        message: message.to_string(),
    };
    let mut out = Payload::new();
    match json {
        serde_json::Value::Object(map) => {
            for (k, v) in map {
                if k != "instance" && interaction.attribute(k).is_none() {
                    return Err(bad(&format!("no attribute `{k}`")));
                }
                out.insert(k.clone(), Value::from_json(v).ok_or_else(|| bad("null value"))?);
            }
        }
        serde_json::Value::Array(items) if interaction.domain.len() == items.len() && items.len() > 1 => {
            for (a, v) in interaction.domain.iter().zip(items) {
                out.insert(a.name.clone(), Value::from_json(v).ok_or_else(|| bad("null value"))?);
            }
        }
        v if interaction.domain.len() == 1 => {
            out.insert(
                interaction.domain[0].name.clone(),
                Value::from_json(v).ok_or_else(|| bad("null value"))?,
            );
        }
        _ => return Err(bad("expected an object keyed by attribute")),
    }
    Ok(out)
}

pub fn payload_to_json(payload: &Payload) -> serde_json::Value {
    serde_json::Value::Object(payload.iter().map(|(k, v)| (k.clone(), v.to_plain_json())).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InteractionOutcome {
    /// Direct bindings the interaction made (including selections implied by
    /// the variables it set).
    pub bound: Vec<(QualifiedName, Value)>,
    pub effects: Effects,
}

fn instantiate(q: &QualifiedName, instance: Option<i64>) -> Option<QualifiedName> {
    if !q.is_template() {
        return Some(q.clone());
    }
    let n = instance?;
    Some(QualifiedName::new(
        q.segments()
            .iter()
            .map(|s| if s == INSTANCE_WILDCARD { n.to_string() } else { s.clone() })
            .collect(),
    ))
}

/// Selections above `q` set to the alternative that contains it, outermost
/// first, plus star counts large enough to hold the instances on its path.
pub fn implied_bindings(model: &ChoiceModel, state: &BindingState, q: &QualifiedName) -> Vec<(QualifiedName, Value)> {
    let mut out = Vec::new();
    let mut ancestors = model.ancestors(q);
    ancestors.reverse();
    for a in ancestors {
        let Ok(r) = model.grammar.resolve(&a) else { continue };
        match model.grammar.node(r.node).kind {
            NodeKind::Sel(_) => {
                if let Some(k) = model.alternative_containing(&a, q) {
                    out.push((a, Value::Int(k as i64 + 1)));
                }
            }
            NodeKind::Star(_) => {
                let Some(i) = q.segments().get(a.len()).and_then(|s| s.parse::<i64>().ok()) else {
                    continue;
                };
                let have = state.value(&a).and_then(Value::as_int).unwrap_or(0);
                out.push((a, Value::Int(have.max(i))));
            }
            _ => {}
        }
    }
    out
}

/// Translate the payload through the interaction's mappings and bind the
/// result in one atomic step.
pub fn apply_interaction(
    model: &ChoiceModel,
    spec: &InterfaceSpec,
    state: &mut BindingState,
    interaction_id: &str,
    payload: &Payload,
    catalog: Option<&Catalog>,
) -> Result<InteractionOutcome, InteractionError> {
    let interaction = spec
        .interaction(interaction_id)
        .ok_or_else(|| InteractionError::UnknownInteraction(interaction_id.to_string()))?;
    let bad = |message: String| InteractionError::BadPayload {
        interaction: interaction_id.to_string(),
        message,
    };
    let instance = payload.get("instance").and_then(Value::as_int);

    if interaction.widget_type == WidgetType::TextInput {
        let text = match payload.get("text") {
            Some(Value::Str(s)) => s.clone(),
            Some(v) => v.to_string(),
            None => return Err(bad("missing `text`".into())),
        };
        let mut scratch = state.clone();
        let mut bound = Vec::new();
        for m in spec.mappings_of(interaction_id) {
            let target = mapping_targets(model, m).ok_or_else(|| bad(format!("unknown target `{}`", m.target)))?;
            let target = instantiate(&target, instance).ok_or_else(|| bad("missing `instance`".into()))?;
            let implied = implied_bindings(model, &scratch, &target);
            if !implied.is_empty() {
                scratch.bind_all(model, &implied, Provenance::Direct, catalog)?;
                bound.extend(implied);
            }
            let out = parse_input(model, &mut scratch, &target, &text, catalog)?;
            bound.extend(out.bindings);
        }
        let effects = scratch.diff(state);
        *state = scratch;
        return Ok(InteractionOutcome { bound, effects });
    }

    let mut items: Vec<(QualifiedName, Value)> = Vec::new();
    let push = |q: QualifiedName, v: Value, items: &mut Vec<(QualifiedName, Value)>| {
        if let Some(slot) = items.iter_mut().find(|(p, _)| *p == q) {
            slot.1 = v;
        } else {
            items.push((q, v));
        }
    };
    for m in spec.mappings_of(interaction_id) {
        let target = mapping_targets(model, m).ok_or_else(|| bad(format!("unknown target `{}`", m.target)))?;
        let target = instantiate(&target, instance).ok_or_else(|| bad("missing `instance`".into()))?;
        let Some((attr, _)) = m.attributes.iter().next() else { continue };
        let Some(value) = payload.get(attr) else { continue };
        let is_site = model.recursive_sites.iter().any(|s| s.path == target);
        if is_site {
            // entering a recursive branch: choose the alternative holding it
            if value.as_int().unwrap_or(0) > 0 {
                for (q, v) in implied_bindings(model, state, &target) {
                    push(q, v, &mut items);
                }
            }
            continue;
        }
        for (q, v) in implied_bindings(model, state, &target) {
            if !items.iter().any(|(p, _)| *p == q) {
                push(q, v, &mut items);
            }
        }
        let value = match (&interaction.attribute(attr).map(|a| &a.domain), value) {
            (Some(AttrDomain::Boolean), Value::Bool(b)) => Value::Int(if *b { 2 } else { 1 }),
            _ => value.clone(),
        };
        push(target, value, &mut items);
    }
    if items.is_empty() {
        return Err(bad("payload sets nothing".into()));
    }
    let effects = state.bind_all(model, &items, Provenance::Direct, catalog)?;
    Ok(InteractionOutcome { bound: items, effects })
}

/// What each widget shows, derived from the bindings alone: an object of
/// attribute values per interaction (per instance for instance templates).
/// Text inputs show the reduction of their term once it is complete.
pub fn widget_states(
    model: &ChoiceModel,
    spec: &InterfaceSpec,
    state: &BindingState,
) -> IndexMap<String, serde_json::Value> {
    let mut out = IndexMap::new();
    for decl in &spec.interactions {
        // instance (None for plain targets) → attribute values
        let mut per: std::collections::BTreeMap<Option<String>, serde_json::Map<String, serde_json::Value>> =
            Default::default();
        for m in spec.mappings_of(&decl.id) {
            let Some(target) = mapping_targets(model, m) else { continue };
            let Some((attr, _)) = m.attributes.iter().next() else { continue };
            let concrete: Vec<(QualifiedName, Option<String>)> = if target.is_template() {
                let at = target.segments().iter().position(|s| s == INSTANCE_WILDCARD).unwrap();
                let mut seen = std::collections::BTreeSet::new();
                for (q, _) in state.bindings() {
                    let segs = q.segments();
                    if segs.len() > at && segs[..at] == target.segments()[..at] {
                        seen.insert(segs[at].clone());
                    }
                }
                seen.into_iter()
                    .filter_map(|n| instantiate(&target, n.parse().ok()).map(|q| (q, Some(n))))
                    .collect()
            } else {
                vec![(target, None)]
            };
            for (q, instance) in concrete {
                let value = if decl.widget_type == WidgetType::TextInput {
                    model
                        .grammar
                        .resolve(&q)
                        .ok()
                        .and_then(|r| crate::binding::reduce_term(model, state, &q, r.node).ok())
                        .map(serde_json::Value::String)
                } else if m.attributes.values().any(|v| v == "instances") {
                    None
                } else {
                    state.value(&q).map(Value::to_plain_json)
                };
                if let Some(v) = value {
                    per.entry(instance).or_default().insert(attr.clone(), v);
                }
            }
        }
        let shown = match per.remove(&None) {
            Some(plain) if per.is_empty() => serde_json::Value::Object(plain),
            plain => {
                let mut obj = plain.unwrap_or_default();
                if !per.is_empty() {
                    let instances: serde_json::Map<String, serde_json::Value> = per
                        .into_iter()
                        .map(|(k, v)| (k.unwrap_or_default(), serde_json::Value::Object(v)))
                        .collect();
                    obj.insert("instances".into(), serde_json::Value::Object(instances));
                }
                serde_json::Value::Object(obj)
            }
        };
        out.insert(decl.id.clone(), shown);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::binding::reduce;
    use crate::fixtures;
    use crate::interface::{synthesize, SynthOptions};
    use crate::syntax::parse_grammar;

    #[test]
    fn drought_dropdown_and_slider() {
        let ast = parse_grammar(fixtures::DROUGHT).unwrap();
        let m = ChoiceModel::build(&ast).unwrap();
        let spec = synthesize(&ast, None, &SynthOptions::default()).unwrap();
        let mut st = BindingState::new();
        let dd = spec.interactions.iter().find(|i| i.widget_type == WidgetType::Dropdown).unwrap();
        let rs = spec.interactions.iter().find(|i| i.widget_type == WidgetType::RangeSlider).unwrap();
        let p = payload_from_json(dd, &serde_json::json!(2)).unwrap();
        apply_interaction(&m, &spec, &mut st, &dd.id, &p, None).unwrap();
        let p = payload_from_json(rs, &serde_json::json!([1, 2])).unwrap();
        apply_interaction(&m, &spec, &mut st, &rs.id, &p, None).unwrap();
        assert_eq!(
            reduce(&m, &st).sql("q"),
            Some("SELECT year, payout1(*), ... FROM evi WHERE dekad BETWEEN 1 AND 2")
        );

        let p = payload_from_json(rs, &serde_json::json!({"lo": 5, "hi": 3})).unwrap();
        apply_interaction(&m, &spec, &mut st, &rs.id, &p, None).unwrap();
        assert_eq!(st.violations().len(), 1);
        assert_eq!(reduce(&m, &st).sql("q"), None);
    }

    #[test]
    fn text_input_on_star_instance() {
        let ast = parse_grammar(fixtures::QUERYBUILDER).unwrap();
        let m = ChoiceModel::build(&ast).unwrap();
        let spec = synthesize(&ast, None, &SynthOptions::default()).unwrap();
        let text = |target: &str| {
            spec.mappings
                .iter()
                .find(|mp| mp.target.ends_with(target))
                .map(|mp| mp.interaction_id.clone())
                .unwrap()
        };
        let mut st = BindingState::new();
        let mut p = Payload::new();
        p.insert("text".into(), Value::Str("b < 7".into()));
        p.insert("instance".into(), Value::Int(2));
        apply_interaction(&m, &spec, &mut st, &text("*/pred2"), &p, None).unwrap();
        let star: QualifiedName = "root/query1/where1/where.1".parse().unwrap();
        assert_eq!(st.value(&star), Some(&Value::Int(2)));
        let val: QualifiedName = "root/query1/where1/where.1/2/pred2/val1".parse().unwrap();
        assert_eq!(st.value(&val), Some(&Value::Str("7".into())));
    }
}
