//! Tutorial planning: the shortest sequence of interactions (and clears)
//! that takes an interface from one binding state to another.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BinaryHeap, HashMap};

use serde::Serialize;

use crate::binding::{reduce_term, BindingState};
use crate::catalog::Catalog;
use crate::choice::{ChoiceModel, QualifiedName, INSTANCE_WILDCARD};
use crate::interface::{mapping_targets, AttrDomain, InterfaceSpec, WidgetType};
use crate::value::Value;

use super::interact::{apply_interaction, implied_bindings, payload_to_json, Payload};

/// States explored before giving up.
pub const MAX_SEARCH_STATES: usize = 50_000;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TutorialStep {
    /// `None` for a clear step.
    pub interaction_id: Option<String>,
    #[serde(serialize_with = "ser_payload")]
    pub payload: Payload,
    /// Variables cleared by this step (display names).
    pub unbind: Vec<String>,
    pub instruction: String,
}

fn ser_payload<S: serde::Serializer>(p: &Payload, s: S) -> Result<S::Ok, S::Error> {
    payload_to_json(p).serialize(s)
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum TutorialError {
    #[error("no sequence of interactions reaches the end state (searched {0} states)")]
    Unreachable(usize),
    #[error("{0} state has constraint violations")]
    InvalidState(&'static str),
}

/// Everything bound, propagated values included. Two states that agree here
/// reduce identically.
pub fn value_map(state: &BindingState) -> BTreeMap<QualifiedName, Value> {
    state.bindings().map(|(q, b)| (q.clone(), b.value.clone())).collect()
}

#[derive(Clone)]
enum Move {
    Interact(String, Payload),
    Clear(QualifiedName),
}

/// Shortest plan (one unit per step) from `start` to `end`; ties go to the
/// interaction declared first.
pub fn plan_tutorial(
    model: &ChoiceModel,
    spec: &InterfaceSpec,
    start: &BindingState,
    end: &BindingState,
    catalog: Option<&Catalog>,
) -> Result<Vec<TutorialStep>, TutorialError> {
    plan_tutorial_with_cost(model, spec, start, end, catalog, &|_| 1)
}

/// Cheapest plan under `cost`. Searches the states reachable by
/// interactions that set end-state values, plus clears of variables the end
/// state leaves unbound.
pub fn plan_tutorial_with_cost(
    model: &ChoiceModel,
    spec: &InterfaceSpec,
    start: &BindingState,
    end: &BindingState,
    catalog: Option<&Catalog>,
    cost: &dyn Fn(&TutorialStep) -> u32,
) -> Result<Vec<TutorialStep>, TutorialError> {
    if !start.violations().is_empty() {
        return Err(TutorialError::InvalidState("start"));
    }
    if !end.violations().is_empty() {
        return Err(TutorialError::InvalidState("end"));
    }
    let goal = value_map(end);
    let moves = candidate_moves(model, spec, end);

    let key = |s: &BindingState| serde_json::to_string(&value_map(s).into_iter().collect::<Vec<_>>()).unwrap();
    let mut best: HashMap<String, u64> = HashMap::new();
    // state, and how it was reached (parent index, step)
    let mut states: Vec<(BindingState, Option<(usize, TutorialStep)>)> = vec![(start.clone(), None)];
    // (cost, discovery order) keeps the search deterministic
    let mut heap = BinaryHeap::from([Reverse((0u64, 0usize))]);
    best.insert(key(start), 0);

    while let Some(Reverse((dist, i))) = heap.pop() {
        let current = states[i].0.clone();
        if best.get(&key(&current)).is_some_and(|d| *d < dist) {
            continue;
        }
        if value_map(&current) == goal {
            let mut path = Vec::new();
            let mut at = i;
            while let Some((prev, step)) = &states[at].1 {
                path.push(step.clone());
                at = *prev;
            }
            path.reverse();
            return Ok(path);
        }
        let clears = current
            .sources()
            .into_iter()
            .filter(|(q, _)| !goal.contains_key(*q))
            .map(|(q, _)| Move::Clear(q.clone()));
        let all: Vec<Move> = moves.iter().cloned().chain(clears).collect();
        for m in all {
            let mut next = current.clone();
            let ok = match &m {
                Move::Interact(id, payload) => apply_interaction(model, spec, &mut next, id, payload, catalog).is_ok(),
                Move::Clear(q) => next.unbind(model, q).is_ok(),
            };
            if !ok {
                continue;
            }
            let step = describe(model, spec, &m);
            let d = dist + cost(&step) as u64;
            let k = key(&next);
            if best.get(&k).is_some_and(|old| *old <= d) {
                continue;
            }
            if states.len() >= MAX_SEARCH_STATES {
                return Err(TutorialError::Unreachable(states.len()));
            }
            best.insert(k, d);
            states.push((next, Some((i, step))));
            heap.push(Reverse((d, states.len() - 1)));
        }
    }
    Err(TutorialError::Unreachable(states.len()))
}

fn describe(model: &ChoiceModel, spec: &InterfaceSpec, m: &Move) -> TutorialStep {
    match m {
        Move::Clear(q) => TutorialStep {
            interaction_id: None,
            payload: Payload::new(),
            unbind: vec![model.display(q)],
            instruction: format!("Clear {}", model.display(q)),
        },
        Move::Interact(id, payload) => {
            let decl = spec.interaction(id);
            let label = decl.map(|d| d.label.clone()).unwrap_or_else(|| id.clone());
            let shown: Vec<String> = payload
                .iter()
                .filter(|(k, _)| k.as_str() != "instance")
                .map(|(k, v)| {
                    // options read better by label than by index
                    let label = decl.and_then(|d| d.attribute(k)).and_then(|a| match &a.domain {
                        AttrDomain::Options { options } => options.iter().find(|o| &o.value == v).map(|o| o.label.clone()),
                        _ => None,
                    });
                    label.unwrap_or_else(|| v.to_string())
                })
                .collect();
            let verb = match decl.map(|d| d.widget_type) {
                Some(WidgetType::TextInput) => "Type",
                Some(WidgetType::ButtonAddInstance) => "Press",
                Some(WidgetType::Dropdown | WidgetType::Radio) => "Choose",
                _ => "Set",
            };
            let shown = shown.join(" .. ");
            let mut instruction = match verb {
                "Press" => format!("Press {label}"),
                "Type" => format!("Type '{shown}' into {label}"),
                "Choose" => format!("Choose {shown} in {label}"),
                _ => format!("Set {label} to {shown}"),
            };
            if let Some(n) = payload.get("instance") {
                instruction.push_str(&format!(" (#{n})"));
            }
            TutorialStep {
                interaction_id: Some(id.clone()),
                payload: payload.clone(),
                unbind: Vec::new(),
                instruction,
            }
        }
    }
}

/// One payload per interaction (and star instance) that moves its targets to
/// their end-state values, in interaction declaration order.
fn candidate_moves(model: &ChoiceModel, spec: &InterfaceSpec, end: &BindingState) -> Vec<Move> {
    let mut out = Vec::new();
    for decl in &spec.interactions {
        // instance → payload
        let mut by_instance: BTreeMap<Option<i64>, Payload> = BTreeMap::new();
        for m in spec.mappings_of(&decl.id) {
            let Some(target) = mapping_targets(model, m) else { continue };
            let Some((attr, _)) = m.attributes.iter().next() else { continue };
            for (concrete, instance) in concretes(&target, end) {
                let value = if decl.widget_type == WidgetType::TextInput {
                    let Ok(r) = model.grammar.resolve(&concrete) else { continue };
                    match reduce_term(model, end, &concrete, r.node) {
                        Ok(text) => Value::Str(text),
                        Err(_) => continue,
                    }
                } else if model.recursive_sites.iter().any(|s| s.path == target) {
                    let implied = implied_bindings(model, &BindingState::new(), &concrete);
                    if implied.is_empty() || implied.iter().any(|(q, v)| end.value(q) != Some(v)) {
                        continue;
                    }
                    Value::Int(1)
                } else {
                    match end.value(&concrete) {
                        Some(v) => v.clone(),
                        None => continue,
                    }
                };
                let p = by_instance.entry(instance).or_default();
                p.insert(attr.clone(), value);
                if let Some(n) = instance {
                    p.insert("instance".into(), Value::Int(n));
                }
            }
        }
        for (_, payload) in by_instance {
            // range sliders and other multi-attribute widgets need every part
            let attrs = payload.keys().filter(|k| k.as_str() != "instance").count();
            if decl.widget_type != WidgetType::TextInput && attrs < decl.domain.len() && decl.domain.len() > 1 {
                continue;
            }
            out.push(Move::Interact(decl.id.clone(), payload));
        }
    }
    out
}

/// Concrete names for a (possibly template) target: itself, or every
/// instance the end state mentions.
fn concretes(target: &QualifiedName, end: &BindingState) -> Vec<(QualifiedName, Option<i64>)> {
    if !target.is_template() {
        return vec![(target.clone(), None)];
    }
    let star_at = target.segments().iter().position(|s| s == INSTANCE_WILDCARD).unwrap();
    let mut found: Vec<i64> = end
        .bindings()
        .filter_map(|(q, _)| {
            let segs = q.segments();
            if segs.len() <= star_at || segs[..star_at] != target.segments()[..star_at] {
                return None;
            }
            segs[star_at].parse::<i64>().ok()
        })
        .collect();
    found.sort_unstable();
    found.dedup();
    found
        .into_iter()
        .map(|n| {
            let segs = target
                .segments()
                .iter()
                .map(|s| if s == INSTANCE_WILDCARD { n.to_string() } else { s.clone() })
                .collect();
            (QualifiedName::new(segs), Some(n))
        })
        .collect()
}
