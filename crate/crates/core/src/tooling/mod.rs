//! Tools built on a grammar plus its interface: driving interactions,
//! planning tutorials, and generating workloads.

mod interact;
mod sample;
mod tutorial;
mod workload;

pub use interact::{
    apply_interaction, implied_bindings, payload_from_json, payload_to_json, widget_states, InteractionError,
    InteractionOutcome, Payload,
};
pub use sample::{sample_predicate, SampleError, TermSampler, MAX_SAMPLE_DEPTH, MAX_SAMPLE_INSTANCES};
pub use tutorial::{plan_tutorial, plan_tutorial_with_cost, value_map, TutorialError, TutorialStep, MAX_SEARCH_STATES};
pub use workload::{
    generate_workload, sample_payload, write_jsonl, EmittedQuery, UserKind, UserModel, WorkloadError, WorkloadEvent,
    MAX_PAYLOAD_ATTEMPTS,
};

use crate::binding::BindingState;
use crate::catalog::Catalog;
use crate::choice::ChoiceModel;
use crate::interface::InterfaceSpec;

/// Bindings plus the widget states they imply.
#[derive(Debug, Clone, serde::Serialize)]
pub struct InterfaceState {
    pub bindings: BindingState,
    pub widgets: indexmap::IndexMap<String, serde_json::Value>,
}

impl InterfaceState {
    pub fn derive(model: &ChoiceModel, spec: &InterfaceSpec, bindings: BindingState) -> Self {
        let widgets = widget_states(model, spec, &bindings);
        InterfaceState { bindings, widgets }
    }
}

/// Apply a plan's steps to `start`, as a user following the tutorial would.
pub fn replay(
    model: &ChoiceModel,
    spec: &InterfaceSpec,
    start: &BindingState,
    steps: &[TutorialStep],
    catalog: Option<&Catalog>,
) -> Result<BindingState, InteractionError> {
    let mut state = start.clone();
    for step in steps {
        if let Some(id) = &step.interaction_id {
            apply_interaction(model, spec, &mut state, id, &step.payload, catalog)?;
        }
        for name in &step.unbind {
            let q = model.lookup(name).map_err(crate::binding::BindError::from)?;
            state.unbind(model, &q)?;
        }
    }
    Ok(state)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::interface::{synthesize, SynthOptions};
    use crate::syntax::parse_grammar;
    use serde_json::json;

    fn state(m: &ChoiceModel, v: serde_json::Value) -> BindingState {
        BindingState::from_assignments(m, v.as_object().unwrap(), None).unwrap()
    }

    #[test]
    fn drought_tutorial_two_steps() {
        let ast = parse_grammar(fixtures::DROUGHT).unwrap();
        let m = ChoiceModel::build(&ast).unwrap();
        let spec = synthesize(&ast, None, &SynthOptions::default()).unwrap();
        let start = state(&m, json!({"t": 1, "s": 10, "e": 23}));
        let end = state(&m, json!({"t": 2, "s": 1, "e": 2}));
        let plan = plan_tutorial(&m, &spec, &start, &end, None).unwrap();
        assert_eq!(plan.len(), 2, "{plan:#?}");
        let reached = replay(&m, &spec, &start, &plan, None).unwrap();
        assert_eq!(value_map(&reached), value_map(&end));
        assert!(plan[0].instruction.starts_with("Choose evi"), "{}", plan[0].instruction);

        let shown = InterfaceState::derive(&m, &spec, reached).widgets;
        let values: Vec<_> = shown.values().cloned().collect();
        assert_eq!(values, [json!({"value": 2}), json!({"lo": 1, "hi": 2})]);
    }

    #[test]
    fn cost_hook_and_invalid_states() {
        let ast = parse_grammar(fixtures::DROUGHT).unwrap();
        let m = ChoiceModel::build(&ast).unwrap();
        let spec = synthesize(&ast, None, &SynthOptions::default()).unwrap();
        let start = state(&m, json!({"t": 1, "s": 10, "e": 23}));
        let end = state(&m, json!({"t": 2, "s": 1, "e": 2}));
        // a dear slider does not make a cheaper route appear
        let cost = |s: &TutorialStep| if s.instruction.contains("..") { 10 } else { 1 };
        let plan = plan_tutorial_with_cost(&m, &spec, &start, &end, None, &cost).unwrap();
        assert_eq!(plan.len(), 2);
        assert_eq!(plan_tutorial(&m, &spec, &end, &end, None).unwrap(), []);

        let bad = state(&m, json!({"s": 10, "e": 3}));
        assert_eq!(plan_tutorial(&m, &spec, &bad, &end, None), Err(TutorialError::InvalidState("start")));
        assert_eq!(plan_tutorial(&m, &spec, &end, &bad, None), Err(TutorialError::InvalidState("end")));
    }

    #[test]
    fn clearing_is_a_step() {
        let ast = parse_grammar(fixtures::DROUGHT).unwrap();
        let m = ChoiceModel::build(&ast).unwrap();
        let spec = synthesize(&ast, None, &SynthOptions::default()).unwrap();
        let start = state(&m, json!({"t": 1, "s": 10, "e": 23}));
        let end = state(&m, json!({"t": 1}));
        let plan = plan_tutorial(&m, &spec, &start, &end, None).unwrap();
        assert!(plan.iter().all(|s| s.interaction_id.is_none()));
        let reached = replay(&m, &spec, &start, &plan, None).unwrap();
        assert_eq!(value_map(&reached), value_map(&end));
    }
}
