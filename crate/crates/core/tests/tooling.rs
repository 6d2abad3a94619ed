mod common;

use std::collections::HashSet;

use dig_core::binding::{enumerate_root, unroll, BindingState};
use dig_core::fixtures;
use dig_core::interface::{synthesize, SynthOptions, WidgetType};
use dig_core::tooling::{generate_workload, plan_tutorial, replay, value_map, write_jsonl, UserKind, UserModel, WorkloadEvent};
use dig_core::{parse_grammar, ChoiceModel};

#[test]
fn drought_workload_stays_in_the_query_space() {
    let ast = parse_grammar(fixtures::DROUGHT).unwrap();
    let m = ChoiceModel::build(&ast).unwrap();
    let spec = synthesize(&ast, None, &SynthOptions::default()).unwrap();
    let space: HashSet<String> = enumerate_root(&m, "q", None, 10_000).unwrap().into_iter().collect();
    let events = generate_workload(&m, &spec, &UserModel::default(), 100, 9, None).unwrap();
    assert_eq!(events.len(), 100);
    let emitted: Vec<&str> = events.iter().flat_map(|e| e.queries.iter().map(|q| q.sql.as_str())).collect();
    assert!(!emitted.is_empty());
    assert!(emitted.iter().all(|q| space.contains(*q)));

    assert!(generate_workload(&m, &spec, &UserModel::default(), 0, 9, None).unwrap().is_empty());
}

#[test]
fn brushing_refreshes_both_charts_in_one_event() {
    let catalog = common::flights();
    let ast = parse_grammar(fixtures::CROSSFILTER).unwrap();
    let m = ChoiceModel::build(&ast).unwrap();
    let spec = synthesize(&ast, Some(&catalog), &SynthOptions::default()).unwrap();
    let brush = spec
        .interactions
        .iter()
        .find(|i| i.widget_type == WidgetType::RangeSlider && spec.mappings_of(&i.id).any(|mp| mp.target.ends_with("pd/s")))
        .unwrap();
    // mostly brushing, occasionally touching anything else
    let mut rows = indexmap::IndexMap::new();
    for i in &spec.interactions {
        let mut row = indexmap::IndexMap::new();
        for j in &spec.interactions {
            row.insert(j.id.clone(), if j.id == brush.id { 8.0 } else { 1.0 });
        }
        rows.insert(i.id.clone(), row);
    }
    let user = UserModel {
        kind: UserKind::Markov { transitions: rows, start: None },
        think_time_mean_ms: 400.0,
    };
    let events = generate_workload(&m, &spec, &user, 300, 2, Some(&catalog)).unwrap();
    let both = events.iter().filter(|e| {
        e.interaction == brush.id && {
            let roots: HashSet<&str> = e.queries.iter().map(|q| q.root.as_str()).collect();
            roots.contains("q1") && roots.contains("q2")
        }
    });
    assert!(both.count() > 0);
    let brushes = events.iter().filter(|e| e.interaction == brush.id).count();
    assert!(brushes > 150, "{brushes} brush events");
}

#[test]
fn trace_lines_round_trip() {
    let ast = parse_grammar(fixtures::DROUGHT).unwrap();
    let m = ChoiceModel::build(&ast).unwrap();
    let spec = synthesize(&ast, None, &SynthOptions::default()).unwrap();
    let events = generate_workload(&m, &spec, &UserModel::default(), 25, 1, None).unwrap();
    let mut buf = Vec::new();
    write_jsonl(&events, &mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let back: Vec<WorkloadEvent> = text.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(back, events);
    let first: serde_json::Value = serde_json::from_str(text.lines().next().unwrap()).unwrap();
    let keys: Vec<&str> = first.as_object().unwrap().keys().map(String::as_str).collect();
    assert_eq!(keys, ["t_offset_ms", "interaction", "delta", "queries"]);
}

#[test]
fn tutorial_enters_the_subquery_branch_first() {
    let catalog = common::flights();
    // nested panels only exist in the UI; plan over a one-level unrolling
    let ast = unroll(&parse_grammar(fixtures::QUERYBUILDER).unwrap(), 1).unwrap();
    let m = ChoiceModel::build(&ast).unwrap();
    let spec = synthesize(&ast, Some(&catalog), &SynthOptions::default()).unwrap();
    let parse = |text: &str| {
        let mut st = BindingState::new();
        dig_core::binding::parse_input(&m, &mut st, &dig_core::QualifiedName::root("root"), text, Some(&catalog)).unwrap();
        st
    };
    let start = parse("SELECT * FROM flights WHERE a > 1");
    let end = parse("SELECT * FROM (SELECT * FROM flights WHERE b < 2) WHERE a > 1");
    let plan = plan_tutorial(&m, &spec, &start, &end, Some(&catalog)).unwrap();
    let reached = replay(&m, &spec, &start, &plan, Some(&catalog)).unwrap();
    assert_eq!(value_map(&reached), value_map(&end));
    // whenever anything inside the subquery is bound, the src selection
    // already picks the subquery branch
    let src = m.lookup("query1/src1").unwrap();
    for k in 1..=plan.len() {
        let st = replay(&m, &spec, &start, &plan[..k], Some(&catalog)).unwrap();
        let nested = st.bindings().any(|(q, _)| q.to_string().contains("query_d"));
        if nested {
            assert_eq!(st.value(&src), Some(&dig_core::Value::Int(2)), "after step {k}");
        }
    }
    assert!(!plan.is_empty());
}
