mod common;

use std::collections::HashSet;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use dig_core::binding::{accepts, enumerate_root, parse_input, reduce_root, unroll, BindingState, Provenance, ViolationKind};
use dig_core::fixtures;
use dig_core::interface::{check_valid, factor_rewrite, synthesize, synthesize_default, SynthOptions};
use dig_core::tooling::{generate_workload, plan_tutorial, replay, value_map, UserModel};
use dig_core::{format_grammar, parse_grammar, ChoiceModel, QualifiedName, Value};

use common::GrammarShape;

const FULL: GrammarShape = GrammarShape { rules: 5, stars: true, regex: true };
const FINITE: GrammarShape = GrammarShape { rules: 4, stars: false, regex: false };

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn printer_roundtrips(seed in any::<u64>()) {
        let src = common::random_grammar(&mut ChaCha8Rng::seed_from_u64(seed), &FULL);
        let ast = parse_grammar(&src).unwrap();
        prop_assert_eq!(parse_grammar(&format_grammar(&ast)).unwrap(), ast);
    }

    #[test]
    fn default_interface_is_valid(seed in any::<u64>()) {
        let src = common::random_grammar(&mut ChaCha8Rng::seed_from_u64(seed), &FULL);
        let ast = parse_grammar(&src).unwrap();
        let spec = synthesize_default(&ast).unwrap();
        prop_assert!(check_valid(&spec, &ast).is_empty());
        // and the spec survives a JSON round trip
        let back = dig_core::interface::InterfaceSpec::from_json(&spec.to_json()).unwrap();
        prop_assert_eq!(back, spec);
    }

    #[test]
    fn synthesized_interface_is_valid(seed in any::<u64>()) {
        let src = common::random_grammar(&mut ChaCha8Rng::seed_from_u64(seed), &FULL);
        let ast = parse_grammar(&src).unwrap();
        let spec = synthesize(&ast, None, &SynthOptions::default()).unwrap();
        let report = check_valid(&spec, &ast);
        prop_assert!(report.is_empty(), "{:?}\n{}", report, src);
    }

    #[test]
    fn factoring_keeps_the_language(seed in any::<u64>()) {
        let src = common::literal_product_grammar(&mut ChaCha8Rng::seed_from_u64(seed));
        let ast = parse_grammar(&src).unwrap();
        let f = factor_rewrite(&ast);
        let lang = |a| -> HashSet<String> {
            enumerate_root(&ChoiceModel::build(a).unwrap(), "q", None, 10_000).unwrap().into_iter().collect()
        };
        prop_assert_eq!(lang(&ast), lang(&f));
        // a second pass finds nothing left to do
        prop_assert_eq!(factor_rewrite(&f), f);
    }

    #[test]
    fn enumerated_strings_parse_and_reduce_back(seed in any::<u64>()) {
        let src = common::random_grammar(&mut ChaCha8Rng::seed_from_u64(seed), &FINITE);
        let m = ChoiceModel::build(&parse_grammar(&src).unwrap()).unwrap();
        let Ok(strings) = enumerate_root(&m, "r0", None, 2_000) else { return Ok(()) };
        let root = QualifiedName::root("r0");
        for s in strings {
            let mut st = BindingState::new();
            parse_input(&m, &mut st, &root, &s, None).unwrap();
            prop_assert_eq!(reduce_root(&m, &st, "r0").unwrap(), s);
        }
    }

    #[test]
    fn unrolled_depth_bounds_nesting(d in 0usize..4, n in 0usize..6) {
        let ast = parse_grammar(fixtures::QUERYBUILDER).unwrap();
        let m = ChoiceModel::build(&unroll(&ast, d).unwrap()).unwrap();
        let mut q = "SELECT * FROM t WHERE a > 1 AND b = 3".to_string();
        for _ in 0..n {
            q = format!("SELECT * FROM ({q}) WHERE c < 2");
        }
        prop_assert_eq!(accepts(&m, "root", &q, None), n <= d);
    }

    #[test]
    fn tutorial_replays_to_the_end_state(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let src = common::random_grammar(&mut rng, &FINITE);
        let ast = parse_grammar(&src).unwrap();
        let m = ChoiceModel::build(&ast).unwrap();
        let spec = synthesize(&ast, None, &SynthOptions::default()).unwrap();
        let (Some((_, a)), Some((_, b))) = (common::random_state(&m, "r0", &mut rng), common::random_state(&m, "r0", &mut rng)) else {
            return Ok(());
        };
        let plan = plan_tutorial(&m, &spec, &a, &b, None).unwrap();
        let reached = replay(&m, &spec, &a, &plan, None).unwrap();
        prop_assert_eq!(value_map(&reached), value_map(&b));
        // planning from the end state itself needs no steps
        prop_assert!(plan_tutorial(&m, &spec, &b, &b, None).unwrap().is_empty());
    }

    #[test]
    fn querybuilder_workload_reparses(seed in any::<u64>()) {
        let ast = parse_grammar(fixtures::QUERYBUILDER).unwrap();
        let m = ChoiceModel::build(&ast).unwrap();
        // table names come from the database
        let catalog = common::flights();
        let spec = synthesize(&ast, Some(&catalog), &SynthOptions::default()).unwrap();
        let events = generate_workload(&m, &spec, &UserModel::default(), 60, seed, Some(&catalog)).unwrap();
        for e in &events {
            for q in &e.queries {
                prop_assert!(accepts(&m, &q.root, &q.sql, Some(&catalog)), "{}", q.sql);
            }
        }
    }

    #[test]
    fn equality_classes_stay_uniform(ops in prop::collection::vec((0usize..4, 1i64..3, any::<bool>()), 1..12)) {
        // cross-filter `pd` appears under q1 and q2; members agree unless two
        // of them were set directly to different values, which is reported
        let m = ChoiceModel::build(&parse_grammar(fixtures::CROSSFILTER).unwrap()).unwrap();
        let names: Vec<QualifiedName> = ["q1/pd", "q2/pd", "q1/pair", "q2/parr"].iter().map(|s| m.lookup(s).unwrap()).collect();
        let mut st = BindingState::new();
        for (i, v, unbind) in ops {
            if unbind {
                st.unbind(&m, &names[i]).unwrap();
            } else {
                st.bind_with(&m, &names[i], &Value::Int(v), Provenance::Direct, None).unwrap();
            }
            let (a, b) = (st.value(&names[0]), st.value(&names[1]));
            let conflict = st.violations().iter().any(|v| v.kind == ViolationKind::Equality);
            prop_assert!(a == b || conflict);
            prop_assert_eq!(a.is_some(), b.is_some());
            prop_assert_eq!(conflict, a != b);
        }
    }

    #[test]
    fn propagation_matches_recomputation(ops in prop::collection::vec((0usize..4, 1i64..3, any::<bool>()), 1..12)) {
        let m = ChoiceModel::build(&parse_grammar(fixtures::CROSSFILTER).unwrap()).unwrap();
        let names: Vec<QualifiedName> = ["q1/pd", "q2/pd", "q1/pair", "q2/parr"].iter().map(|s| m.lookup(s).unwrap()).collect();
        let mut st = BindingState::new();
        for (i, v, unbind) in ops {
            if unbind {
                st.unbind(&m, &names[i]).unwrap();
            } else {
                st.bind(&m, &names[i], &Value::Int(v), None).unwrap();
            }
        }
        // replay only the direct bindings, in order, on a fresh state
        let mut fresh = BindingState::new();
        for (q, b) in st.sources() {
            fresh.bind(&m, q, &b.value, None).unwrap();
        }
        prop_assert_eq!(value_map(&fresh), value_map(&st));
        prop_assert_eq!(fresh.violations().len(), st.violations().len());
    }
}
