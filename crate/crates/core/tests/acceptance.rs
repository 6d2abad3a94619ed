//! End-to-end acceptance checks. Prints one PASS/FAIL line per check and
//! exits non-zero if any fail.

mod common;

use std::collections::{HashMap, HashSet};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;

use dig_core::binding::{accepts, enumerate_root, parse_input, reduce, reduce_root, unroll, BindingState};
use dig_core::dbt::{translate_project, ProjectGraph};
use dig_core::fixtures;
use dig_core::interface::{
    check_valid, factor_rewrite, synthesize, synthesize_default, AttrDomain, SynthOptions, ViewType, WidgetType,
};
use dig_core::tooling::{
    apply_interaction, generate_workload, payload_from_json, plan_tutorial, replay, value_map, TutorialStep, UserModel,
};
use dig_core::{parse_grammar, validate_grammar, ChoiceModel, QualifiedName, Value};

use common::{GrammarShape, flights, random_state};

/// Wall-clock budget for enumerating the drought grammar.
const ENUMERATION_BUDGET: Duration = Duration::from_secs(1);
const FACTOR_TRIALS: usize = 200;
const DEFAULT_INTERFACE_TRIALS: usize = 500;
const TUTORIAL_TRIALS: usize = 100;
const WORKLOAD_EVENTS: usize = 10_000;
/// Ages tried for every region in the dbt check.
const DBT_AGES: std::ops::RangeInclusive<i64> = 1..=100;

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn drought_enumeration() -> Outcome {
    let m = ChoiceModel::build(&parse_grammar(fixtures::DROUGHT).unwrap()).unwrap();
    let t = Instant::now();
    let qs = enumerate_root(&m, "q", None, 100_000).map_err(|e| e.to_string())?;
    let took = t.elapsed();
    ensure(qs.len() == 1332, || format!("{} queries", qs.len()))?;
    ensure(took < ENUMERATION_BUDGET, || format!("took {took:?}"))?;
    Ok(format!("1332 queries in {took:?}"))
}

fn language(src: &str) -> Result<(HashSet<String>, HashSet<String>), String> {
    let ast = parse_grammar(src).map_err(|e| e.to_string())?;
    let f = factor_rewrite(&ast);
    let before = enumerate_root(&ChoiceModel::build(&ast).unwrap(), "q", None, 10_000).map_err(|e| e.to_string())?;
    let after = enumerate_root(&ChoiceModel::build(&f).map_err(|e| e.to_string())?, "q", None, 10_000)
        .map_err(|e| e.to_string())?;
    Ok((before.into_iter().collect(), after.into_iter().collect()))
}

fn factoring() -> Outcome {
    let (before, after) = language(fixtures::PREDICATES)?;
    ensure(before.len() == 4 && before == after, || format!("predicates: {before:?} vs {after:?}"))?;
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut factored = 0;
    for i in 0..FACTOR_TRIALS {
        let src = common::literal_product_grammar(&mut rng);
        let (b, a) = language(&src)?;
        ensure(a == b, || format!("trial {i} changed the language:\n{src}"))?;
        let ast = parse_grammar(&src).unwrap();
        if factor_rewrite(&ast) != ast {
            factored += 1;
        }
    }
    Ok(format!("predicates 4 strings kept; {FACTOR_TRIALS} random grammars kept ({factored} rewritten)"))
}

fn crossfilter() -> Outcome {
    let catalog = flights();
    let ast = parse_grammar(fixtures::CROSSFILTER).unwrap();
    let m = ChoiceModel::build(&ast).unwrap();
    let spec = synthesize(&ast, Some(&catalog), &SynthOptions::default()).map_err(|e| e.to_string())?;
    let mut st = BindingState::new();
    let apply = |st: &mut BindingState, target: &str, json: serde_json::Value| -> Result<(), String> {
        let mapping = spec
            .mappings
            .iter()
            .find(|mp| mp.target.ends_with(target))
            .ok_or_else(|| format!("no widget for {target}"))?;
        let decl = spec.interaction(&mapping.interaction_id).unwrap();
        let p = payload_from_json(decl, &json).map_err(|e| e.to_string())?;
        apply_interaction(&m, &spec, st, &decl.id, &p, Some(&catalog)).map_err(|e| e.to_string())?;
        Ok(())
    };
    apply(&mut st, "/pair", serde_json::json!(1))?;
    apply(&mut st, "/parr", serde_json::json!(1))?;
    let brush = spec
        .interactions
        .iter()
        .find(|i| i.widget_type == WidgetType::RangeSlider && spec.mappings_of(&i.id).any(|mp| mp.target.ends_with("pd/s")))
        .ok_or("no date brush")?;
    let AttrDomain::Query { options, .. } = &brush.domain[0].domain else {
        return Err("brush is not over the date column".into());
    };
    let (lo, hi) = (options[1].clone(), options[options.len() - 2].clone());
    let p = payload_from_json(brush, &serde_json::json!([lo.to_plain_json(), hi.to_plain_json()])).unwrap();
    apply_interaction(&m, &spec, &mut st, &brush.id, &p, Some(&catalog)).map_err(|e| e.to_string())?;

    let r = reduce(&m, &st);
    let (q1, q2) = (r.sql("q1").ok_or("q1 incomplete")?, r.sql("q2").ok_or("q2 incomplete")?);
    let clause = format!("date BETWEEN '{lo}' AND '{hi}'");
    ensure(q1.contains(&clause) && q2.contains(&clause), || format!("{q1}\n{q2}"))?;

    apply(&mut st, "/pd", serde_json::json!(1))?;
    let r = reduce(&m, &st);
    let (q1, q2) = (r.sql("q1").ok_or("q1 incomplete")?, r.sql("q2").ok_or("q2 incomplete")?);
    ensure(!q1.contains("BETWEEN") && !q2.contains("BETWEEN"), || format!("{q1}\n{q2}"))?;
    ensure(q1.contains("AND true GROUP BY") && q2.contains("AND true GROUP BY"), || format!("{q1}\n{q2}"))?;
    Ok(format!("one brush → both queries carry `{clause}`; 'true' clears both"))
}

fn drought_roundtrip() -> Outcome {
    let m = ChoiceModel::build(&parse_grammar(fixtures::DROUGHT).unwrap()).unwrap();
    let qs = enumerate_root(&m, "q", None, 100_000).map_err(|e| e.to_string())?;
    let root = QualifiedName::root("q");
    for s in &qs {
        let mut st = BindingState::new();
        parse_input(&m, &mut st, &root, s, None).map_err(|e| format!("{s}: {e}"))?;
        let back = reduce_root(&m, &st, "q").map_err(|e| format!("{s}: {e}"))?;
        ensure(&back == s, || format!("{s} -> {back}"))?;
    }
    Ok(format!("{} strings parse and reduce byte-identically", qs.len()))
}

fn default_interfaces() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let shape = GrammarShape { rules: 5, stars: true, regex: true };
    for i in 0..DEFAULT_INTERFACE_TRIALS {
        let src = common::random_grammar(&mut rng, &shape);
        let ast = parse_grammar(&src).map_err(|e| format!("trial {i}: {e}\n{src}"))?;
        ensure(validate_grammar(&ast).is_empty(), || format!("trial {i} not well-formed:\n{src}"))?;
        let spec = synthesize_default(&ast).map_err(|e| e.to_string())?;
        let report = check_valid(&spec, &ast);
        ensure(report.is_empty(), || format!("trial {i}: {report:?}\n{src}"))?;
    }
    Ok(format!("{DEFAULT_INTERFACE_TRIALS} random grammars, all reports empty"))
}

fn drought_interface() -> Outcome {
    let ast = parse_grammar(fixtures::DROUGHT).unwrap();
    let spec = synthesize(&ast, None, &SynthOptions::default()).map_err(|e| e.to_string())?;
    let of = |w: WidgetType| spec.interactions.iter().filter(|i| i.widget_type == w).collect::<Vec<_>>();
    let dd = of(WidgetType::Dropdown);
    ensure(dd.len() == 1, || format!("{} dropdowns", dd.len()))?;
    ensure(
        matches!(&dd[0].domain[0].domain, AttrDomain::Options { options } if options.len() == 2),
        || format!("{:?}", dd[0].domain),
    )?;
    let rs = of(WidgetType::RangeSlider);
    ensure(rs.len() == 1, || format!("{} range sliders", rs.len()))?;
    ensure(
        rs[0].domain.iter().all(|a| {
            matches!(&a.domain, AttrDomain::Range { lo: Some(Value::Int(1)), hi: Some(Value::Int(36)), .. })
        }),
        || format!("{:?}", rs[0].domain),
    )?;
    ensure(spec.interactions.len() == 2, || format!("{} widgets", spec.interactions.len()))?;
    let charts = spec.views.iter().filter(|v| v.view_type != ViewType::Table).count();
    ensure(spec.views.len() == 1 && charts == 1, || format!("{:?}", spec.views))?;
    let report = check_valid(&spec, &ast);
    ensure(report.is_empty(), || format!("{report:?}"))?;
    Ok("dropdown(2) + range-slider[1,36] + 1 chart, valid".into())
}

fn dbt() -> Outcome {
    let dir = fixtures::dir().join("dbt/region");
    let project = ProjectGraph::load(&dir).map_err(|e| e.to_string())?;
    let ast = translate_project(&project).map_err(|e| e.to_string())?;
    let m = ChoiceModel::build(&ast).map_err(|e| e.to_string())?;
    let models: HashMap<String, String> = project.models.values().map(|t| (t.name.clone(), t.source.clone())).collect();
    let bind = |region: &str, age: i64| -> Result<String, String> {
        let map = serde_json::json!({"region": region, "age": age});
        let st = BindingState::from_assignments(&m, map.as_object().unwrap(), None).map_err(|e| e.to_string())?;
        reduce_root(&m, &st, "q").map_err(|e| e.to_string())
    };
    let usa = common::expand_template("usa", &models, &HashMap::new());
    let want = format!("SELECT cty, sum(profit) FROM ({usa}) WHERE age > 30");
    let got = bind("usa", 30)?;
    ensure(got == want, || format!("{got}\nwant {want}"))?;
    let mut n = 0;
    for region in ["usa", "eur"] {
        for age in DBT_AGES {
            let vars: HashMap<String, String> =
                [("region".to_string(), region.to_string()), ("age".to_string(), age.to_string())].into();
            let oracle = common::expand_template("q", &models, &vars);
            let got = bind(region, age)?;
            ensure(got == oracle, || format!("{region}/{age}: {got} vs {oracle}"))?;
            n += 1;
        }
    }
    Ok(format!("`{want}`; {n} assignments match direct expansion"))
}

fn check_plan(m: &ChoiceModel, spec: &dig_core::interface::InterfaceSpec, start: &BindingState, plan: &[TutorialStep]) -> Result<BindingState, String> {
    // every variable a step sets sits under selections already (or now) on
    // the alternative that holds it
    let mut st = start.clone();
    for step in plan {
        let before = st.clone();
        st = replay(m, spec, &st, std::slice::from_ref(step), None).map_err(|e| e.to_string())?;
        for (q, b) in st.bindings() {
            if before.get(q) == Some(b) {
                continue;
            }
            for a in m.ancestors(q) {
                let Some(k) = m.alternative_containing(&a, q) else { continue };
                ensure(st.value(&a) == Some(&Value::Int(k as i64 + 1)), || {
                    format!("{} set before its ancestor {}", m.display(q), m.display(&a))
                })?;
            }
        }
    }
    Ok(st)
}

fn tutorials() -> Outcome {
    let ast = parse_grammar(fixtures::DROUGHT).unwrap();
    let m = ChoiceModel::build(&ast).unwrap();
    let spec = synthesize(&ast, None, &SynthOptions::default()).unwrap();
    let state = |v: serde_json::Value| BindingState::from_assignments(&m, v.as_object().unwrap(), None).unwrap();
    let start = state(serde_json::json!({"t": "chirps", "s": 10, "e": 23}));
    let end = state(serde_json::json!({"t": "evi", "s": 1, "e": 2}));
    let plan = plan_tutorial(&m, &spec, &start, &end, None).map_err(|e| e.to_string())?;
    ensure(plan.len() == 2, || format!("{} steps", plan.len()))?;
    let reached = check_plan(&m, &spec, &start, &plan)?;
    ensure(value_map(&reached) == value_map(&end), || "drought replay missed the end state".into())?;

    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let shape = GrammarShape { rules: 5, stars: false, regex: false };
    let mut done = 0;
    let mut steps = 0;
    let mut attempts = 0;
    while done < TUTORIAL_TRIALS {
        attempts += 1;
        ensure(attempts < TUTORIAL_TRIALS * 20, || format!("only {done} usable pairs"))?;
        let src = common::random_grammar(&mut rng, &shape);
        let ast = parse_grammar(&src).unwrap();
        let m = ChoiceModel::build(&ast).unwrap();
        // nested: some variable has a selection above it
        if !m.variables.iter().any(|v| !m.ancestors(&v.qname).is_empty()) {
            continue;
        }
        let spec = synthesize(&ast, None, &SynthOptions::default()).map_err(|e| e.to_string())?;
        let (Some((_, a)), Some((_, b))) = (random_state(&m, "r0", &mut rng), random_state(&m, "r0", &mut rng)) else {
            continue;
        };
        if value_map(&a) == value_map(&b) {
            continue;
        }
        let plan = plan_tutorial(&m, &spec, &a, &b, None).map_err(|e| format!("{e}\n{src}"))?;
        let reached = check_plan(&m, &spec, &a, &plan).map_err(|e| format!("{e}\n{src}"))?;
        ensure(value_map(&reached) == value_map(&b), || format!("replay missed the end state\n{src}"))?;
        steps += plan.len();
        done += 1;
    }
    Ok(format!("drought plan has 2 steps; {done} nested pairs replay exactly ({steps} steps total)"))
}

fn workloads() -> Outcome {
    let catalog = flights();
    let mut total = 0;
    let mut queries = 0;
    for (name, src, cat) in [("drought", fixtures::DROUGHT, None), ("crossfilter", fixtures::CROSSFILTER, Some(&catalog))] {
        let ast = parse_grammar(src).unwrap();
        let m = ChoiceModel::build(&ast).unwrap();
        let spec = synthesize(&ast, cat, &SynthOptions::default()).map_err(|e| e.to_string())?;
        let user = UserModel::default();
        let seed = ChaCha8Rng::seed_from_u64(23).random::<u64>();
        let a = generate_workload(&m, &spec, &user, WORKLOAD_EVENTS, seed, cat).map_err(|e| e.to_string())?;
        let b = generate_workload(&m, &spec, &user, WORKLOAD_EVENTS, seed, cat).map_err(|e| e.to_string())?;
        ensure(a == b, || format!("{name}: not deterministic"))?;
        ensure(a.len() == WORKLOAD_EVENTS, || format!("{name}: {} events", a.len()))?;
        for e in &a {
            for q in &e.queries {
                ensure(accepts(&m, &q.root, &q.sql, cat), || format!("{name}: `{}` does not reparse", q.sql))?;
                queries += 1;
            }
        }
        total += a.len();
    }
    Ok(format!("{total} events, {queries} queries, all reparse; same seed → same trace"))
}

fn unrolling() -> Outcome {
    let ast = parse_grammar(fixtures::QUERYBUILDER).unwrap();
    let nested = |n: usize| -> String {
        let mut q = "SELECT * FROM t WHERE a > 1".to_string();
        for _ in 0..n {
            q = format!("SELECT * FROM ({q}) WHERE b < 2");
        }
        q
    };
    let mut seen = Vec::new();
    for d in 0..=2 {
        let m = ChoiceModel::build(&unroll(&ast, d).map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
        for n in 0..=4 {
            let ok = accepts(&m, "root", &nested(n), None);
            ensure(ok == (n <= d), || format!("depth {d}, nesting {n}: accepted={ok}"))?;
        }
        seen.push(format!("d={d}"));
    }
    Ok(format!("{} accept exactly nesting ≤ d (checked nesting 0..=4)", seen.join(", ")))
}

type Check = (&'static str, fn() -> Outcome);

fn main() {
    let checks: [Check; 10] = [
        ("drought enumeration", drought_enumeration),
        ("factoring preserves language", factoring),
        ("cross-filter brush", crossfilter),
        ("drought parse/reduce round trip", drought_roundtrip),
        ("default interfaces are valid", default_interfaces),
        ("drought interface", drought_interface),
        ("dbt translation", dbt),
        ("tutorial plans", tutorials),
        ("workload generation", workloads),
        ("recursion unrolling", unrolling),
    ];
    let mut failed = 0;
    for (name, f) in checks {
        let r = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            Err(p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string())).unwrap_or_default())
        });
        match r {
            Ok(detail) => println!("PASS {name}: {detail}"),
            Err(why) => {
                failed += 1;
                println!("FAIL {name}: {why}");
            }
        }
    }
    if failed > 0 {
        std::process::exit(1);
    }
}
