mod common;

use std::collections::HashMap;

use dig_core::binding::{reduce_root, BindingState};
use dig_core::dbt::{translate_project, DbtError, ProjectGraph};
use dig_core::fixtures;
use dig_core::{validate_grammar, ChoiceModel};

fn sources(p: &ProjectGraph) -> HashMap<String, String> {
    p.models.values().map(|t| (t.name.clone(), t.source.clone())).collect()
}

#[test]
fn branching_project_matches_direct_expansion() {
    let p = ProjectGraph::load(&fixtures::dir().join("dbt/branching")).unwrap();
    let ast = translate_project(&p).unwrap();
    assert!(validate_grammar(&ast).is_empty());
    let m = ChoiceModel::build(&ast).unwrap();
    let models = sources(&p);
    // arm k of the branch is taken when grain is the k-th listed value
    for (arm, grain) in ["month", "year", "day"].iter().enumerate() {
        for amount in [0, 1, 25, 1000] {
            let assignment = serde_json::json!({"by_period_if1": arm + 1, "payments1/min_amount": amount});
            let st = BindingState::from_assignments(&m, assignment.as_object().unwrap(), None).unwrap();
            let vars: HashMap<String, String> =
                [("grain".into(), grain.to_string()), ("min_amount".into(), amount.to_string())].into();
            assert_eq!(reduce_root(&m, &st, "by_period").unwrap(), common::expand_template("by_period", &models, &vars));
        }
    }
}

#[test]
fn region_reductions_execute() {
    use dig_core::catalog::{Catalog, SqliteBackend};
    let p = ProjectGraph::load(&fixtures::dir().join("dbt/region")).unwrap();
    let m = ChoiceModel::build(&translate_project(&p).unwrap()).unwrap();
    let catalog = Catalog::new(std::sync::Arc::new(SqliteBackend::with_scripts(&[fixtures::SALES_SQL]).unwrap()));
    for region in ["usa", "eur"] {
        let a = serde_json::json!({"region": region, "age": 18});
        let st = BindingState::from_assignments(&m, a.as_object().unwrap(), None).unwrap();
        let sql = reduce_root(&m, &st, "q").unwrap();
        catalog.execute(&format!("{sql} GROUP BY cty")).unwrap();
    }
}

#[test]
fn undeclared_variable_is_reported() {
    let p = ProjectGraph::from_sources(vec![("m".into(), "SELECT {{ var(\"x\") }}".into())], "").unwrap();
    assert_eq!(p.undeclared_vars().unwrap(), ["x"]);
}

#[test]
fn ref_cycles_are_rejected() {
    let p = ProjectGraph::from_sources(
        vec![
            ("a".into(), "SELECT * FROM {{ ref(\"b\") }}".into()),
            ("b".into(), "SELECT * FROM {{ ref(\"a\") }}".into()),
        ],
        "",
    )
    .unwrap();
    assert!(matches!(translate_project(&p), Err(DbtError::CyclicRef(_))));
}
