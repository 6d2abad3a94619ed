//! Shared setup for the benchmarks.

use std::sync::Arc;

use dig_core::binding::BindingState;
use dig_core::catalog::{Catalog, SqliteBackend};
use dig_core::interface::{synthesize, InterfaceSpec, SynthOptions};
use dig_core::{fixtures, parse_grammar, ChoiceModel, GrammarAst};

pub struct Setup {
    pub ast: GrammarAst,
    pub model: ChoiceModel,
    pub spec: InterfaceSpec,
    pub catalog: Option<Catalog>,
}

impl Setup {
    pub fn new(source: &str, scripts: &[&str]) -> Setup {
        let ast = parse_grammar(source).expect("fixture grammar parses");
        let model = ChoiceModel::build(&ast).expect("fixture grammar compiles");
        let catalog = (!scripts.is_empty())
            .then(|| Catalog::new(Arc::new(SqliteBackend::with_scripts(scripts).expect("fixture SQL runs"))));
        let spec = synthesize(&ast, catalog.as_ref(), &SynthOptions::default()).expect("fixture synthesizes");
        Setup { ast, model, spec, catalog }
    }

    pub fn drought() -> Setup {
        Setup::new(fixtures::DROUGHT, &[])
    }

    pub fn crossfilter() -> Setup {
        Setup::new(fixtures::CROSSFILTER, &[fixtures::FLIGHTS_SQL])
    }

    pub fn state(&self, assignments: serde_json::Value) -> BindingState {
        let map = assignments.as_object().expect("assignments are an object");
        BindingState::from_assignments(&self.model, map, self.catalog.as_ref()).expect("fixture state binds")
    }
}
