use std::collections::HashMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex, PoisonError, RwLock};

use indexmap::IndexMap;
use serde::Deserialize;
use serde_json::{json, Value as Json};

use dig_core::binding::{parse_input, reduce, unroll, BindingState, Effects, Provenance, RootReduction, Violation};
use dig_core::catalog::{Catalog, QueryResult};
use dig_core::interface::{synthesize, synthesize_default, InterfaceSpec, RecursionStrategy, SynthOptions};
use dig_core::tooling::{apply_interaction, payload_from_json, plan_tutorial, widget_states};
use dig_core::{parse_grammar, validate_grammar, ChoiceModel, GrammarAst, QualifiedName};

use crate::error::ApiError;
use crate::results::{RootResult, DEFAULT_ROW_CAP};

pub struct LoadedGrammar {
    pub id: String,
    pub source: String,
    pub ast: GrammarAst,
    pub model: Arc<ChoiceModel>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SynthMode {
    #[default]
    Synthesize,
    DefaultText,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Recursion {
    #[default]
    InstanceButton,
    Unroll(usize),
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default)]
pub struct SessionOptions {
    pub mode: SynthMode,
    pub recursion: Recursion,
}

/// Last reduction of a starting rule and, when it reduced, its rows.
struct RootEntry {
    reduction: RootReduction,
    rows: Option<Arc<QueryResult>>,
    error: Option<String>,
    /// Bumped on every execution; continuation tokens name it.
    generation: u64,
}

pub struct Session {
    pub id: String,
    pub grammar: Arc<LoadedGrammar>,
    pub model: Arc<ChoiceModel>,
    pub spec: InterfaceSpec,
    pub state: BindingState,
    roots: IndexMap<String, RootEntry>,
    generation: u64,
}

/// Outcome of a state-changing request.
pub struct Mutation {
    pub body: Json,
    pub violated: bool,
}

impl Session {
    fn new(
        id: String,
        grammar: Arc<LoadedGrammar>,
        options: &SessionOptions,
        catalog: Option<&Catalog>,
    ) -> Result<Session, ApiError> {
        let (model, spec) = match (options.mode, options.recursion) {
            (SynthMode::DefaultText, _) => (grammar.model.clone(), synthesize_default(&grammar.ast)?),
            (SynthMode::Synthesize, Recursion::InstanceButton) => {
                (grammar.model.clone(), synthesize(&grammar.ast, catalog, &SynthOptions::default())?)
            }
            (SynthMode::Synthesize, Recursion::Unroll(d)) => {
                let unrolled = unroll(&grammar.ast, d).map_err(|e| ApiError::BadRequest(e.to_string()))?;
                let opts = SynthOptions { recursion: RecursionStrategy::Unroll(d) };
                let spec = synthesize(&grammar.ast, catalog, &opts)?;
                (Arc::new(ChoiceModel::build(&unrolled)?), spec)
            }
        };
        Ok(Session {
            id,
            grammar,
            model,
            spec,
            state: BindingState::new(),
            roots: IndexMap::new(),
            generation: 0,
        })
    }

    pub fn interact(&mut self, id: &str, body: &Json, catalog: Option<&Catalog>, cap: usize) -> Result<Mutation, ApiError> {
        let decl = self
            .spec
            .interaction(id)
            .ok_or_else(|| ApiError::UnknownInteraction(id.to_string()))?;
        let payload = payload_from_json(decl, body)?;
        let out = apply_interaction(&self.model, &self.spec, &mut self.state, id, &payload, catalog)?;
        Ok(self.finish(out.effects, catalog, cap))
    }

    pub fn input(&mut self, target: &str, text: &str, catalog: Option<&Catalog>, cap: usize) -> Result<Mutation, ApiError> {
        let q = self.model.lookup(target)?;
        let out = parse_input(&self.model, &mut self.state, &q, text, catalog)?;
        Ok(self.finish(out.effects, catalog, cap))
    }

    pub fn unbind(&mut self, names: &[String], catalog: Option<&Catalog>, cap: usize) -> Result<Mutation, ApiError> {
        let qs = names
            .iter()
            .map(|n| self.model.lookup(n))
            .collect::<Result<Vec<_>, _>>()?;
        let mut next = self.state.clone();
        let mut effects = Effects::default();
        for q in &qs {
            let e = next.unbind(&self.model, q)?;
            effects.removed.extend(e.removed);
            effects.violations_cleared.extend(e.violations_cleared);
        }
        self.state = next;
        Ok(self.finish(effects, catalog, cap))
    }

    pub fn tutorial(&self, end: &Json, catalog: Option<&Catalog>) -> Result<Json, ApiError> {
        let map = end
            .as_object()
            .ok_or_else(|| ApiError::BadRequest("`end` must be an object of assignments".into()))?;
        let end = BindingState::from_assignments(&self.model, map, catalog)?;
        let steps = plan_tutorial(&self.model, &self.spec, &self.state, &end, catalog)?;
        Ok(json!({ "steps": steps }))
    }

    fn finish(&mut self, effects: Effects, catalog: Option<&Catalog>, cap: usize) -> Mutation {
        let violated = !effects.violations_added.is_empty();
        let results = self.refresh(catalog, cap);
        let body = json!({
            "delta": self.delta_json(&effects),
            "violations": self.violations_json(self.state.violations()),
            "results": results,
            "widgets": widget_states(&self.model, &self.spec, &self.state),
        });
        Mutation { body, violated }
    }

    /// Reduce every starting rule and execute those whose query changed.
    /// Returns the roots whose reduction changed.
    pub fn refresh(&mut self, catalog: Option<&Catalog>, cap: usize) -> IndexMap<String, RootResult> {
        let mut changed = IndexMap::new();
        for (root, reduction) in reduce(&self.model, &self.state).roots {
            if self.roots.get(&root).is_some_and(|e| e.reduction == reduction) {
                continue;
            }
            let mut entry = RootEntry {
                reduction,
                rows: None,
                error: None,
                generation: 0,
            };
            if let RootReduction::Query { sql } = &entry.reduction {
                self.generation += 1;
                entry.generation = self.generation;
                match catalog.map(|c| c.execute(sql)) {
                    Some(Ok(r)) => entry.rows = Some(Arc::new(r)),
                    Some(Err(e)) => entry.error = Some(e.to_string()),
                    None => entry.error = Some(dig_core::BackendError::Unavailable.to_string()),
                }
                tracing::debug!(session = %self.id, %root, %sql, "executed");
            }
            changed.insert(root.clone(), self.page(&entry, 0, cap));
            self.roots.insert(root, entry);
        }
        changed
    }

    fn page(&self, e: &RootEntry, offset: usize, cap: usize) -> RootResult {
        match &e.reduction {
            RootReduction::Query { sql } => match &e.rows {
                Some(r) => RootResult::page(sql, r, offset, cap, e.generation),
                None => RootResult::failed(sql, e.error.clone().unwrap_or_default()),
            },
            RootReduction::Incomplete { missing } => {
                RootResult::incomplete(missing.iter().map(|q| self.model.display(q)).collect())
            }
            RootReduction::Blocked { .. } => RootResult::blocked(),
        }
    }

    pub fn results(&self, cap: usize) -> IndexMap<String, RootResult> {
        self.roots.iter().map(|(r, e)| (r.clone(), self.page(e, 0, cap))).collect()
    }

    /// Continue a truncated result from a token handed out earlier.
    pub fn continue_result(&self, root: &str, token: &str, cap: usize) -> Result<RootResult, ApiError> {
        let e = self.roots.get(root).ok_or_else(|| ApiError::UnknownRoot(root.to_string()))?;
        let stale = || ApiError::StaleToken(token.to_string());
        let (generation, offset) = token.split_once('-').ok_or_else(stale)?;
        let generation: u64 = generation.parse().map_err(|_| stale())?;
        let offset: usize = offset.parse().map_err(|_| stale())?;
        if generation != e.generation || e.rows.is_none() {
            return Err(stale());
        }
        Ok(self.page(e, offset, cap))
    }

    pub fn state_json(&self, cap: usize) -> Json {
        let bindings: Vec<Json> = self
            .state
            .bindings()
            .map(|(q, b)| {
                let mut o = json!({
                    "name": self.model.display(q),
                    "value": b.value.to_plain_json(),
                    "provenance": provenance_name(&b.provenance),
                    "seq": b.seq,
                });
                if let Provenance::Propagated { from } = &b.provenance {
                    o["from"] = json!(self.model.display(from));
                }
                o
            })
            .collect();
        json!({
            "session_id": self.id,
            "grammar_id": self.grammar.id,
            "spec": self.spec,
            "bindings": bindings,
            "assignments": self.state.to_assignments(&self.model),
            "violations": self.violations_json(self.state.violations()),
            "results": self.results(cap),
            "widgets": widget_states(&self.model, &self.spec, &self.state),
        })
    }

    fn delta_json(&self, e: &Effects) -> Json {
        let pairs = |v: &[(QualifiedName, dig_core::Value)]| -> Vec<Json> {
            v.iter()
                .map(|(q, v)| json!({"name": self.model.display(q), "value": v.to_plain_json()}))
                .collect()
        };
        json!({
            "bound": pairs(&e.bound),
            "propagated": pairs(&e.propagated),
            "removed": e.removed.iter().map(|q| self.model.display(q)).collect::<Vec<_>>(),
            "violations_added": self.violations_json(&e.violations_added),
            "violations_cleared": self.violations_json(&e.violations_cleared),
        })
    }

    fn violations_json(&self, vs: &[Violation]) -> Json {
        vs.iter()
            .map(|v| {
                json!({
                    "kind": v.kind,
                    "constraint": v.constraint,
                    "involved": v.involved.iter().map(|q| self.model.display(q)).collect::<Vec<_>>(),
                    "message": v.message,
                })
            })
            .collect()
    }
}

fn provenance_name(p: &Provenance) -> &'static str {
    match p {
        Provenance::Direct => "direct",
        Provenance::Propagated { .. } => "propagated",
        Provenance::ParsedFromText => "parsed-from-text",
        Provenance::Default => "default",
    }
}

/// Shared server state: the grammar store, live sessions and the database.
#[derive(Clone)]
pub struct AppState {
    inner: Arc<Inner>,
}

struct Inner {
    grammars: RwLock<HashMap<String, Arc<LoadedGrammar>>>,
    sessions: RwLock<HashMap<String, Arc<Mutex<Session>>>>,
    catalog: Option<Arc<Catalog>>,
    row_cap: usize,
    next_id: AtomicU64,
}

impl AppState {
    pub fn new(catalog: Option<Catalog>) -> Self {
        Self::with_row_cap(catalog, DEFAULT_ROW_CAP)
    }

    pub fn with_row_cap(catalog: Option<Catalog>, row_cap: usize) -> Self {
        AppState {
            inner: Arc::new(Inner {
                grammars: RwLock::default(),
                sessions: RwLock::default(),
                catalog: catalog.map(Arc::new),
                row_cap: row_cap.max(1),
                next_id: AtomicU64::new(1),
            }),
        }
    }

    pub fn catalog(&self) -> Option<&Catalog> {
        self.inner.catalog.as_deref()
    }

    pub fn row_cap(&self) -> usize {
        self.inner.row_cap
    }

    fn fresh_id(&self, prefix: &str) -> String {
        format!("{prefix}{}", self.inner.next_id.fetch_add(1, Ordering::Relaxed))
    }

    pub fn load_grammar(&self, source: String) -> Result<Arc<LoadedGrammar>, ApiError> {
        let ast = parse_grammar(&source)?;
        let report = validate_grammar(&ast);
        if !report.is_empty() {
            return Err(ApiError::InvalidGrammar(report.findings));
        }
        let model = Arc::new(ChoiceModel::build(&ast)?);
        let g = Arc::new(LoadedGrammar {
            id: self.fresh_id("g"),
            source,
            ast,
            model,
        });
        self.inner
            .grammars
            .write()
            .unwrap_or_else(PoisonError::into_inner)
            .insert(g.id.clone(), g.clone());
        tracing::info!(grammar = %g.id, "grammar loaded");
        Ok(g)
    }

    pub fn grammar(&self, id: &str) -> Result<Arc<LoadedGrammar>, ApiError> {
        self.inner
            .grammars
            .read()
            .unwrap_or_else(PoisonError::into_inner)
            .get(id)
            .cloned()
            .ok_or_else(|| ApiError::UnknownGrammar(id.to_string()))
    }

    pub fn create_session(&self, grammar_id: &str, options: &SessionOptions) -> Result<Arc<Mutex<Session>>, ApiError> {
        let grammar = self.grammar(grammar_id)?;
        let mut s = Session::new(self.fresh_id("s"), grammar, options, self.catalog())?;
        // rules without choices are ready to run straight away
        s.refresh(self.catalog(), self.row_cap());
        let id = s.id.clone();
        let s = Arc::new(Mutex::new(s));
        self.inner
            .sessions
            .write()
            .unwrap_or_else(PoisonError::into_inner)
            .insert(id.clone(), s.clone());
        tracing::info!(session = %id, grammar = grammar_id, "session created");
        Ok(s)
    }

    pub fn session(&self, id: &str) -> Result<Arc<Mutex<Session>>, ApiError> {
        self.inner
            .sessions
            .read()
            .unwrap_or_else(PoisonError::into_inner)
            .get(id)
            .cloned()
            .ok_or_else(|| ApiError::UnknownSession(id.to_string()))
    }
}

pub fn lock(s: &Mutex<Session>) -> std::sync::MutexGuard<'_, Session> {
    s.lock().unwrap_or_else(PoisonError::into_inner)
}
