//! Simulated users: random interaction sequences over a synthesized
//! interface, with the queries each step produces.

use std::collections::BTreeMap;
use std::io::Write;

use chrono::{Duration, NaiveDate};
use indexmap::IndexMap;
use rand::distr::Distribution;
use rand::{Rng, RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp;
use serde::{Deserialize, Serialize};

use crate::binding::{reduce, BindingState};
use crate::catalog::Catalog;
use crate::choice::ChoiceModel;
use crate::interface::{mapping_targets, AttrDomain, InteractionDecl, InterfaceSpec, WidgetType};
use crate::value::Value;

use super::interact::{apply_interaction, payload_to_json, Payload};
use super::sample::{TermSampler, MAX_SAMPLE_INSTANCES};

/// Attempts at drawing an acceptable payload before giving up.
pub const MAX_PAYLOAD_ATTEMPTS: usize = 100;

fn default_think_time() -> f64 {
    1000.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum UserKind {
    /// Every interaction equally likely at every step.
    UniformRandom,
    /// Next interaction drawn from weights keyed by the previous one;
    /// interactions without a row fall back to uniform.
    Markov {
        transitions: IndexMap<String, IndexMap<String, f64>>,
        #[serde(default)]
        start: Option<String>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserModel {
    #[serde(flatten)]
    pub kind: UserKind,
    /// Mean of the exponential think time between events.
    #[serde(default = "default_think_time")]
    pub think_time_mean_ms: f64,
}

impl Default for UserModel {
    fn default() -> Self {
        UserModel {
            kind: UserKind::UniformRandom,
            think_time_mean_ms: default_think_time(),
        }
    }
}

impl UserModel {
    pub fn from_toml(text: &str) -> Result<UserModel, WorkloadError> {
        toml::from_str(text).map_err(|e| WorkloadError::UserModel(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<UserModel, WorkloadError> {
        serde_json::from_str(text).map_err(|e| WorkloadError::UserModel(e.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum WorkloadError {
    #[error("user model: {0}")]
    UserModel(String),
    #[error("user model names unknown interaction `{0}`")]
    UnknownInteraction(String),
    #[error("interface has no interactions")]
    NoInteractions,
    #[error("no acceptable payload for `{0}` after {MAX_PAYLOAD_ATTEMPTS} attempts")]
    DomainSamplingFailure(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmittedQuery {
    pub root: String,
    pub sql: String,
}

/// One line of a workload trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkloadEvent {
    pub t_offset_ms: u64,
    pub interaction: String,
    pub delta: serde_json::Value,
    /// Roots whose query changed with this event.
    pub queries: Vec<EmittedQuery>,
}

pub fn write_jsonl<W: Write>(events: &[WorkloadEvent], mut w: W) -> std::io::Result<()> {
    for e in events {
        serde_json::to_writer(&mut w, e)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

/// Simulate `n` events. The same seed always yields the same trace.
pub fn generate_workload(
    model: &ChoiceModel,
    spec: &InterfaceSpec,
    user: &UserModel,
    n: usize,
    seed: u64,
    catalog: Option<&Catalog>,
) -> Result<Vec<WorkloadEvent>, WorkloadError> {
    if spec.interactions.is_empty() {
        return Err(WorkloadError::NoInteractions);
    }
    if let UserKind::Markov { transitions, start } = &user.kind {
        let names = transitions.iter().flat_map(|(k, row)| std::iter::once(k).chain(row.keys())).chain(start);
        for id in names {
            if spec.interaction(id).is_none() {
                return Err(WorkloadError::UnknownInteraction(id.clone()));
            }
        }
    }
    let think = Exp::new(1.0 / user.think_time_mean_ms.max(1e-3)).map_err(|e| WorkloadError::UserModel(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sampler = TermSampler::new(model, catalog);
    let mut state = BindingState::new();
    let mut last: BTreeMap<String, Option<String>> = BTreeMap::new();
    let mut prev: Option<String> = None;
    let mut clock = 0f64;
    let mut out = Vec::with_capacity(n);

    for _ in 0..n {
        let decl = next_interaction(spec, &user.kind, prev.as_deref(), &mut rng);
        let mut applied = None;
        for _ in 0..MAX_PAYLOAD_ATTEMPTS {
            let Some(payload) = sample_payload(model, spec, decl, &mut sampler, &mut rng) else { continue };
            let mut next = state.clone();
            if apply_interaction(model, spec, &mut next, &decl.id, &payload, catalog).is_ok() {
                state = next;
                applied = Some(payload);
                break;
            }
        }
        let payload = applied.ok_or_else(|| WorkloadError::DomainSamplingFailure(decl.id.clone()))?;

        clock += think.sample(&mut rng);
        let mut queries = Vec::new();
        for (root, r) in reduce(model, &state).roots {
            let sql = r.sql().map(str::to_string);
            if last.get(&root) != Some(&sql) {
                if let Some(sql) = &sql {
                    queries.push(EmittedQuery {
                        root: root.clone(),
                        sql: sql.clone(),
                    });
                }
                last.insert(root, sql);
            }
        }
        out.push(WorkloadEvent {
            t_offset_ms: clock.round() as u64,
            interaction: decl.id.clone(),
            delta: payload_to_json(&payload),
            queries,
        });
        prev = Some(decl.id.clone());
    }
    Ok(out)
}

fn next_interaction<'s, R: Rng + ?Sized>(
    spec: &'s InterfaceSpec,
    kind: &UserKind,
    prev: Option<&str>,
    rng: &mut R,
) -> &'s InteractionDecl {
    let uniform = |rng: &mut R| &spec.interactions[rng.random_range(0..spec.interactions.len())];
    let UserKind::Markov { transitions, start } = kind else {
        return uniform(rng);
    };
    let from = match prev {
        None => match start {
            Some(s) => return spec.interaction(s).unwrap(),
            None => return uniform(rng),
        },
        Some(p) => p,
    };
    let Some(row) = transitions.get(from) else { return uniform(rng) };
    let total: f64 = row.values().filter(|w| **w > 0.0).sum();
    if total <= 0.0 {
        return uniform(rng);
    }
    let mut x = rng.random::<f64>() * total;
    for (id, w) in row {
        if *w <= 0.0 {
            continue;
        }
        if x < *w {
            return spec.interaction(id).unwrap();
        }
        x -= w;
    }
    spec.interaction(row.keys().last().unwrap()).unwrap()
}

/// A random payload within the interaction's declared domains.
pub fn sample_payload<R: Rng + ?Sized>(
    model: &ChoiceModel,
    spec: &InterfaceSpec,
    decl: &InteractionDecl,
    sampler: &mut TermSampler,
    rng: &mut R,
) -> Option<Payload> {
    let mut payload = Payload::new();
    let templated = spec
        .mappings_of(&decl.id)
        .filter_map(|m| mapping_targets(model, m))
        .any(|t| t.is_template());
    let instance = templated.then(|| rng.random_range(1..=MAX_SAMPLE_INSTANCES as i64));

    if decl.widget_type == WidgetType::TextInput {
        let m = spec.mappings_of(&decl.id).next()?;
        let target = mapping_targets(model, m)?;
        let concrete = match instance {
            Some(n) => crate::choice::QualifiedName::new(
                target
                    .segments()
                    .iter()
                    .map(|s| if s == crate::choice::INSTANCE_WILDCARD { n.to_string() } else { s.clone() })
                    .collect(),
            ),
            None => target,
        };
        let text = sampler.sample_at(&concrete, rng).ok()?;
        payload.insert("text".into(), Value::Str(text));
    } else {
        for a in &decl.domain {
            let v = match &a.domain {
                AttrDomain::Options { options } if !options.is_empty() => {
                    options[rng.random_range(0..options.len())].value.clone()
                }
                AttrDomain::Query { options, .. } if !options.is_empty() => {
                    options[rng.random_range(0..options.len())].clone()
                }
                AttrDomain::Range { lo, hi, .. } => sample_range(lo.as_ref(), hi.as_ref(), rng)?,
                AttrDomain::Count { max } => {
                    if decl.widget_type == WidgetType::ButtonAddInstance && max.is_none() {
                        Value::Int(1)
                    } else {
                        Value::Int(rng.random_range(0..=max.unwrap_or(MAX_SAMPLE_INSTANCES).min(MAX_SAMPLE_INSTANCES)) as i64)
                    }
                }
                AttrDomain::Boolean => Value::Bool(rng.random_bool(0.5)),
                _ => return None,
            };
            payload.insert(a.name.clone(), v);
        }
        // a range slider's handles never cross
        if decl.widget_type == WidgetType::RangeSlider && decl.domain.len() == 2 {
            let (a, b) = (&decl.domain[0].name, &decl.domain[1].name);
            let (x, y) = (payload[a].clone(), payload[b].clone());
            if crate::binding::compare(&x, &y) == Some(std::cmp::Ordering::Greater) {
                payload.insert(a.clone(), y);
                payload.insert(b.clone(), x);
            }
        }
    }
    if let Some(n) = instance {
        payload.insert("instance".into(), Value::Int(n));
    }
    Some(payload)
}

fn sample_range<R: Rng + ?Sized>(lo: Option<&Value>, hi: Option<&Value>, rng: &mut R) -> Option<Value> {
    match (lo, hi) {
        (Some(Value::Date(_)), _) | (_, Some(Value::Date(_))) => {
            let l = lo.and_then(Value::as_date).unwrap_or_else(|| NaiveDate::from_ymd_opt(2000, 1, 1).unwrap());
            let h = hi.and_then(Value::as_date).unwrap_or(l + Duration::days(3650));
            let span = (h - l).num_days();
            (span >= 0).then(|| Value::Date(l + Duration::days(rng.random_range(0..=span))))
        }
        (Some(Value::Float(_)), _) | (_, Some(Value::Float(_))) => {
            let l = lo.and_then(Value::as_f64).unwrap_or(0.0);
            let h = hi.and_then(Value::as_f64).unwrap_or(l + 100.0);
            (l <= h).then(|| Value::Float(((l + (h - l) * rng.random::<f64>()) * 100.0).round() / 100.0))
        }
        _ => {
            let l = lo.and_then(Value::as_int).unwrap_or(0);
            let h = hi.and_then(Value::as_int).unwrap_or(l + 100);
            (l <= h).then(|| Value::Int(rng.random_range(l..=h)))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::interface::{synthesize, SynthOptions};
    use crate::syntax::parse_grammar;

    #[test]
    fn deterministic_per_seed() {
        let ast = parse_grammar(fixtures::DROUGHT).unwrap();
        let m = ChoiceModel::build(&ast).unwrap();
        let spec = synthesize(&ast, None, &SynthOptions::default()).unwrap();
        let a = generate_workload(&m, &spec, &UserModel::default(), 200, 3, None).unwrap();
        let b = generate_workload(&m, &spec, &UserModel::default(), 200, 3, None).unwrap();
        let c = generate_workload(&m, &spec, &UserModel::default(), 200, 4, None).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert!(a.windows(2).all(|w| w[0].t_offset_ms <= w[1].t_offset_ms));
        assert!(a.iter().any(|e| !e.queries.is_empty()));
    }

    #[test]
    fn markov_model_from_toml() {
        let u = UserModel::from_toml(
            "kind = \"markov\"\nthink_time_mean_ms = 250.0\n[transitions.i1]\ni2 = 1.0\n[transitions.i2]\ni1 = 1.0\n",
        )
        .unwrap();
        let ast = parse_grammar(fixtures::DROUGHT).unwrap();
        let m = ChoiceModel::build(&ast).unwrap();
        let spec = synthesize(&ast, None, &SynthOptions::default()).unwrap();
        let ev = generate_workload(&m, &spec, &u, 20, 1, None).unwrap();
        for w in ev.windows(2) {
            assert_ne!(w[0].interaction, w[1].interaction);
        }
        let bad = UserModel::from_toml("kind = \"markov\"\n[transitions.nope]\ni1 = 1.0\n").unwrap();
        assert_eq!(
            generate_workload(&m, &spec, &bad, 1, 1, None),
            Err(WorkloadError::UnknownInteraction("nope".into()))
        );
    }
}
