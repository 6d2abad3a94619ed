use std::cmp::Ordering;
use std::collections::HashSet;

use serde::Serialize;

use crate::binding::{bounds, compare, finite_values, loose_eq};
use crate::choice::{ChoiceModel, ChoiceVariable, DomainDescriptor, QualifiedName};
use crate::syntax::{GrammarAst, ValueType};
use crate::value::Value;

use super::{AttrDomain, InteractionDecl, InterfaceSpec, MappingDecl, WidgetType};

/// Something wrong with the spec itself, independent of coverage.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SpecProblem {
    UnknownStartingRule { view: String, rule: String },
    UnknownInteraction { interaction: String },
    UnknownTarget { interaction: String, target: String },
    UnknownAttribute { interaction: String, attribute: String },
    NonInjectiveMapping { interaction: String, target: String },
    EmptyDomain { interaction: String },
    MalformedRangeSlider { interaction: String },
    DuplicateId { id: String },
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct ValidityReport {
    /// Choice variables (and recursive references) no interaction covers.
    pub uncovered: Vec<String>,
    /// Starting rules no view renders.
    pub unrendered: Vec<String>,
    pub problems: Vec<SpecProblem>,
}

impl ValidityReport {
    pub fn is_empty(&self) -> bool {
        self.uncovered.is_empty() && self.unrendered.is_empty() && self.problems.is_empty()
    }
}

/// Targets of a mapping, resolved against the model. A target may be written
/// with or without the starting rule.
pub fn mapping_targets(model: &ChoiceModel, mapping: &MappingDecl) -> Option<QualifiedName> {
    let q = model.lookup(&mapping.target).ok()?;
    model.grammar.resolve(&q).ok().map(|_| q)
}

/// Whether `interaction` through `mapping` covers the choice variable: a text
/// input covers everything under the term it is mapped to; other widgets
/// cover a variable whose domain the projected interaction domain contains.
pub fn covers(model: &ChoiceModel, interaction: &InteractionDecl, mapping: &MappingDecl, cv: &ChoiceVariable) -> bool {
    if mapping.interaction_id != interaction.id {
        return false;
    }
    let Some(target) = mapping_targets(model, mapping) else {
        return false;
    };
    if interaction.widget_type == WidgetType::TextInput {
        return target.is_prefix_of(&cv.qname)
            && mapping
                .attributes
                .get_index(0)
                .and_then(|(a, _)| interaction.attribute(a))
                .is_some_and(|a| a.domain == AttrDomain::Text);
    }
    if target != cv.qname {
        return false;
    }
    // the variable has one attribute, `value`; it must be mapped
    let Some((attr, _)) = mapping.attributes.iter().find(|(_, to)| to.as_str() == "value") else {
        return false;
    };
    interaction
        .attribute(attr)
        .is_some_and(|a| domain_contains(model, &a.domain, cv))
}

fn within(v: &Value, lo: Option<&Value>, hi: Option<&Value>) -> bool {
    lo.is_none_or(|lo| matches!(compare(lo, v), Some(Ordering::Less | Ordering::Equal)))
        && hi.is_none_or(|hi| matches!(compare(v, hi), Some(Ordering::Less | Ordering::Equal)))
}

fn domain_contains(model: &ChoiceModel, dom: &AttrDomain, cv: &ChoiceVariable) -> bool {
    match (dom, &cv.domain) {
        (AttrDomain::Text, _) => true,
        (AttrDomain::Options { options }, DomainDescriptor::EnumeratedInts { lo, hi }) => {
            (*lo..=*hi).all(|k| options.iter().any(|o| loose_eq(&o.value, &Value::Int(k))))
        }
        (AttrDomain::Options { options }, DomainDescriptor::PredicateDom { .. }) => {
            match finite_values(model, cv, None, None) {
                Ok(vals) => vals
                    .iter()
                    .all(|v| options.iter().any(|o| loose_eq(&o.value, v))),
                Err(_) => false,
            }
        }
        (AttrDomain::Query { query, .. }, DomainDescriptor::QueryDom { query: q }) => query == q,
        (AttrDomain::Range { lo, hi, .. }, DomainDescriptor::EnumeratedInts { lo: a, hi: b }) => {
            within(&Value::Int(*a), lo.as_ref(), hi.as_ref())
                && within(&Value::Int(*b), lo.as_ref(), hi.as_ref())
        }
        (AttrDomain::Range { lo, hi, .. }, DomainDescriptor::PredicateDom { var, base, predicate }) => {
            if !(base.is_numeric() || *base == ValueType::Date) {
                return false;
            }
            let b = predicate.as_ref().map(|p| bounds(p, var)).unwrap_or_default();
            let end_ok = |range_end: &Option<Value>, var_end: &Option<Value>| match (range_end, var_end) {
                (None, _) => true,
                (Some(_), None) => false,
                (Some(_), Some(v)) => within(v, lo.as_ref(), hi.as_ref()),
            };
            end_ok(lo, &b.lo) && end_ok(hi, &b.hi)
        }
        (AttrDomain::Count { max }, DomainDescriptor::Naturals { cap }) => match (max, cap) {
            (None, _) => true,
            (Some(m), Some(c)) => m >= c,
            (Some(_), None) => false,
        },
        (AttrDomain::Boolean, DomainDescriptor::EnumeratedInts { lo: 1, hi: 2 }) => true,
        _ => false,
    }
}

/// Check that every choice variable is covered and every starting rule is
/// rendered. An empty report means the interface is valid.
pub fn check_valid(spec: &InterfaceSpec, ast: &GrammarAst) -> ValidityReport {
    match ChoiceModel::build(ast) {
        Ok(model) => check_valid_model(spec, &model),
        Err(e) => ValidityReport {
            problems: vec![SpecProblem::UnknownTarget {
                interaction: String::new(),
                target: e.to_string(),
            }],
            ..Default::default()
        },
    }
}

pub(crate) fn check_valid_model(spec: &InterfaceSpec, model: &ChoiceModel) -> ValidityReport {
    let mut report = ValidityReport::default();
    let mut ids = HashSet::new();
    for id in spec.interactions.iter().map(|i| &i.id).chain(spec.views.iter().map(|v| &v.id)) {
        if !ids.insert(id.as_str()) {
            report.problems.push(SpecProblem::DuplicateId { id: id.clone() });
        }
    }

    let roots: Vec<&str> = model.grammar.roots().collect();
    for v in &spec.views {
        if !roots.contains(&v.starting_rule.as_str()) {
            report.problems.push(SpecProblem::UnknownStartingRule {
                view: v.id.clone(),
                rule: v.starting_rule.clone(),
            });
        }
    }
    for r in &roots {
        if !spec.views.iter().any(|v| v.starting_rule == *r) {
            report.unrendered.push(r.to_string());
        }
    }

    for i in &spec.interactions {
        if i.domain.is_empty() {
            report.problems.push(SpecProblem::EmptyDomain { interaction: i.id.clone() });
        }
        if i.widget_type == WidgetType::RangeSlider
            && (i.domain.len() != 2 || i.domain[0].domain != i.domain[1].domain)
        {
            report.problems.push(SpecProblem::MalformedRangeSlider { interaction: i.id.clone() });
        }
    }
    let mut seen_targets = HashSet::new();
    for m in &spec.mappings {
        let Some(i) = spec.interaction(&m.interaction_id) else {
            report.problems.push(SpecProblem::UnknownInteraction {
                interaction: m.interaction_id.clone(),
            });
            continue;
        };
        if mapping_targets(model, m).is_none() {
            report.problems.push(SpecProblem::UnknownTarget {
                interaction: m.interaction_id.clone(),
                target: m.target.clone(),
            });
        }
        for a in m.attributes.keys() {
            if i.attribute(a).is_none() {
                report.problems.push(SpecProblem::UnknownAttribute {
                    interaction: i.id.clone(),
                    attribute: a.clone(),
                });
            }
        }
        let distinct: HashSet<&String> = m.attributes.values().collect();
        if distinct.len() != m.attributes.len() || !seen_targets.insert((&m.interaction_id, &m.target)) {
            report.problems.push(SpecProblem::NonInjectiveMapping {
                interaction: i.id.clone(),
                target: m.target.clone(),
            });
        }
    }

    let covered = |cv: &ChoiceVariable| {
        spec.mappings.iter().any(|m| {
            spec.interaction(&m.interaction_id)
                .is_some_and(|i| covers(model, i, m, cv))
        })
    };
    for cv in &model.variables {
        if !covered(cv) {
            report.uncovered.push(model.display(&cv.qname));
        }
    }
    for site in &model.recursive_sites {
        let ok = spec.mappings.iter().any(|m| {
            let Some(i) = spec.interaction(&m.interaction_id) else {
                return false;
            };
            let Some(target) = mapping_targets(model, m) else {
                return false;
            };
            match i.widget_type {
                WidgetType::TextInput => target.is_prefix_of(&site.path),
                WidgetType::ButtonAddInstance => target == site.path,
                _ => false,
            }
        });
        if !ok {
            report.uncovered.push(model.display(&site.path));
        }
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::interface::{Attribute, OptionItem, ViewDecl, ViewType};
    use crate::syntax::parse_grammar;

    fn mapping(id: &str, target: &str, from: &str) -> MappingDecl {
        MappingDecl {
            interaction_id: id.into(),
            target: target.into(),
            attributes: [(from.to_string(), "value".to_string())].into_iter().collect(),
        }
    }

    fn drought_spec(options: &[i64]) -> InterfaceSpec {
        let range = AttrDomain::Range {
            lo: Some(Value::Int(1)),
            hi: Some(Value::Int(36)),
            step: Some(Value::Int(1)),
        };
        InterfaceSpec {
            views: vec![ViewDecl {
                id: "v1".into(),
                starting_rule: "q".into(),
                view_type: ViewType::BarChart,
                background: None,
            }],
            interactions: vec![
                InteractionDecl {
                    id: "table".into(),
                    widget_type: WidgetType::Dropdown,
                    label: "t".into(),
                    domain: vec![Attribute {
                        name: "value".into(),
                        domain: AttrDomain::Options {
                            options: options
                                .iter()
                                .map(|&k| OptionItem { value: Value::Int(k), label: k.to_string() })
                                .collect(),
                        },
                    }],
                },
                InteractionDecl {
                    id: "period".into(),
                    widget_type: WidgetType::RangeSlider,
                    label: "s, e".into(),
                    domain: vec![
                        Attribute { name: "lo".into(), domain: range.clone() },
                        Attribute { name: "hi".into(), domain: range },
                    ],
                },
            ],
            mappings: vec![
                mapping("table", "t", "value"),
                mapping("period", "s", "lo"),
                mapping("period", "e", "hi"),
            ],
            ..InterfaceSpec::new()
        }
    }

    #[test]
    fn hand_written_drought_interface() {
        let ast = parse_grammar(fixtures::DROUGHT).unwrap();
        assert!(check_valid(&drought_spec(&[1, 2]), &ast).is_empty());

        let partial = check_valid(&drought_spec(&[1]), &ast);
        assert_eq!(partial.uncovered, ["t"]);

        let mut no_dropdown = drought_spec(&[1, 2]);
        no_dropdown.interactions.remove(0);
        no_dropdown.mappings.remove(0);
        assert_eq!(check_valid(&no_dropdown, &ast).uncovered, ["t"]);

        let mut no_view = drought_spec(&[1, 2]);
        no_view.views.clear();
        assert_eq!(check_valid(&no_view, &ast).unrendered, ["q"]);
    }

    #[test]
    fn narrow_slider_does_not_cover() {
        let ast = parse_grammar(fixtures::DROUGHT).unwrap();
        let mut spec = drought_spec(&[1, 2]);
        for a in &mut spec.interactions[1].domain {
            a.domain = AttrDomain::Range { lo: Some(Value::Int(2)), hi: Some(Value::Int(36)), step: None };
        }
        assert_eq!(check_valid(&spec, &ast).uncovered, ["s", "e"]);
    }

    #[test]
    fn spec_json_roundtrip() {
        let spec = drought_spec(&[1, 2]);
        let json = spec.to_json();
        assert!(json.contains("\"widget_type\": \"range-slider\""));
        assert_eq!(InterfaceSpec::from_json(&json).unwrap(), spec);
    }
}
