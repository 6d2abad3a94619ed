use std::collections::HashSet;
use std::sync::LazyLock;

use indexmap::IndexMap;
use regex::Regex;

use crate::binding::{bounds, finite_values, is_regex_site, listed_values, unroll, EnumerationError, UnrollError};
use crate::catalog::Catalog;
use crate::choice::{ChoiceModel, ChoiceVariable, DomainDescriptor, NodeId, NodeKind, QualifiedName, VariableKind};
use crate::error::{BackendError, ModelError};
use crate::syntax::{GrammarAst, ValueType};
use crate::value::Value;

use super::{
    AttrDomain, Attribute, InteractionDecl, InterfaceSpec, Layout, MappingDecl, OptionItem, ViewDecl, ViewType,
    WidgetType,
};

pub const MAX_RADIO_OPTIONS: usize = 4;
pub const MAX_DROPDOWN_OPTIONS: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RecursionStrategy {
    /// Recursive references get an add-instance button opening a nested
    /// copy of the interface.
    #[default]
    InstanceButton,
    /// Synthesize over the grammar unrolled to a fixed depth.
    Unroll(usize),
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SynthOptions {
    pub recursion: RecursionStrategy,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SynthError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Unroll(#[from] UnrollError),
    #[error("the domain of `{0}` must be listed from a database, but none is attached")]
    BackendUnavailable(String),
    #[error(transparent)]
    Backend(#[from] BackendError),
}

/// The console-style interface: a text input on each starting rule that has
/// anything to choose, and a table per starting rule.
pub fn synthesize_default(ast: &GrammarAst) -> Result<InterfaceSpec, ModelError> {
    let model = ChoiceModel::build(ast)?;
    let mut spec = InterfaceSpec::new();
    for (k, root) in model.grammar.roots().enumerate() {
        spec.views.push(ViewDecl {
            id: format!("v{}", k + 1),
            starting_rule: root.to_string(),
            view_type: ViewType::Table,
            background: None,
        });
        let varies = model.variables.iter().any(|v| v.qname.root_rule() == root)
            || model.recursive_sites.iter().any(|s| s.path.root_rule() == root);
        if varies {
            let id = format!("i{}", spec.interactions.len() + 1);
            push_text_input(&mut spec, id, root.to_string(), &QualifiedName::root(root));
        }
    }
    Ok(spec)
}

fn push_text_input(spec: &mut InterfaceSpec, id: String, label: String, target: &QualifiedName) {
    spec.interactions.push(InteractionDecl {
        id: id.clone(),
        widget_type: WidgetType::TextInput,
        label,
        domain: vec![Attribute {
            name: "text".into(),
            domain: AttrDomain::Text,
        }],
    });
    spec.mappings.push(MappingDecl {
        interaction_id: id,
        target: target.to_string(),
        attributes: [("text".to_string(), "text".to_string())].into_iter().collect(),
    });
}

/// Pick a widget for every choice variable and a view for every starting
/// rule. Query domains are listed through `catalog`.
pub fn synthesize(
    ast: &GrammarAst,
    catalog: Option<&Catalog>,
    options: &SynthOptions,
) -> Result<InterfaceSpec, SynthError> {
    let (model, depth) = match options.recursion {
        RecursionStrategy::Unroll(d) => (ChoiceModel::build(&unroll(ast, d)?)?, Some(d)),
        RecursionStrategy::InstanceButton => (ChoiceModel::build(ast)?, None),
    };
    let mut s = Synth {
        model: &model,
        catalog,
        spec: InterfaceSpec::new(),
        covered: HashSet::new(),
    };
    s.views();
    s.interactions()?;
    let mut spec = s.spec;
    spec.layout = Some(Layout {
        order: spec.interactions.iter().map(|i| i.id.clone()).collect(),
        unrolled_depth: depth,
    });
    Ok(spec)
}

/// How a single variable is offered when it is not under a text input.
enum Plan {
    Options(WidgetType, Vec<OptionItem>),
    Query(Vec<Value>, String),
    Range(WidgetType, Option<Value>, Option<Value>),
    Count(u32),
    Open,
}

struct Synth<'a> {
    model: &'a ChoiceModel,
    catalog: Option<&'a Catalog>,
    spec: InterfaceSpec,
    covered: HashSet<QualifiedName>,
}

impl Synth<'_> {
    fn next_id(&self) -> String {
        format!("i{}", self.spec.interactions.len() + 1)
    }

    fn views(&mut self) {
        let roots: Vec<&str> = self.model.grammar.roots().collect();
        for (k, root) in roots.iter().enumerate() {
            let rid = self.model.grammar.rule_id(root).unwrap();
            let mut sql = String::new();
            skeleton(self.model, self.model.grammar.rule(rid).body, &mut sql, 0);
            self.spec.views.push(ViewDecl {
                id: format!("v{}", k + 1),
                starting_rule: root.to_string(),
                view_type: view_type(&sql),
                background: None,
            });
        }
        // `<rule>_bg` renders under `<rule>`
        for k in 0..self.spec.views.len() {
            let rule = self.spec.views[k].starting_rule.clone();
            if let Some(fg) = rule.strip_suffix("_bg") {
                let bg_id = self.spec.views[k].id.clone();
                if let Some(v) = self.spec.views.iter_mut().find(|v| v.starting_rule == fg) {
                    v.background = Some(bg_id);
                }
            }
        }
    }

    fn interactions(&mut self) -> Result<(), SynthError> {
        let model = self.model;
        let mut plans: Vec<Plan> = Vec::with_capacity(model.variables.len());
        for cv in &model.variables {
            plans.push(self.plan(cv)?);
        }

        // open variables: one text input per enclosing term
        let mut terms: IndexMap<QualifiedName, ()> = IndexMap::new();
        for (cv, plan) in model.variables.iter().zip(&plans) {
            if matches!(plan, Plan::Open) && !self.under_term(&cv.qname, &terms) {
                let term = text_term(model, &cv.qname);
                terms.retain(|t, _| !term.is_prefix_of(t));
                terms.insert(term, ());
            }
        }
        let terms: Vec<QualifiedName> = terms.into_keys().collect();
        for cv in &model.variables {
            if terms.iter().any(|t| t.is_prefix_of(&cv.qname)) {
                self.covered.insert(cv.qname.clone());
            }
        }

        // classes paired by an order constraint become one range slider
        let mut partner: IndexMap<String, (String, bool)> = IndexMap::new();
        for (a, b) in model.ordered_pairs() {
            if partner.contains_key(&a) || partner.contains_key(&b) {
                continue;
            }
            let (Some(ia), Some(ib)) = (self.first_of(&a), self.first_of(&b)) else {
                continue;
            };
            let (va, vb) = (&model.variables[ia], &model.variables[ib]);
            if self.covered.contains(&va.qname) || self.covered.contains(&vb.qname) || va.domain != vb.domain {
                continue;
            }
            let pairable = matches!(&plans[ia], Plan::Range(..) | Plan::Query(..));
            if pairable {
                partner.insert(a.clone(), (b.clone(), true));
                partner.insert(b, (a, false));
            }
        }

        let mut text_emitted = HashSet::new();
        for (i, cv) in model.variables.iter().enumerate() {
            if let Some(t) = terms.iter().find(|t| t.is_prefix_of(&cv.qname)) {
                if text_emitted.insert(t.clone()) {
                    let id = self.next_id();
                    push_text_input(&mut self.spec, id, model.display(t), t);
                }
                continue;
            }
            if self.covered.contains(&cv.qname) {
                continue;
            }
            if let Some((other, is_lo)) = partner.get(&cv.class).cloned() {
                let (lo_class, hi_class) = if is_lo { (cv.class.clone(), other) } else { (other, cv.class.clone()) };
                self.range_slider(&plans[i], &lo_class, &hi_class);
                continue;
            }
            let members = self.members(cv);
            let label = members.iter().map(|m| model.display(m)).collect::<Vec<_>>().join(", ");
            let (widget, domain) = match &plans[i] {
                Plan::Options(w, opts) => (*w, AttrDomain::Options { options: opts.clone() }),
                Plan::Query(vals, q) => (
                    WidgetType::Dropdown,
                    AttrDomain::Query {
                        query: q.clone(),
                        options: vals.clone(),
                    },
                ),
                Plan::Range(w, lo, hi) => (*w, range(lo, hi)),
                Plan::Count(cap) => (WidgetType::ButtonAddInstance, AttrDomain::Count { max: Some(*cap) }),
                Plan::Open => unreachable!("open variables sit under a text input"),
            };
            let id = self.next_id();
            self.spec.interactions.push(InteractionDecl {
                id: id.clone(),
                widget_type: widget,
                label,
                domain: vec![Attribute {
                    name: "value".into(),
                    domain,
                }],
            });
            for m in members {
                self.map(&id, &m, "value");
            }
        }

        for site in &model.recursive_sites {
            if terms.iter().any(|t| t.is_prefix_of(&site.path)) {
                continue;
            }
            let id = self.next_id();
            self.spec.interactions.push(InteractionDecl {
                id: id.clone(),
                widget_type: WidgetType::ButtonAddInstance,
                label: format!("add {}", site.rule),
                domain: vec![Attribute {
                    name: "count".into(),
                    domain: AttrDomain::Count { max: None },
                }],
            });
            self.spec.mappings.push(MappingDecl {
                interaction_id: id,
                target: site.path.to_string(),
                attributes: [("count".to_string(), "instances".to_string())].into_iter().collect(),
            });
        }
        Ok(())
    }

    fn under_term(&self, q: &QualifiedName, terms: &IndexMap<QualifiedName, ()>) -> bool {
        terms.keys().any(|t| t.is_prefix_of(q))
    }

    fn first_of(&self, class: &str) -> Option<usize> {
        self.model.variables.iter().position(|v| v.class == class)
    }

    /// Variables sharing `cv`'s class and domain, so one widget serves all.
    fn members(&mut self, cv: &ChoiceVariable) -> Vec<QualifiedName> {
        let out: Vec<QualifiedName> = self
            .model
            .variables
            .iter()
            .filter(|v| v.class == cv.class && v.domain == cv.domain && !self.covered.contains(&v.qname))
            .map(|v| v.qname.clone())
            .collect();
        self.covered.extend(out.iter().cloned());
        out
    }

    fn class_members(&mut self, class: &str) -> Vec<QualifiedName> {
        let first = self.first_of(class).unwrap();
        let cv = self.model.variables[first].clone();
        self.members(&cv)
    }

    fn range_slider(&mut self, plan: &Plan, lo_class: &str, hi_class: &str) {
        let domain = match plan {
            Plan::Range(_, lo, hi) => range(lo, hi),
            Plan::Query(vals, q) => AttrDomain::Query {
                query: q.clone(),
                options: vals.clone(),
            },
            _ => unreachable!(),
        };
        let lo = self.class_members(lo_class);
        let hi = self.class_members(hi_class);
        let label = [&lo, &hi]
            .iter()
            .map(|ms| ms.first().map(|m| self.model.display(m)).unwrap_or_default())
            .collect::<Vec<_>>()
            .join(", ");
        let id = self.next_id();
        self.spec.interactions.push(InteractionDecl {
            id: id.clone(),
            widget_type: WidgetType::RangeSlider,
            label,
            domain: vec![
                Attribute {
                    name: "lo".into(),
                    domain: domain.clone(),
                },
                Attribute {
                    name: "hi".into(),
                    domain,
                },
            ],
        });
        for m in lo {
            self.map(&id, &m, "lo");
        }
        for m in hi {
            self.map(&id, &m, "hi");
        }
    }

    fn map(&mut self, id: &str, target: &QualifiedName, attr: &str) {
        self.spec.mappings.push(MappingDecl {
            interaction_id: id.to_string(),
            target: target.to_string(),
            attributes: [(attr.to_string(), "value".to_string())].into_iter().collect(),
        });
    }

    fn plan(&self, cv: &ChoiceVariable) -> Result<Plan, SynthError> {
        let model = self.model;
        Ok(match (&cv.kind, &cv.domain) {
            (VariableKind::Selection, _) => {
                let labels = model.alternative_labels(cv.node);
                let opts: Vec<OptionItem> = labels
                    .into_iter()
                    .enumerate()
                    .map(|(k, label)| OptionItem {
                        value: Value::Int(k as i64 + 1),
                        label,
                    })
                    .collect();
                let typed = matches!(cv.rule_tag, Some(ValueType::Rel | ValueType::Attr(_)));
                if opts.len() > MAX_DROPDOWN_OPTIONS {
                    Plan::Open
                } else if typed || opts.len() > MAX_RADIO_OPTIONS {
                    Plan::Options(WidgetType::Dropdown, opts)
                } else {
                    Plan::Options(WidgetType::Radio, opts)
                }
            }
            (_, DomainDescriptor::Naturals { cap: Some(cap) }) => Plan::Count(*cap),
            (_, DomainDescriptor::Naturals { cap: None }) => Plan::Open,
            (_, DomainDescriptor::QueryDom { query }) => {
                let catalog = self
                    .catalog
                    .ok_or_else(|| SynthError::BackendUnavailable(model.display(&cv.qname)))?;
                if catalog.domain_size(query)? > MAX_DROPDOWN_OPTIONS {
                    Plan::Open
                } else {
                    Plan::Query(catalog.domain_values(query)?.as_ref().clone(), query.clone())
                }
            }
            _ if is_regex_site(model, cv) => Plan::Open,
            (_, DomainDescriptor::PredicateDom { var, base, predicate }) => {
                let listed = predicate.as_ref().and_then(|p| listed_values(p, var));
                let b = predicate.as_ref().map(|p| bounds(p, var)).unwrap_or_default();
                match base {
                    _ if listed.is_some() => match finite_values(model, cv, None, self.catalog) {
                        Ok(vals) if vals.len() <= MAX_DROPDOWN_OPTIONS => Plan::Options(
                            WidgetType::Dropdown,
                            vals.into_iter()
                                .map(|v| OptionItem {
                                    label: v.to_string(),
                                    value: v,
                                })
                                .collect(),
                        ),
                        _ => Plan::Open,
                    },
                    ValueType::Int | ValueType::Float if b.is_finite() => {
                        Plan::Range(WidgetType::Slider, b.lo, b.hi)
                    }
                    ValueType::Date => Plan::Range(WidgetType::DatePicker, b.lo, b.hi),
                    ValueType::Rel => match finite_values(model, cv, None, self.catalog) {
                        Ok(vals) if vals.len() <= MAX_DROPDOWN_OPTIONS => Plan::Options(
                            WidgetType::Dropdown,
                            vals.into_iter()
                                .map(|v| OptionItem {
                                    label: v.to_string(),
                                    value: v,
                                })
                                .collect(),
                        ),
                        Ok(_) | Err(EnumerationError::BackendUnavailable(_)) => Plan::Open,
                        Err(EnumerationError::Backend(e)) => return Err(e.into()),
                        Err(_) => Plan::Open,
                    },
                    _ => Plan::Open,
                }
            }
            _ => Plan::Open,
        })
    }
}

fn range(lo: &Option<Value>, hi: &Option<Value>) -> AttrDomain {
    let step = match lo.as_ref().or(hi.as_ref()) {
        Some(Value::Int(_) | Value::Date(_)) => Some(Value::Int(1)),
        _ => None,
    };
    AttrDomain::Range {
        lo: lo.clone(),
        hi: hi.clone(),
        step,
    }
}

/// Nearest enclosing term whose rule body is a sequence, below the starting
/// rule and without a selection or star in between; else the variable.
fn text_term(model: &ChoiceModel, q: &QualifiedName) -> QualifiedName {
    let g = &model.grammar;
    let mut best = q.clone();
    let mut cur = q.parent();
    while let Some(p) = cur {
        if p.len() < 2 {
            break;
        }
        let Ok(r) = g.resolve(&p) else { break };
        match g.node(r.node).kind {
            NodeKind::Sel(_) | NodeKind::Star(_) => break,
            NodeKind::Seq(_) => {
                best = p;
                break;
            }
            _ => {}
        }
        cur = p.parent();
    }
    best
}

/// Literal text of a starting rule along first alternatives; choice points
/// render as `?`.
fn skeleton(model: &ChoiceModel, node: NodeId, out: &mut String, depth: usize) {
    if depth > 32 {
        return;
    }
    let g = &model.grammar;
    match &g.node(node).kind {
        NodeKind::Literal(t) => out.push_str(t),
        NodeKind::Seq(items) => items.iter().for_each(|&i| skeleton(model, i, out, depth + 1)),
        NodeKind::Sel(alts) => skeleton(model, alts[0], out, depth + 1),
        NodeKind::Ref { rule, .. } => skeleton(model, g.rule(*rule).body, out, depth + 1),
        NodeKind::Star(_) => {}
        _ => out.push('?'),
    }
}

static GROUP_BY: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?is)\bGROUP\s+BY\s+(.+?)\s*(?:\bORDER\b|\bHAVING\b|\bLIMIT\b|$)").unwrap());
static SELECT_LIST: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(?is)^\s*SELECT\s+(.*?)\s+FROM\b").unwrap());
static IDENT: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"^[A-Za-z_][A-Za-z0-9_]*$").unwrap());

/// One grouping column → bar chart; anything else → table.
fn view_type(sql: &str) -> ViewType {
    if let Some(c) = GROUP_BY.captures(sql) {
        return if c[1].contains(',') { ViewType::Table } else { ViewType::BarChart };
    }
    let Some(c) = SELECT_LIST.captures(sql) else {
        return ViewType::Table;
    };
    let items = split_top_level(&c[1]);
    let bare = items.iter().filter(|i| IDENT.is_match(i)).count();
    let aggregates = items.iter().filter(|i| i.contains('(')).count();
    let rest_ok = items
        .iter()
        .all(|i| IDENT.is_match(i) || i.contains('(') || *i == "...");
    if bare == 1 && aggregates >= 1 && rest_ok {
        ViewType::BarChart
    } else {
        ViewType::Table
    }
}

fn split_top_level(list: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let (mut depth, mut start) = (0i32, 0);
    for (i, ch) in list.char_indices() {
        match ch {
            '(' => depth += 1,
            ')' => depth -= 1,
            ',' if depth == 0 => {
                out.push(list[start..i].trim());
                start = i + 1;
            }
            _ => {}
        }
    }
    out.push(list[start..].trim());
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::interface::check_valid;
    use crate::syntax::parse_grammar;

    #[test]
    fn view_types() {
        assert_eq!(view_type("SELECT a, count(*) FROM t GROUP BY a"), ViewType::BarChart);
        assert_eq!(view_type("SELECT a, b, count(*) FROM t GROUP BY a, b"), ViewType::Table);
        assert_eq!(view_type("SELECT year, payout1(*), ... FROM ?"), ViewType::BarChart);
        assert_eq!(view_type("SELECT * FROM t"), ViewType::Table);
    }

    #[test]
    fn default_spec_for_crossfilter() {
        let ast = parse_grammar(fixtures::CROSSFILTER).unwrap();
        let spec = synthesize_default(&ast).unwrap();
        assert_eq!(spec.views.len(), 4);
        assert_eq!(spec.widget_count(WidgetType::TextInput), 2);
        assert!(check_valid(&spec, &ast).is_empty());
    }

    #[test]
    fn literal_grammar_needs_no_interactions() {
        let ast = parse_grammar("q = 'SELECT 1'").unwrap();
        let spec = synthesize_default(&ast).unwrap();
        assert!(spec.interactions.is_empty());
        assert!(check_valid(&spec, &ast).is_empty());
    }

    #[test]
    fn drought_interface() {
        let ast = parse_grammar(fixtures::DROUGHT).unwrap();
        let spec = synthesize(&ast, None, &SynthOptions::default()).unwrap();
        assert_eq!(spec.interactions.len(), 2);
        assert_eq!(spec.widget_count(WidgetType::Dropdown), 1);
        assert_eq!(spec.widget_count(WidgetType::RangeSlider), 1);
        assert_eq!(spec.views[0].view_type, ViewType::BarChart);
        assert!(check_valid(&spec, &ast).is_empty(), "{:?}", check_valid(&spec, &ast));
    }

    #[test]
    fn query_builder_interface() {
        let ast = parse_grammar(fixtures::QUERYBUILDER).unwrap();
        let spec = synthesize(&ast, None, &SynthOptions::default()).unwrap();
        let widgets: Vec<&str> = spec.interactions.iter().map(|i| i.widget_type.as_str()).collect();
        assert_eq!(widgets, ["radio", "text-input", "text-input", "button-add-instance", "text-input", "button-add-instance"]);
        assert!(check_valid(&spec, &ast).is_empty(), "{:?}", check_valid(&spec, &ast));

        let unrolled = SynthOptions { recursion: RecursionStrategy::Unroll(1) };
        let spec = synthesize(&ast, None, &unrolled).unwrap();
        assert_eq!(spec.layout.as_ref().unwrap().unrolled_depth, Some(1));
        assert!(check_valid(&spec, &unroll(&ast, 1).unwrap()).is_empty());
    }

    #[test]
    fn query_domains_need_a_database() {
        let ast = parse_grammar(fixtures::CROSSFILTER).unwrap();
        assert!(matches!(
            synthesize(&ast, None, &SynthOptions::default()),
            Err(SynthError::BackendUnavailable(_))
        ));
    }
}
