use std::collections::{BTreeSet, HashMap};

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use super::grammar::{Grammar, NodeId, NodeKind};
use super::name::{QualifiedName, INSTANCE_WILDCARD};
use crate::error::ModelError;
use crate::syntax::{format_expr, BinOp, Cond, GrammarAst, ValueType};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum VariableKind {
    Selection,
    Star,
    PredicateDomain,
    QueryDomain,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum DomainDescriptor {
    EnumeratedInts { lo: i64, hi: i64 },
    PredicateDom {
        var: String,
        base: ValueType,
        predicate: Option<Cond>,
    },
    QueryDom { query: String },
    Naturals { cap: Option<u32> },
}

#[derive(Debug, Clone, Serialize)]
pub struct ChoiceVariable {
    pub qname: QualifiedName,
    pub kind: VariableKind,
    pub domain: DomainDescriptor,
    /// Rule whose body contains the site.
    pub rule: String,
    /// Type tag of that rule when the site is the whole rule body.
    pub rule_tag: Option<ValueType>,
    /// Equality class key.
    pub class: String,
    #[serde(skip)]
    pub node: NodeId,
}

/// A reference that re-enters a rule already on the path.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RecursiveSite {
    /// Path up to and including the recursive reference.
    pub path: QualifiedName,
    pub rule: String,
    #[serde(skip)]
    pub node: NodeId,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResolvedConstraint {
    pub cond: Cond,
    /// Class key for each distinct variable path appearing in `cond`,
    /// keyed by the path as written.
    pub vars: Vec<(Vec<String>, String)>,
}

impl ResolvedConstraint {
    pub fn class_of(&self, path: &[String]) -> Option<&str> {
        self.vars
            .iter()
            .find(|(p, _)| p.as_slice() == path)
            .map(|(_, c)| c.as_str())
    }

    pub fn classes(&self) -> impl Iterator<Item = &str> {
        self.vars.iter().map(|(_, c)| c.as_str())
    }
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct ConstraintGraph {
    /// Class key → member variables (template names). Only classes with more
    /// than one member are listed.
    pub equality_classes: IndexMap<String, Vec<QualifiedName>>,
    pub constraints: Vec<ResolvedConstraint>,
}

/// Equality class key of a concrete or template name: everything from the
/// first annotated segment on. Names without annotations are their own class.
pub fn class_key(qname: &QualifiedName, annotated: &[bool]) -> String {
    match annotated.iter().position(|&a| a) {
        Some(i) => qname.segments()[i + 1..].join("/"),
        None => format!("{qname}#"),
    }
}

/// Everything derived from a grammar that the rest of the engine needs.
#[derive(Debug, Clone)]
pub struct ChoiceModel {
    pub grammar: Grammar,
    pub variables: Vec<ChoiceVariable>,
    pub recursive_sites: Vec<RecursiveSite>,
    pub graph: ConstraintGraph,
    index: HashMap<QualifiedName, usize>,
}

impl ChoiceModel {
    /// Build the model; recursive references are recorded rather than
    /// expanded.
    pub fn build(ast: &GrammarAst) -> Result<ChoiceModel, ModelError> {
        let grammar = Grammar::compile(ast)?;
        Self::from_grammar(grammar)
    }

    pub fn from_grammar(grammar: Grammar) -> Result<ChoiceModel, ModelError> {
        let (variables, recursive_sites) = walk(&grammar);
        let index = variables
            .iter()
            .enumerate()
            .map(|(i, v)| (v.qname.clone(), i))
            .collect();
        let mut model = ChoiceModel {
            grammar,
            variables,
            recursive_sites,
            graph: ConstraintGraph::default(),
            index,
        };
        model.graph = model.build_graph()?;
        Ok(model)
    }

    pub fn ast(&self) -> &GrammarAst {
        self.grammar.ast()
    }

    pub fn is_recursive(&self) -> bool {
        !self.recursive_sites.is_empty()
    }

    pub fn variable(&self, qname: &QualifiedName) -> Option<&ChoiceVariable> {
        self.index.get(qname).map(|&i| &self.variables[i])
    }

    /// Static description of any concrete variable, including instances and
    /// names below recursive references.
    pub fn variable_at(&self, qname: &QualifiedName) -> Result<ChoiceVariable, ModelError> {
        if let Some(v) = self.variable(qname) {
            return Ok(v.clone());
        }
        let resolved = self.grammar.resolve(qname)?;
        describe(&self.grammar, qname.clone(), resolved.node, &resolved.annotated)
            .ok_or_else(|| ModelError::UnknownVariable(qname.to_string()))
    }

    /// Equality class of a concrete name.
    pub fn class_of(&self, qname: &QualifiedName) -> Result<String, ModelError> {
        let resolved = self.grammar.resolve(qname)?;
        Ok(class_key(qname, &resolved.annotated))
    }

    pub fn display(&self, qname: &QualifiedName) -> String {
        self.grammar.display(qname)
    }

    pub fn lookup(&self, text: &str) -> Result<QualifiedName, ModelError> {
        self.grammar.lookup(text)
    }

    /// Human-readable labels for the alternatives of a selection site.
    pub fn alternative_labels(&self, node: NodeId) -> Vec<String> {
        match &self.grammar.node(node).kind {
            NodeKind::Sel(alts) => alts
                .iter()
                .map(|&a| match &self.grammar.node(a).kind {
                    NodeKind::Literal(t) => t.clone(),
                    NodeKind::Ref { rule, .. } => self.grammar.rule(*rule).name.clone(),
                    _ => {
                        let ast_rule = &self.ast().rules[self.grammar.node(a).rule];
                        format_expr(sub_expr(&ast_rule.body, &self.grammar.node(a).loc))
                    }
                })
                .collect(),
            _ => Vec::new(),
        }
    }

    /// Which alternative of the selection at `ancestor` contains the
    /// variable `descendant` (0-based), if `descendant` lies under it.
    pub fn alternative_containing(
        &self,
        ancestor: &QualifiedName,
        descendant: &QualifiedName,
    ) -> Option<usize> {
        if !ancestor.is_prefix_of(descendant) || ancestor.len() >= descendant.len() {
            return None;
        }
        let scope = self.grammar.resolve(ancestor).ok()?.node;
        let NodeKind::Sel(alts) = &self.grammar.node(scope).kind else {
            return None;
        };
        let seg = &descendant.segments()[ancestor.len()];
        let entry = self
            .grammar
            .scope_entries(scope)
            .into_iter()
            .find(|&e| self.grammar.node(e).segment.as_deref() == Some(seg.as_str()))?;
        let entry_loc = &self.grammar.node(entry).loc;
        alts.iter()
            .position(|&a| entry_loc.starts_with(&self.grammar.node(a).loc))
    }

    /// Selection and star variables whose choice decides whether `qname`
    /// is reached, nearest first.
    pub fn ancestors(&self, qname: &QualifiedName) -> Vec<QualifiedName> {
        qname
            .ancestors()
            .filter(|a| {
                self.grammar
                    .resolve(a)
                    .map(|r| {
                        matches!(
                            self.grammar.node(r.node).kind,
                            NodeKind::Sel(_) | NodeKind::Star(_)
                        )
                    })
                    .unwrap_or(false)
            })
            .collect()
    }

    /// Immediate-parent edges (ancestor, descendant) of the dependency
    /// forest over the static variables.
    pub fn dependency_order(&self) -> Vec<(QualifiedName, QualifiedName)> {
        let mut edges = Vec::new();
        for v in &self.variables {
            if let Some(parent) = self.ancestors(&v.qname).into_iter().next() {
                edges.push((parent, v.qname.clone()));
            }
        }
        edges
    }

    fn build_graph(&self) -> Result<ConstraintGraph, ModelError> {
        let mut classes: IndexMap<String, Vec<QualifiedName>> = IndexMap::new();
        for v in &self.variables {
            classes.entry(v.class.clone()).or_default().push(v.qname.clone());
        }
        classes.retain(|_, members| members.len() > 1);

        let mut constraints = Vec::new();
        for cond in &self.ast().constraints {
            let mut vars: Vec<(Vec<String>, String)> = Vec::new();
            for path in cond.variables() {
                if vars.iter().any(|(p, _)| p.as_slice() == path) {
                    continue;
                }
                let keys: BTreeSet<&str> = self
                    .variables
                    .iter()
                    .filter(|v| v.qname.ends_with(path))
                    .map(|v| v.class.as_str())
                    .collect();
                let shown = path.join("/");
                match keys.len() {
                    0 => return Err(ModelError::UnresolvedConstraintVariable(shown)),
                    1 => vars.push((path.to_vec(), keys.into_iter().next().unwrap().to_string())),
                    _ => {
                        return Err(ModelError::AmbiguousConstraintVariable {
                            path: shown,
                            candidates: keys.into_iter().map(str::to_string).collect(),
                        })
                    }
                }
            }
            constraints.push(ResolvedConstraint {
                cond: cond.clone(),
                vars,
            });
        }
        Ok(ConstraintGraph {
            equality_classes: classes,
            constraints,
        })
    }

    /// Pairs of classes linked by a plain `a <= b` (or `b >= a`) constraint.
    pub fn ordered_pairs(&self) -> Vec<(String, String)> {
        let mut out = Vec::new();
        for c in &self.graph.constraints {
            if let Cond::Binary(op @ (BinOp::Le | BinOp::Ge | BinOp::Lt | BinOp::Gt), a, b) = &c.cond
            {
                if let (Cond::Var(pa), Cond::Var(pb)) = (a.as_ref(), b.as_ref()) {
                    let ca = c.class_of(pa).unwrap().to_string();
                    let cb = c.class_of(pb).unwrap().to_string();
                    if matches!(op, BinOp::Le | BinOp::Lt) {
                        out.push((ca, cb));
                    } else {
                        out.push((cb, ca));
                    }
                }
            }
        }
        out
    }
}

/// Enumerate variables and recursive references from every starting rule.
fn walk(g: &Grammar) -> (Vec<ChoiceVariable>, Vec<RecursiveSite>) {
    let mut vars = Vec::new();
    let mut rec = Vec::new();
    for &root in g.root_ids() {
        let path = QualifiedName::root(&g.rule(root).name);
        let mut stack = vec![root];
        visit(g, g.rule(root).body, path, &mut Vec::new(), &mut stack, &mut vars, &mut rec);
    }
    (vars, rec)
}

fn visit(
    g: &Grammar,
    scope: NodeId,
    path: QualifiedName,
    annotated: &mut Vec<bool>,
    stack: &mut Vec<usize>,
    vars: &mut Vec<ChoiceVariable>,
    rec: &mut Vec<RecursiveSite>,
) {
    if let Some(v) = describe(g, path.clone(), scope, annotated) {
        vars.push(v);
    }
    if let NodeKind::Star(body) = g.node(scope).kind {
        annotated.push(false);
        visit(g, body, path.child(INSTANCE_WILDCARD), annotated, stack, vars, rec);
        annotated.pop();
        return;
    }
    for entry in g.scope_entries(scope) {
        let node = g.node(entry);
        let child = path.child(node.segment.clone().unwrap());
        annotated.push(node.annotated);
        match node.kind {
            NodeKind::Ref { rule, .. } if stack.contains(&rule) => rec.push(RecursiveSite {
                path: child,
                rule: g.rule(rule).name.clone(),
                node: entry,
            }),
            NodeKind::Ref { rule, .. } => {
                stack.push(rule);
                visit(g, g.rule(rule).body, child, annotated, stack, vars, rec);
                stack.pop();
            }
            _ => visit(g, entry, child, annotated, stack, vars, rec),
        }
        annotated.pop();
    }
}

fn describe(
    g: &Grammar,
    qname: QualifiedName,
    node_id: NodeId,
    annotated: &[bool],
) -> Option<ChoiceVariable> {
    let node = g.node(node_id);
    let (kind, domain) = match &node.kind {
        NodeKind::Sel(alts) => (
            VariableKind::Selection,
            DomainDescriptor::EnumeratedInts {
                lo: 1,
                hi: alts.len() as i64,
            },
        ),
        NodeKind::Star(_) => (
            VariableKind::Star,
            DomainDescriptor::Naturals {
                cap: Some(g.star_cap()),
            },
        ),
        NodeKind::Predicate { var, ty, predicate } => (
            VariableKind::PredicateDomain,
            DomainDescriptor::PredicateDom {
                var: var.clone(),
                base: ty.clone(),
                predicate: predicate.clone(),
            },
        ),
        NodeKind::Regex { pattern, .. } => (
            VariableKind::PredicateDomain,
            DomainDescriptor::PredicateDom {
                var: "s".into(),
                base: ValueType::Str,
                predicate: Some(Cond::Matches(Box::new(Cond::var("s")), pattern.clone())),
            },
        ),
        NodeKind::Query(q) => (
            VariableKind::QueryDomain,
            DomainDescriptor::QueryDom { query: q.clone() },
        ),
        _ => return None,
    };
    let rule = g.rule(node.rule);
    let rule_tag = g.rule_of_body(node_id).and_then(|r| g.rule(r).tag.clone());
    Some(ChoiceVariable {
        class: class_key(&qname, annotated),
        qname,
        kind,
        domain,
        rule: rule.name.clone(),
        rule_tag,
        node: node_id,
    })
}

/// Follow a child-index path from a rule body.
pub(crate) fn sub_expr<'a>(e: &'a crate::syntax::Expr, loc: &[usize]) -> &'a crate::syntax::Expr {
    use crate::syntax::Expr;
    let mut cur = e;
    for &i in loc {
        cur = match cur {
            Expr::Sequence(items) | Expr::Selection(items) => &items[i],
            Expr::ZeroOrMore(body) => body,
            _ => unreachable!("location walks past a leaf"),
        };
    }
    cur
}

/// Error-raising variant: fails on the first recursive reference.
pub fn extract_choice_variables(ast: &GrammarAst) -> Result<Vec<ChoiceVariable>, ModelError> {
    let grammar = Grammar::compile(ast)?;
    let (vars, rec) = walk(&grammar);
    if let Some(site) = rec.first() {
        return Err(ModelError::RecursionUnbounded {
            rule: site.rule.clone(),
            path: site.path.to_string(),
        });
    }
    Ok(vars)
}

pub fn build_constraint_graph(ast: &GrammarAst) -> Result<ConstraintGraph, ModelError> {
    Ok(ChoiceModel::build(ast)?.graph)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::syntax::parse_grammar;

    fn model(src: &str) -> ChoiceModel {
        ChoiceModel::build(&parse_grammar(src).unwrap()).unwrap()
    }

    fn shown(m: &ChoiceModel) -> Vec<String> {
        m.variables.iter().map(|v| m.display(&v.qname)).collect()
    }

    #[test]
    fn ambiguous_names_are_qualified() {
        let m = model("A = B:$v1 B:$v2\nB = C:$v3\nC = /[0-9]+/");
        assert_eq!(shown(&m), ["v1/v3", "v2/v3"]);
        assert!(m.graph.equality_classes.is_empty());
    }

    #[test]
    fn literal_grammar_has_no_variables() {
        assert!(model("q = 'SELECT 1'").variables.is_empty());
    }

    #[test]
    fn dependency_under_selection() {
        let m = model("A = 'x' | B\nB = {n:int | n > 0}");
        let order = m.dependency_order();
        assert_eq!(order.len(), 1);
        assert_eq!(order[0].0.to_string(), "A");
        assert_eq!(order[0].1.to_string(), "A/B1");
        assert_eq!(m.alternative_containing(&order[0].0, &order[0].1), Some(1));
    }

    #[test]
    fn recursion_is_summarized_or_rejected() {
        let src = "q = 'SELECT * FROM ' src\nsrc = 't' | '(' q2 ')'\nq2 = 'SELECT * FROM ' src";
        let ast = parse_grammar(src).unwrap();
        assert!(matches!(
            extract_choice_variables(&ast),
            Err(ModelError::RecursionUnbounded { .. })
        ));
        let m = ChoiceModel::build(&ast).unwrap();
        assert_eq!(m.recursive_sites.len(), 1);
        assert_eq!(m.recursive_sites[0].path.to_string(), "q/src1/q21/src1");
    }

    #[test]
    fn unresolved_constraint_variable() {
        let ast = parse_grammar("q = v:$s\nv = {x:int}\nconstraint $s <= $e").unwrap();
        assert_eq!(
            ChoiceModel::build(&ast).unwrap_err(),
            ModelError::UnresolvedConstraintVariable("e".into())
        );
    }
}
