//! Compiled form of a grammar: rules and expressions flattened into an arena
//! with every reference and inline variability site carrying its name.

use std::collections::HashMap;

use regex::Regex;

use super::name::{is_instance_segment, QualifiedName, INSTANCE_WILDCARD};
use crate::error::ModelError;
use crate::syntax::{Cond, Expr, GrammarAst, ValueType};

pub type NodeId = usize;
pub type RuleId = usize;

/// Default cap on zero-or-more repetition counts for finite widgets and
/// enumeration.
pub const DEFAULT_STAR_CAP: u32 = 8;

#[derive(Debug, Clone)]
pub enum NodeKind {
    Literal(String),
    Regex {
        pattern: String,
        /// Anchored at the start of the input.
        anchored: Regex,
        /// Anchored at both ends, for membership checks.
        full: Regex,
    },
    Predicate {
        var: String,
        ty: ValueType,
        predicate: Option<Cond>,
    },
    Query(String),
    Ref {
        rule: RuleId,
        annotation: Option<String>,
    },
    Seq(Vec<NodeId>),
    Sel(Vec<NodeId>),
    Star(NodeId),
}

#[derive(Debug, Clone)]
pub struct Node {
    pub kind: NodeKind,
    pub rule: RuleId,
    /// Child-index path from the rule body to this node.
    pub loc: Vec<usize>,
    /// Path segment contributed by this node: set for references and for
    /// variability sites that are not a rule body or a star body.
    pub segment: Option<String>,
    /// Whether `segment` comes from a user annotation.
    pub annotated: bool,
}

impl Node {
    pub fn is_site(&self) -> bool {
        matches!(
            self.kind,
            NodeKind::Sel(_)
                | NodeKind::Star(_)
                | NodeKind::Predicate { .. }
                | NodeKind::Query(_)
                | NodeKind::Regex { .. }
        )
    }
}

#[derive(Debug, Clone)]
pub struct RuleInfo {
    pub name: String,
    pub tag: Option<ValueType>,
    pub body: NodeId,
}

/// Where a path lands after resolution.
#[derive(Debug, Clone)]
pub struct Resolved {
    /// The node acting as the scope root for this path.
    pub node: NodeId,
    /// Per segment (excluding the root), whether it was a user annotation.
    pub annotated: Vec<bool>,
}

#[derive(Debug, Clone)]
pub struct Grammar {
    ast: GrammarAst,
    rules: Vec<RuleInfo>,
    rule_ids: HashMap<String, RuleId>,
    nodes: Vec<Node>,
    roots: Vec<RuleId>,
    star_cap: u32,
}

impl Grammar {
    pub fn compile(ast: &GrammarAst) -> Result<Grammar, ModelError> {
        Self::compile_with_cap(ast, DEFAULT_STAR_CAP)
    }

    pub fn compile_with_cap(ast: &GrammarAst, star_cap: u32) -> Result<Grammar, ModelError> {
        let rule_ids: HashMap<String, RuleId> = ast
            .rules
            .keys()
            .enumerate()
            .map(|(i, n)| (n.clone(), i))
            .collect();
        let mut g = Grammar {
            ast: ast.clone(),
            rules: Vec::with_capacity(ast.rules.len()),
            rule_ids,
            nodes: Vec::new(),
            roots: Vec::new(),
            star_cap,
        };
        for (rid, rule) in ast.rules.values().enumerate() {
            if let Some(ValueType::Attr(Some(p))) = &rule.type_tag {
                if !g.rule_ids.contains_key(p) {
                    return Err(ModelError::UndefinedRule(p.clone()));
                }
            }
            let mut namer = Namer::default();
            let body = g.lower(&rule.body, rid, Vec::new(), &mut namer, Position::Body)?;
            g.rules.push(RuleInfo {
                name: rule.name.clone(),
                tag: rule.type_tag.clone(),
                body,
            });
        }
        for name in &ast.starting_rules {
            let id = *g
                .rule_ids
                .get(name)
                .ok_or_else(|| ModelError::UndefinedRule(name.clone()))?;
            g.roots.push(id);
        }
        if g.roots.is_empty() && !g.rules.is_empty() {
            return Err(ModelError::NoStartingRule);
        }
        Ok(g)
    }

    fn lower(
        &mut self,
        e: &Expr,
        rule: RuleId,
        loc: Vec<usize>,
        namer: &mut Namer,
        pos: Position,
    ) -> Result<NodeId, ModelError> {
        let rule_name = self.ast.rules.get_index(rule).unwrap().0.clone();
        let id = self.nodes.len();
        self.nodes.push(Node {
            kind: NodeKind::Literal(String::new()),
            rule,
            loc: loc.clone(),
            segment: None,
            annotated: false,
        });
        let mut segment = None;
        let mut annotated = false;
        if e.is_variability_site() && pos == Position::Inner {
            namer.sites += 1;
            segment = Some(format!("{rule_name}.{}", namer.sites));
        }
        let child_loc = |i: usize| {
            let mut l = loc.clone();
            l.push(i);
            l
        };
        let kind = match e {
            Expr::Literal(t) => NodeKind::Literal(t.clone()),
            Expr::Regex(p) => {
                let compile = |src: String| {
                    Regex::new(&src).map_err(|err| ModelError::InvalidRegex {
                        rule: rule_name.clone(),
                        message: err.to_string(),
                    })
                };
                NodeKind::Regex {
                    pattern: p.clone(),
                    anchored: compile(format!("^(?:{p})"))?,
                    full: compile(format!("^(?:{p})$"))?,
                }
            }
            Expr::PredicateDomain { var, ty, predicate } => NodeKind::Predicate {
                var: var.clone(),
                ty: ty.clone(),
                predicate: predicate.clone(),
            },
            Expr::QueryDomain(q) => NodeKind::Query(q.clone()),
            Expr::Ref {
                rule: target,
                annotation,
            } => {
                let tid = *self
                    .rule_ids
                    .get(target)
                    .ok_or_else(|| ModelError::UndefinedRule(target.clone()))?;
                let ordinal = namer.refs.entry(target.clone()).or_insert(0);
                *ordinal += 1;
                segment = Some(match annotation {
                    Some(a) => {
                        annotated = true;
                        a.clone()
                    }
                    None => format!("{target}{ordinal}"),
                });
                NodeKind::Ref {
                    rule: tid,
                    annotation: annotation.clone(),
                }
            }
            Expr::Sequence(items) => {
                let mut ids = Vec::with_capacity(items.len());
                for (i, item) in items.iter().enumerate() {
                    ids.push(self.lower(item, rule, child_loc(i), namer, Position::Inner)?);
                }
                NodeKind::Seq(ids)
            }
            Expr::Selection(alts) => {
                let mut ids = Vec::with_capacity(alts.len());
                for (i, alt) in alts.iter().enumerate() {
                    ids.push(self.lower(alt, rule, child_loc(i), namer, Position::Inner)?);
                }
                NodeKind::Sel(ids)
            }
            Expr::ZeroOrMore(body) => {
                let b = self.lower(body, rule, child_loc(0), namer, Position::StarBody)?;
                NodeKind::Star(b)
            }
        };
        let node = &mut self.nodes[id];
        node.kind = kind;
        node.segment = segment;
        node.annotated = annotated;
        Ok(id)
    }

    pub fn ast(&self) -> &GrammarAst {
        &self.ast
    }

    pub fn node(&self, id: NodeId) -> &Node {
        &self.nodes[id]
    }

    pub fn rule(&self, id: RuleId) -> &RuleInfo {
        &self.rules[id]
    }

    pub fn rule_id(&self, name: &str) -> Option<RuleId> {
        self.rule_ids.get(name).copied()
    }

    pub fn rules(&self) -> &[RuleInfo] {
        &self.rules
    }

    pub fn roots(&self) -> impl Iterator<Item = &str> + '_ {
        self.roots.iter().map(|&r| self.rules[r].name.as_str())
    }

    pub fn root_ids(&self) -> &[RuleId] {
        &self.roots
    }

    pub fn single_root(&self) -> bool {
        self.roots.len() == 1
    }

    pub fn star_cap(&self) -> u32 {
        self.star_cap
    }

    /// The rule whose body is exactly this node, if any.
    pub fn rule_of_body(&self, node: NodeId) -> Option<RuleId> {
        let n = &self.nodes[node];
        (self.rules[n.rule].body == node).then_some(n.rule)
    }

    /// Children of a scope root that carry a path segment, in order. Walks
    /// through sequences and (when the scope root is a selection) its
    /// alternatives, stopping at references and nested sites.
    pub fn scope_entries(&self, scope: NodeId) -> Vec<NodeId> {
        let mut out = Vec::new();
        self.collect_entries(scope, true, &mut out);
        out
    }

    fn collect_entries(&self, id: NodeId, is_root: bool, out: &mut Vec<NodeId>) {
        let node = &self.nodes[id];
        match &node.kind {
            NodeKind::Ref { .. } => out.push(id),
            _ if node.is_site() && !is_root => {
                if node.segment.is_some() {
                    out.push(id);
                }
            }
            NodeKind::Sel(alts) => {
                for &a in alts {
                    self.collect_entries(a, false, out);
                }
            }
            NodeKind::Seq(items) => {
                for &i in items {
                    self.collect_entries(i, false, out);
                }
            }
            _ => {}
        }
    }

    /// Node reached by following an entry: a reference enters the target
    /// rule body, a named site is its own scope.
    pub fn enter(&self, entry: NodeId) -> NodeId {
        match self.nodes[entry].kind {
            NodeKind::Ref { rule, .. } => self.rules[rule].body,
            _ => entry,
        }
    }

    /// Walk a qualified name through the grammar.
    pub fn resolve(&self, qname: &QualifiedName) -> Result<Resolved, ModelError> {
        let unknown = || ModelError::UnknownVariable(qname.to_string());
        let segs = qname.segments();
        let root = self.rule_id(&segs[0]).ok_or_else(unknown)?;
        if !self.roots.contains(&root) {
            return Err(unknown());
        }
        let mut scope = self.rules[root].body;
        let mut annotated = Vec::with_capacity(segs.len() - 1);
        for seg in &segs[1..] {
            if seg == INSTANCE_WILDCARD || is_instance_segment(seg) {
                match self.nodes[scope].kind {
                    NodeKind::Star(body) if seg == INSTANCE_WILDCARD || seg != "0" => {
                        scope = body;
                        annotated.push(false);
                        continue;
                    }
                    _ => return Err(unknown()),
                }
            }
            let entry = self
                .scope_entries(scope)
                .into_iter()
                .find(|&e| self.nodes[e].segment.as_deref() == Some(seg.as_str()))
                .ok_or_else(unknown)?;
            annotated.push(self.nodes[entry].annotated);
            scope = self.enter(entry);
        }
        Ok(Resolved {
            node: scope,
            annotated,
        })
    }

    /// Render a qualified name the way users write it: without the starting
    /// rule when the grammar has only one.
    pub fn display(&self, qname: &QualifiedName) -> String {
        if self.single_root() && qname.len() > 1 {
            qname.segments()[1..].join("/")
        } else {
            qname.to_string()
        }
    }

    /// Inverse of [`display`](Self::display); also accepts fully qualified
    /// names.
    pub fn lookup(&self, text: &str) -> Result<QualifiedName, ModelError> {
        let parsed: QualifiedName = text
            .parse()
            .map_err(|_| ModelError::UnknownVariable(text.to_string()))?;
        if self.resolve(&parsed).is_ok() {
            return Ok(parsed);
        }
        if self.single_root() {
            let mut segs = vec![self.rules[self.roots[0]].name.clone()];
            segs.extend(parsed.segments().iter().cloned());
            let full = QualifiedName::new(segs);
            if self.resolve(&full).is_ok() {
                return Ok(full);
            }
        }
        Err(ModelError::UnknownVariable(text.to_string()))
    }
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Position {
    Body,
    StarBody,
    Inner,
}

#[derive(Default)]
struct Namer {
    refs: HashMap<String, usize>,
    sites: usize,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::syntax::parse_grammar;

    #[test]
    fn auto_names_use_per_target_ordinals() {
        let ast = parse_grammar("q = val ' AND ' val ' ' t:$x\nval = {x:int | x > 0}\nt = 'a' | 'b'").unwrap();
        let g = Grammar::compile(&ast).unwrap();
        let body = g.rule(g.rule_id("q").unwrap()).body;
        let names: Vec<_> = g
            .scope_entries(body)
            .into_iter()
            .map(|e| g.node(e).segment.clone().unwrap())
            .collect();
        assert_eq!(names, ["val1", "val2", "x"]);
    }

    #[test]
    fn inline_sites_get_rule_ordinals() {
        let ast = parse_grammar("q = 'a' ('x' | 'y') (' z' p)*\np = 'p'").unwrap();
        let g = Grammar::compile(&ast).unwrap();
        let body = g.rule(0).body;
        let names: Vec<_> = g
            .scope_entries(body)
            .into_iter()
            .map(|e| g.node(e).segment.clone().unwrap())
            .collect();
        assert_eq!(names, ["q.1", "q.2"]);
        let inst: QualifiedName = "q/q.2/3/p1".parse().unwrap();
        assert!(g.resolve(&inst).is_ok());
        assert!(g.resolve(&"q/q.2/0/p1".parse().unwrap()).is_err());
    }

    #[test]
    fn undefined_rule_is_an_error() {
        let ast = parse_grammar("q = z").unwrap();
        assert_eq!(
            Grammar::compile(&ast).unwrap_err(),
            ModelError::UndefinedRule("z".into())
        );
    }
}
