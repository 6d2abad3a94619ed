//! Translation of dbt-style templated SQL projects into grammars.
//!
//! Supported template subset: `{{ ref("m") }}`, `{{ ref(var("x")) }}`,
//! `{{ var("x") }}` and `{% if %}/{% elif %}/{% else %}/{% endif %}` blocks
//! whose conditions compare one variable with a literal. Whitespace runs
//! containing a line break collapse to one space, so multi-line models
//! reduce to single-line SQL.

use std::collections::{HashMap, HashSet};
use std::path::Path;
use std::sync::LazyLock;

use indexmap::IndexMap;
use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::syntax::{compute_starting_rules, parse_predicate, BinOp, Cond, Expr, GrammarAst, RuleDef, ValueType};
use crate::validate::is_identifier;
use crate::value::Value;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum DbtError {
    #[error("model `{model}`: {message}")]
    Template { model: String, message: String },
    #[error("model `{model}`: unknown directive `{directive}`")]
    UnknownDirective { model: String, directive: String },
    #[error("model `{model}`: cannot resolve ref to `{target}`")]
    UnresolvedRef { model: String, target: String },
    #[error("models reference each other in a cycle: {}", .0.join(" -> "))]
    CyclicRef(Vec<String>),
    #[error("variable manifest: {0}")]
    Manifest(String),
    #[error("{0}")]
    Io(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TemplatedModel {
    pub name: String,
    pub source: String,
}

/// A declared template variable. `values` lists an enumerated domain;
/// otherwise `ty` and `predicate` give a predicate domain.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct VarDecl {
    #[serde(default)]
    pub values: Option<Vec<toml::Value>>,
    #[serde(default, rename = "type")]
    pub ty: Option<String>,
    #[serde(default)]
    pub predicate: Option<String>,
}

impl VarDecl {
    fn value_type(&self) -> Result<ValueType, String> {
        match self.ty.as_deref() {
            None => Ok(match self.values.as_ref().and_then(|v| v.first()) {
                Some(toml::Value::Integer(_)) => ValueType::Int,
                Some(toml::Value::Float(_)) => ValueType::Float,
                _ => ValueType::Str,
            }),
            Some(t) => ValueType::parse(t, None).ok_or_else(|| format!("unknown type `{t}`")),
        }
    }

    /// Enumerated values as typed values.
    pub fn listed(&self) -> Option<Vec<Value>> {
        self.values.as_ref().map(|vs| vs.iter().filter_map(toml_value).collect())
    }
}

fn toml_value(v: &toml::Value) -> Option<Value> {
    Some(match v {
        toml::Value::String(s) => Value::Str(s.clone()),
        toml::Value::Integer(i) => Value::Int(*i),
        toml::Value::Float(f) => Value::Float(*f),
        toml::Value::Boolean(b) => Value::Bool(*b),
        toml::Value::Datetime(d) => Value::Str(d.to_string()),
        _ => return None,
    })
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ProjectGraph {
    pub models: IndexMap<String, TemplatedModel>,
    pub vars: IndexMap<String, VarDecl>,
}

impl ProjectGraph {
    /// Read `models/*.sql` (sorted by name) and an optional `vars.toml`.
    pub fn load(dir: &Path) -> Result<Self, DbtError> {
        let io = |e: std::io::Error| DbtError::Io(format!("{}: {e}", dir.display()));
        let mut files: Vec<_> = std::fs::read_dir(dir.join("models"))
            .map_err(io)?
            .filter_map(Result::ok)
            .map(|e| e.path())
            .filter(|p| p.extension().is_some_and(|x| x == "sql"))
            .collect();
        files.sort();
        let mut models = Vec::new();
        for f in files {
            let name = f.file_stem().unwrap().to_string_lossy().into_owned();
            models.push((name, std::fs::read_to_string(&f).map_err(io)?));
        }
        let vars_path = dir.join("vars.toml");
        let vars = if vars_path.exists() {
            std::fs::read_to_string(&vars_path).map_err(io)?
        } else {
            String::new()
        };
        Self::from_sources(models, &vars)
    }

    pub fn from_sources(models: Vec<(String, String)>, vars_toml: &str) -> Result<Self, DbtError> {
        let vars: IndexMap<String, VarDecl> =
            toml::from_str(vars_toml).map_err(|e| DbtError::Manifest(e.to_string()))?;
        for name in vars.keys() {
            if !is_identifier(name) {
                return Err(DbtError::Manifest(format!("`{name}` is not a valid variable name")));
            }
        }
        let mut out = IndexMap::new();
        for (name, source) in models {
            if !is_identifier(&name) {
                return Err(DbtError::Template {
                    model: name,
                    message: "model names must be identifiers".into(),
                });
            }
            out.insert(name.clone(), TemplatedModel { name, source });
        }
        Ok(ProjectGraph { models: out, vars })
    }

    /// Variables used by templates but not declared in the manifest.
    pub fn undeclared_vars(&self) -> Result<Vec<String>, DbtError> {
        let mut out = Vec::new();
        for m in self.models.values() {
            for seg in parse_template(m)? {
                seg.vars(&mut |v| {
                    if !self.vars.contains_key(v) && !out.iter().any(|o| o == v) {
                        out.push(v.to_string());
                    }
                });
            }
        }
        Ok(out)
    }
}

/// Condition of a branch: `var("x") <op> literal`, or `var("x")` alone
/// (true when the value is truthy).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BranchCond {
    pub var: String,
    pub op: Option<BinOp>,
    pub value: Option<Value>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum Segment {
    Text(String),
    Ref(String),
    RefVar(String),
    Var(String),
    /// Arms in order; an arm without condition is the `else`.
    Branch(Vec<(Option<BranchCond>, Vec<Segment>)>),
}

impl Segment {
    fn vars(&self, f: &mut impl FnMut(&str)) {
        match self {
            Segment::RefVar(v) | Segment::Var(v) => f(v),
            Segment::Branch(arms) => {
                for (c, body) in arms {
                    if let Some(c) = c {
                        f(&c.var);
                    }
                    body.iter().for_each(|s| s.vars(f));
                }
            }
            _ => {}
        }
    }
}

static LINE_BREAKS: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"[ \t\r]*\n\s*").unwrap());
static DIRECTIVE: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(?s)\{\{(.*?)\}\}|\{%(.*?)%\}").unwrap());
static REF: LazyLock<Regex> = LazyLock::new(|| Regex::new(r#"^ref\(\s*["']([^"']+)["']\s*\)$"#).unwrap());
static REF_VAR: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r#"^ref\(\s*var\(\s*["']([^"']+)["']\s*\)\s*\)$"#).unwrap());
static VAR: LazyLock<Regex> = LazyLock::new(|| Regex::new(r#"^var\(\s*["']([^"']+)["']\s*\)$"#).unwrap());
static COND: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r#"^var\(\s*["']([^"']+)["']\s*\)\s*(?:(==|!=|<=|>=|<|>)\s*(?:"([^"]*)"|'([^']*)'|(-?[0-9]+(?:\.[0-9]+)?)))?$"#)
        .unwrap()
});

/// Whitespace normalization applied to templates before translation.
pub fn normalize_whitespace(text: &str) -> String {
    LINE_BREAKS.replace_all(text.trim(), " ").into_owned()
}

pub fn parse_template(model: &TemplatedModel) -> Result<Vec<Segment>, DbtError> {
    let src = normalize_whitespace(&model.source);
    let err = |message: String| DbtError::Template {
        model: model.name.clone(),
        message,
    };
    let unknown = |d: &str| DbtError::UnknownDirective {
        model: model.name.clone(),
        directive: d.trim().to_string(),
    };

    // stack of open blocks: (arms so far, current condition, current body)
    type Open = (Vec<(Option<BranchCond>, Vec<Segment>)>, Option<BranchCond>, bool);
    let mut stack: Vec<(Open, Vec<Segment>)> = Vec::new();
    let mut cur: Vec<Segment> = Vec::new();
    let mut last = 0;
    for caps in DIRECTIVE.captures_iter(&src) {
        let m = caps.get(0).unwrap();
        if m.start() > last {
            push_text(&mut cur, &src[last..m.start()]);
        }
        last = m.end();
        if let Some(expr) = caps.get(1) {
            let e = expr.as_str().trim();
            let seg = if let Some(c) = REF_VAR.captures(e) {
                Segment::RefVar(c[1].to_string())
            } else if let Some(c) = REF.captures(e) {
                Segment::Ref(c[1].to_string())
            } else if let Some(c) = VAR.captures(e) {
                Segment::Var(c[1].to_string())
            } else {
                return Err(unknown(m.as_str()));
            };
            cur.push(seg);
            continue;
        }
        let stmt = caps[2].trim();
        let (kw, rest) = stmt.split_once(char::is_whitespace).unwrap_or((stmt, ""));
        match kw {
            "if" => {
                let cond = parse_cond(rest.trim()).ok_or_else(|| err(format!("bad condition `{rest}`")))?;
                stack.push(((Vec::new(), Some(cond), false), std::mem::take(&mut cur)));
            }
            "elif" | "else" => {
                let ((arms, cond, seen_else), _) =
                    stack.last_mut().ok_or_else(|| err(format!("`{kw}` without `if`")))?;
                if *seen_else {
                    return Err(err(format!("`{kw}` after `else`")));
                }
                arms.push((cond.take(), std::mem::take(&mut cur)));
                if kw == "elif" {
                    *cond = Some(parse_cond(rest.trim()).ok_or_else(|| err(format!("bad condition `{rest}`")))?);
                } else {
                    *seen_else = true;
                }
            }
            "endif" => {
                let ((mut arms, cond, _), outer) = stack.pop().ok_or_else(|| err("`endif` without `if`".into()))?;
                arms.push((cond, std::mem::take(&mut cur)));
                cur = outer;
                cur.push(Segment::Branch(arms));
            }
            _ => return Err(unknown(m.as_str())),
        }
    }
    if last < src.len() {
        push_text(&mut cur, &src[last..]);
    }
    if !stack.is_empty() {
        return Err(err("unterminated `if` block".into()));
    }
    if src.contains("{{") || src.contains("{%") {
        // a directive opener the pattern did not consume
        let leftover = DIRECTIVE.replace_all(&src, "");
        if leftover.contains("{{") || leftover.contains("{%") {
            return Err(err("unbalanced template delimiters".into()));
        }
    }
    Ok(cur)
}

fn push_text(cur: &mut Vec<Segment>, text: &str) {
    if let Some(Segment::Text(t)) = cur.last_mut() {
        t.push_str(text);
    } else {
        cur.push(Segment::Text(text.to_string()));
    }
}

fn parse_cond(text: &str) -> Option<BranchCond> {
    let c = COND.captures(text)?;
    let op = c.get(2).map(|o| match o.as_str() {
        "==" => BinOp::Eq,
        "!=" => BinOp::Ne,
        "<" => BinOp::Lt,
        "<=" => BinOp::Le,
        ">" => BinOp::Gt,
        _ => BinOp::Ge,
    });
    let value = if let Some(s) = c.get(3).or(c.get(4)) {
        Some(Value::Str(s.as_str().to_string()))
    } else {
        c.get(5).map(|n| {
            n.as_str()
                .parse::<i64>()
                .map(Value::Int)
                .unwrap_or_else(|_| Value::Float(n.as_str().parse().unwrap()))
        })
    };
    Some(BranchCond {
        var: c[1].to_string(),
        op,
        value,
    })
}

/// Names chosen for the rules of a translation.
struct Names<'a> {
    project: &'a ProjectGraph,
    /// Selection rule for `ref(var(x))`.
    ref_sel: HashMap<String, String>,
    /// Terminal rule for `var(x)`.
    var_rule: HashMap<String, String>,
}

impl<'a> Names<'a> {
    fn new(project: &'a ProjectGraph) -> Result<Self, DbtError> {
        let mut taken: HashSet<String> = project.models.keys().cloned().collect();
        let mut ref_sel = HashMap::new();
        let mut var_rule = HashMap::new();
        let fresh = |base: &str, taken: &mut HashSet<String>| {
            let mut n = base.to_string();
            let mut k = 2;
            while taken.contains(&n) {
                n = format!("{base}_{k}");
                k += 1;
            }
            taken.insert(n.clone());
            n
        };
        for m in project.models.values() {
            for seg in parse_template(m)? {
                collect(&seg, &mut |s| match s {
                    Segment::RefVar(x) if !ref_sel.contains_key(x) => {
                        let n = fresh(x, &mut taken);
                        ref_sel.insert(x.clone(), n);
                    }
                    Segment::Var(x) if !var_rule.contains_key(x) => {
                        let base = if ref_sel.contains_key(x) || taken.contains(x) {
                            format!("{x}_value")
                        } else {
                            x.clone()
                        };
                        let n = fresh(&base, &mut taken);
                        var_rule.insert(x.clone(), n);
                    }
                    _ => {}
                });
            }
        }
        Ok(Names {
            project,
            ref_sel,
            var_rule,
        })
    }
}

fn collect(seg: &Segment, f: &mut impl FnMut(&Segment)) {
    f(seg);
    if let Segment::Branch(arms) = seg {
        for (_, body) in arms {
            body.iter().for_each(|s| collect(s, f));
        }
    }
}

/// Rules for one model: the model's own rule plus one per branch block.
/// Shared variable and ref-selection rules come from [`translate_project`].
pub fn translate_model(model: &TemplatedModel, project: &ProjectGraph) -> Result<Vec<RuleDef>, DbtError> {
    let names = Names::new(project)?;
    let mut rules = Vec::new();
    model_rules(model, &names, &mut rules)?;
    Ok(rules)
}

fn model_rules(model: &TemplatedModel, names: &Names, out: &mut Vec<RuleDef>) -> Result<(), DbtError> {
    let segs = parse_template(model)?;
    let mut branches = 0;
    let body = sequence(model, &segs, names, &mut branches, out)?;
    out.insert(
        0,
        RuleDef {
            name: model.name.clone(),
            type_tag: None,
            body,
        },
    );
    Ok(())
}

fn sequence(
    model: &TemplatedModel,
    segs: &[Segment],
    names: &Names,
    branches: &mut usize,
    out: &mut Vec<RuleDef>,
) -> Result<Expr, DbtError> {
    let mut items = Vec::new();
    let lit = |items: &mut Vec<Expr>, t: &str| {
        if let Some(Expr::Literal(prev)) = items.last_mut() {
            prev.push_str(t);
        } else {
            items.push(Expr::Literal(t.to_string()));
        }
    };
    for s in segs {
        match s {
            Segment::Text(t) => lit(&mut items, t),
            Segment::Ref(m) => {
                if names.project.models.contains_key(m) {
                    lit(&mut items, "(");
                    items.push(Expr::rule_ref(m.clone()));
                    lit(&mut items, ")");
                } else if is_identifier(m) {
                    lit(&mut items, m);
                } else {
                    return Err(DbtError::UnresolvedRef {
                        model: model.name.clone(),
                        target: m.clone(),
                    });
                }
            }
            Segment::RefVar(x) => {
                let listed = names.project.vars.get(x).and_then(VarDecl::listed);
                let Some(values) = listed.filter(|v| !v.is_empty()) else {
                    return Err(DbtError::UnresolvedRef {
                        model: model.name.clone(),
                        target: format!("var(\"{x}\")"),
                    });
                };
                let all_models = values
                    .iter()
                    .all(|v| v.as_str().is_some_and(|s| names.project.models.contains_key(s)));
                let rule = names.ref_sel[x].clone();
                if all_models {
                    lit(&mut items, "(");
                    items.push(Expr::annotated(rule.clone(), rule));
                    lit(&mut items, ")");
                } else {
                    items.push(Expr::annotated(rule.clone(), rule));
                }
            }
            Segment::Var(x) => {
                let rule = names.var_rule[x].clone();
                items.push(Expr::annotated(rule.clone(), rule));
            }
            Segment::Branch(arms) => {
                *branches += 1;
                let name = format!("{}_if{}", model.name, branches);
                let mut alts = Vec::new();
                for (_, body) in arms {
                    alts.push(sequence(model, body, names, branches, out)?);
                }
                if arms.last().is_some_and(|(c, _)| c.is_some()) {
                    alts.push(Expr::Literal(String::new()));
                }
                out.push(RuleDef {
                    name: name.clone(),
                    type_tag: None,
                    body: Expr::Selection(alts),
                });
                items.push(Expr::annotated(name.clone(), name));
            }
        }
    }
    Ok(match items.len() {
        0 => Expr::Literal(String::new()),
        1 => items.pop().unwrap(),
        _ => Expr::Sequence(items),
    })
}

fn var_rule(name: &str, rule: &str, decl: Option<&VarDecl>) -> Result<RuleDef, DbtError> {
    let manifest = |m: String| DbtError::Manifest(format!("`{name}`: {m}"));
    let (var, ty, predicate) = match decl {
        None => ("s".to_string(), ValueType::Str, None),
        Some(d) => {
            let ty = d.value_type().map_err(manifest)?;
            let pred = d
                .predicate
                .as_deref()
                .map(parse_predicate)
                .transpose()
                .map_err(|e| manifest(e.to_string()))?;
            let var = pred
                .as_ref()
                .and_then(|p| p.variables().first().map(|v| v[0].clone()))
                .unwrap_or_else(|| "v".to_string());
            let listed = d.listed().map(|vs| {
                Cond::In(
                    Box::new(Cond::Var(vec![var.clone()])),
                    vs.into_iter().map(Cond::Const).collect(),
                )
            });
            let predicate = match (listed, pred) {
                (Some(l), Some(p)) => Some(Cond::binary(BinOp::And, l, p)),
                (l, p) => l.or(p),
            };
            (var, ty, predicate)
        }
    };
    Ok(RuleDef {
        name: rule.to_string(),
        type_tag: None,
        body: Expr::PredicateDomain { var, ty, predicate },
    })
}

/// Translate every model. Starting rules are the models no other model
/// references.
pub fn translate_project(project: &ProjectGraph) -> Result<GrammarAst, DbtError> {
    check_acyclic(project)?;
    let names = Names::new(project)?;
    let mut rules: IndexMap<String, RuleDef> = IndexMap::new();
    for m in project.models.values() {
        let mut out = Vec::new();
        model_rules(m, &names, &mut out)?;
        for r in out {
            rules.insert(r.name.clone(), r);
        }
    }
    let mut ref_vars: Vec<(&String, &String)> = names.ref_sel.iter().collect();
    ref_vars.sort_by_key(|(_, r)| (*r).clone());
    for (x, rule) in ref_vars {
        let values = project.vars[x].listed().unwrap_or_default();
        let all_models = values
            .iter()
            .all(|v| v.as_str().is_some_and(|s| project.models.contains_key(s)));
        let alts = values
            .iter()
            .map(|v| {
                let s = v.to_string();
                if project.models.contains_key(&s) {
                    let r = Expr::rule_ref(s);
                    if all_models {
                        r
                    } else {
                        Expr::Sequence(vec![Expr::lit("("), r, Expr::lit(")")])
                    }
                } else {
                    Expr::Literal(s)
                }
            })
            .collect();
        rules.insert(
            rule.clone(),
            RuleDef {
                name: rule.clone(),
                type_tag: None,
                body: Expr::Selection(alts),
            },
        );
    }
    let mut plain_vars: Vec<(&String, &String)> = names.var_rule.iter().collect();
    plain_vars.sort_by_key(|(_, r)| (*r).clone());
    for (x, rule) in plain_vars {
        rules.insert(rule.clone(), var_rule(x, rule, project.vars.get(x))?);
    }
    let starting_rules = compute_starting_rules(&rules);
    Ok(GrammarAst {
        rules,
        starting_rules,
        constraints: Vec::new(),
    })
}

/// Fail on a cycle of `ref`s (including every model a `ref(var(x))` may
/// name).
fn check_acyclic(project: &ProjectGraph) -> Result<(), DbtError> {
    let mut edges: IndexMap<&str, Vec<String>> = IndexMap::new();
    for m in project.models.values() {
        let mut targets = Vec::new();
        for seg in parse_template(m)? {
            collect(&seg, &mut |s| match s {
                Segment::Ref(t) if project.models.contains_key(t) => targets.push(t.clone()),
                Segment::RefVar(x) => {
                    for v in project.vars.get(x).and_then(VarDecl::listed).unwrap_or_default() {
                        let v = v.to_string();
                        if project.models.contains_key(&v) {
                            targets.push(v);
                        }
                    }
                }
                _ => {}
            });
        }
        edges.insert(&m.name, targets);
    }
    fn visit<'a>(
        n: &'a str,
        edges: &'a IndexMap<&str, Vec<String>>,
        state: &mut HashMap<&'a str, u8>,
        path: &mut Vec<String>,
    ) -> Result<(), DbtError> {
        match state.get(n) {
            Some(2) => return Ok(()),
            Some(1) => {
                let at = path.iter().position(|p| p == n).unwrap();
                let mut cycle = path[at..].to_vec();
                cycle.push(n.to_string());
                return Err(DbtError::CyclicRef(cycle));
            }
            _ => {}
        }
        state.insert(n, 1);
        path.push(n.to_string());
        for t in &edges[n] {
            visit(t, edges, state, path)?;
        }
        path.pop();
        state.insert(n, 2);
        Ok(())
    }
    let mut state = HashMap::new();
    for n in edges.keys() {
        visit(n, &edges, &mut state, &mut Vec::new())?;
    }
    Ok(())
}
