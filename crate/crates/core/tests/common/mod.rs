#![allow(dead_code)]

use std::collections::HashMap;

use rand::{Rng, RngExt};

use dig_core::binding::{parse_input, BindingState};
use dig_core::catalog::{Catalog, SqliteBackend};
use dig_core::tooling::TermSampler;
use dig_core::{ChoiceModel, QualifiedName};

pub fn flights() -> Catalog {
    let backend = SqliteBackend::with_scripts(&[dig_core::fixtures::FLIGHTS_SQL]).unwrap();
    Catalog::new(std::sync::Arc::new(backend))
}

pub struct GrammarShape {
    pub rules: usize,
    pub stars: bool,
    pub regex: bool,
}

/// Source text of a random well-formed, non-recursive grammar. Every
/// literal ends in a space and no literal is a prefix of another, so each
/// string has one derivation.
pub fn random_grammar<R: Rng>(rng: &mut R, shape: &GrammarShape) -> String {
    let n = rng.random_range(1..=shape.rules);
    let mut word = 0usize;
    let mut ann = 0usize;
    let mut lit = |rng: &mut R| {
        word += 1;
        let _ = rng;
        format!("'w{word} '")
    };
    let mut out = String::new();
    for i in 0..n {
        let body = if rng.random_bool(0.35) {
            let k = rng.random_range(2..=4);
            let alts: Vec<String> = (0..k)
                .map(|_| {
                    let m = rng.random_range(1..=2);
                    (0..m).map(|_| item(rng, i, n, shape, &mut lit, &mut ann)).collect::<Vec<_>>().join(" ")
                })
                .collect();
            alts.join(" | ")
        } else {
            let m = rng.random_range(1..=3);
            (0..m).map(|_| item(rng, i, n, shape, &mut lit, &mut ann)).collect::<Vec<_>>().join(" ")
        };
        out.push_str(&format!("r{i} = {body}\n"));
    }
    out
}

fn item<R: Rng>(
    rng: &mut R,
    i: usize,
    n: usize,
    shape: &GrammarShape,
    lit: &mut impl FnMut(&mut R) -> String,
    ann: &mut usize,
) -> String {
    let roll = rng.random_range(0..100);
    match roll {
        0..40 => lit(rng),
        40..65 if i + 1 < n => {
            let j = rng.random_range(i + 1..n);
            if rng.random_bool(0.5) {
                *ann += 1;
                format!("r{j}:$a{ann}")
            } else {
                format!("r{j}")
            }
        }
        65..80 => {
            let k = rng.random_range(2..=3);
            let alts: Vec<String> = (0..k).map(|_| lit(rng)).collect();
            format!("({})", alts.join(" | "))
        }
        80..90 => {
            let lo = rng.random_range(0..5);
            let hi = lo + rng.random_range(0..4);
            format!("{{ v:int | v >= {lo} and v <= {hi} }} ' '")
        }
        90..95 if shape.stars => format!("({})*", lit(rng)),
        90..95 => "{ s:str | s in ['p', 'q'] } ' '".to_string(),
        _ if shape.regex => "/[a-z]+/ ' '".to_string(),
        _ => lit(rng),
    }
}

/// A selection of `l + sep + r` strings over a random product L × R, in
/// shuffled order, sometimes with one extra alternative that breaks the
/// product.
pub fn literal_product_grammar<R: Rng>(rng: &mut R) -> String {
    let atoms = ["a", "b", "c", "x", "yy", "z1", "k"];
    let seps = ["=", " = ", "<", " AND ", "-"];
    let pick = |rng: &mut R, k: usize| -> Vec<String> {
        let mut v: Vec<String> = atoms.iter().map(|s| s.to_string()).collect();
        for i in (1..v.len()).rev() {
            let j = rng.random_range(0..=i);
            v.swap(i, j);
        }
        v.truncate(k);
        v
    };
    let (kl, kr) = (rng.random_range(1..=3), rng.random_range(1..=3));
    let l = pick(rng, kl);
    let r = pick(rng, kr);
    let sep = seps[rng.random_range(0..seps.len())];
    let mut alts: Vec<String> = l.iter().flat_map(|a| r.iter().map(move |b| format!("{a}{sep}{b}"))).collect();
    if rng.random_bool(0.25) {
        alts.push(format!("q{sep}q{sep}q"));
    }
    for i in (1..alts.len()).rev() {
        let j = rng.random_range(0..=i);
        alts.swap(i, j);
    }
    let quoted: Vec<String> = alts.iter().map(|a| format!("'{a}'")).collect();
    format!("q = 'SELECT * FROM T WHERE ' pred\npred = {}\n", quoted.join(" | "))
}

/// Bind a random derivation of `root` into a fresh state.
pub fn random_state<R: Rng>(model: &ChoiceModel, root: &str, rng: &mut R) -> Option<(String, BindingState)> {
    let mut sampler = TermSampler::new(model, None);
    let text = sampler.sample_at(&QualifiedName::root(root), rng).ok()?;
    let mut st = BindingState::new();
    parse_input(model, &mut st, &QualifiedName::root(root), &text, None).ok()?;
    Some((text, st))
}

/// Direct template expansion for dbt models: `{{ ref("m") }}`,
/// `{{ ref(var("x")) }}`, `{{ var("x") }}` and if/elif/else on
/// `var("x") == "v"`. Written independently of the translator.
pub fn expand_template(name: &str, models: &HashMap<String, String>, vars: &HashMap<String, String>) -> String {
    let src = &models[name];
    let tag = regex::Regex::new(r"\{\{\s*(.*?)\s*\}\}|\{%\s*(.*?)\s*%\}").unwrap();
    let call = regex::Regex::new(r#"^(ref|var)\((.*)\)$"#).unwrap();
    let cond = regex::Regex::new(r#"^(?:if|elif)\s+var\("(\w+)"\)\s*==\s*"([^"]*)"$"#).unwrap();

    let eval = |expr: &str| -> String {
        let c = call.captures(expr).unwrap();
        let arg = c[2].trim();
        let resolve = |a: &str| -> String {
            if let Some(inner) = call.captures(a) {
                assert_eq!(&inner[1], "var");
                vars[inner[2].trim().trim_matches('"')].clone()
            } else {
                a.trim_matches('"').to_string()
            }
        };
        match &c[1] {
            "var" => resolve(expr),
            _ => {
                let target = resolve(arg);
                if models.contains_key(&target) {
                    format!("({})", expand_template(&target, models, vars))
                } else {
                    target
                }
            }
        }
    };

    // (taken, emitting) per open if
    let mut stack: Vec<(bool, bool)> = Vec::new();
    let emitting = |stack: &[(bool, bool)]| stack.iter().all(|s| s.1);
    let mut out = String::new();
    let mut last = 0;
    for m in tag.captures_iter(src) {
        let whole = m.get(0).unwrap();
        if emitting(&stack) {
            out.push_str(&src[last..whole.start()]);
        }
        last = whole.end();
        if let Some(e) = m.get(1) {
            if emitting(&stack) {
                out.push_str(&eval(e.as_str()));
            }
            continue;
        }
        let d = m.get(2).unwrap().as_str();
        if d.starts_with("if ") {
            let c = cond.captures(d).unwrap();
            let hit = vars[&c[1]] == c[2];
            stack.push((hit, hit));
        } else if d.starts_with("elif ") {
            let c = cond.captures(d).unwrap();
            let top = stack.last_mut().unwrap();
            let hit = !top.0 && vars[&c[1]] == c[2];
            top.0 |= hit;
            top.1 = hit;
        } else if d == "else" {
            let top = stack.last_mut().unwrap();
            top.1 = !top.0;
            top.0 = true;
        } else if d == "endif" {
            stack.pop();
        }
    }
    out.push_str(&src[last..]);
    out.split_whitespace().collect::<Vec<_>>().join(" ")
}
