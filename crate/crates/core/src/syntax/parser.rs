//! Hand-written recursive descent parser for `.dig` source text.
//!
//! The concrete syntax is documented in `docs/grammar.md`.

use indexmap::IndexMap;

use super::ast::{BinOp, Cond, Expr, GrammarAst, RuleDef, ValueType};
use crate::error::ParseGrammarError;
use crate::value::{parse_date, Value};

pub fn parse_grammar(source: &str) -> Result<GrammarAst, ParseGrammarError> {
    let mut p = Parser::new(source);
    let mut rules: IndexMap<String, RuleDef> = IndexMap::new();
    let mut constraints = Vec::new();
    loop {
        p.skip_ws(true);
        if p.at_end() {
            break;
        }
        let start = p.pos;
        if p.at_constraint_keyword() {
            p.pos += "constraint".len();
            let cond = p.cond(CondMode::Constraint)?;
            p.skip_ws(false);
            if !p.at_end() && !p.peek_is('\n') {
                return Err(p.error(&["end of line"]));
            }
            constraints.push(cond);
            continue;
        }
        let Some(name) = p.ident() else {
            return Err(p.error(&["rule name", "`constraint`"]));
        };
        p.skip_ws(true);
        let type_tag = if p.eat(':') {
            p.skip_ws(true);
            Some(p.value_type()?)
        } else {
            None
        };
        p.skip_ws(true);
        if !p.eat('=') {
            return Err(p.error(&["`=`", "`:`"]));
        }
        let body = p.selection()?;
        if rules.contains_key(&name) {
            let (line, col) = p.line_col(start);
            return Err(ParseGrammarError::DuplicateRule { name, line, col });
        }
        rules.insert(
            name.clone(),
            RuleDef {
                name,
                type_tag,
                body,
            },
        );
    }
    let starting_rules = compute_starting_rules(&rules);
    Ok(GrammarAst {
        rules,
        starting_rules,
        constraints,
    })
}

/// Rules referenced by no other rule, in declaration order.
pub fn compute_starting_rules(rules: &IndexMap<String, RuleDef>) -> Vec<String> {
    let mut referenced = std::collections::HashSet::new();
    for (name, rule) in rules {
        rule.body.for_each_ref(&mut |target, _| {
            if target != name {
                referenced.insert(target.to_string());
            }
        });
        if let Some(ValueType::Attr(Some(param))) = &rule.type_tag {
            if param != name {
                referenced.insert(param.clone());
            }
        }
    }
    rules
        .keys()
        .filter(|n| !referenced.contains(*n))
        .cloned()
        .collect()
}

/// Parse a standalone predicate expression (bare identifiers as variables).
pub fn parse_predicate(text: &str) -> Result<Cond, ParseGrammarError> {
    let mut p = Parser::new(text);
    let cond = p.cond(CondMode::Predicate)?;
    p.skip_ws(true);
    if !p.at_end() {
        return Err(p.error(&["end of input"]));
    }
    Ok(cond)
}

/// Parse a standalone constraint expression (`$path` variables).
pub fn parse_constraint(text: &str) -> Result<Cond, ParseGrammarError> {
    let mut p = Parser::new(text);
    let cond = p.cond(CondMode::Constraint)?;
    p.skip_ws(true);
    if !p.at_end() {
        return Err(p.error(&["end of input"]));
    }
    Ok(cond)
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum CondMode {
    Predicate,
    Constraint,
}

const KEYWORDS: &[&str] = &["and", "or", "not", "in", "matches", "true", "false", "date"];

struct Parser<'a> {
    src: &'a str,
    pos: usize,
}

fn is_ident_start(c: char) -> bool {
    c.is_ascii_alphabetic() || c == '_'
}

fn is_ident_char(c: char) -> bool {
    c.is_ascii_alphanumeric() || c == '_'
}

impl<'a> Parser<'a> {
    fn new(src: &'a str) -> Self {
        Parser { src, pos: 0 }
    }

    fn rest(&self) -> &'a str {
        &self.src[self.pos..]
    }

    fn at_end(&self) -> bool {
        self.pos >= self.src.len()
    }

    fn peek(&self) -> Option<char> {
        self.rest().chars().next()
    }

    fn peek_is(&self, c: char) -> bool {
        self.peek() == Some(c)
    }

    fn eat(&mut self, c: char) -> bool {
        if self.peek_is(c) {
            self.pos += c.len_utf8();
            true
        } else {
            false
        }
    }

    /// Skip whitespace and `#` comments. With `newlines == false` stops at a
    /// line break (constraint lines end there).
    fn skip_ws(&mut self, newlines: bool) {
        loop {
            match self.peek() {
                Some('\n') if !newlines => return,
                Some(c) if c.is_whitespace() => self.pos += c.len_utf8(),
                Some('#') => {
                    let end = self.rest().find('\n').map_or(self.src.len(), |i| self.pos + i);
                    self.pos = end;
                }
                _ => return,
            }
        }
    }

    fn line_col(&self, pos: usize) -> (usize, usize) {
        let before = &self.src[..pos.min(self.src.len())];
        let line = before.matches('\n').count() + 1;
        let col = before.rfind('\n').map_or(before.chars().count(), |i| {
            before[i + 1..].chars().count()
        }) + 1;
        (line, col)
    }

    fn error(&self, expected: &[&str]) -> ParseGrammarError {
        let (line, col) = self.line_col(self.pos);
        let found = match self.peek() {
            None => "end of input".to_string(),
            Some('\n') => "end of line".to_string(),
            Some(c) => format!("`{c}`"),
        };
        ParseGrammarError::Syntax {
            line,
            col,
            expected: expected.iter().map(|s| s.to_string()).collect(),
            found,
        }
    }

    fn peek_ident(&self) -> Option<&'a str> {
        let rest = self.rest();
        let mut chars = rest.char_indices();
        match chars.next() {
            Some((_, c)) if is_ident_start(c) => {}
            _ => return None,
        }
        let end = chars
            .find(|&(_, c)| !is_ident_char(c))
            .map_or(rest.len(), |(i, _)| i);
        Some(&rest[..end])
    }

    fn ident(&mut self) -> Option<String> {
        let id = self.peek_ident()?;
        self.pos += id.len();
        Some(id.to_string())
    }

    fn at_constraint_keyword(&self) -> bool {
        self.peek_ident() == Some("constraint") && !self.at_rule_head()
    }

    /// Lookahead: `ident [':' type] '='` starts a new rule.
    fn at_rule_head(&self) -> bool {
        let mut probe = Parser {
            src: self.src,
            pos: self.pos,
        };
        if probe.ident().is_none() {
            return false;
        }
        probe.skip_ws(true);
        if probe.eat(':') {
            probe.skip_ws(true);
            if probe.peek_is('$') || probe.value_type().is_err() {
                return false;
            }
            probe.skip_ws(true);
        }
        probe.peek_is('=')
    }

    fn value_type(&mut self) -> Result<ValueType, ParseGrammarError> {
        let Some(name) = self.peek_ident() else {
            return Err(self.error(&["type"]));
        };
        let save = self.pos;
        self.pos += name.len();
        let mut param = None;
        if name == "attr" {
            self.skip_ws(true);
            if self.eat('[') {
                self.skip_ws(true);
                let Some(p) = self.ident() else {
                    return Err(self.error(&["rule name"]));
                };
                self.skip_ws(true);
                if !self.eat(']') {
                    return Err(self.error(&["`]`"]));
                }
                param = Some(p);
            }
        }
        match ValueType::parse(name, param.as_deref()) {
            Some(ty) => Ok(ty),
            None => {
                self.pos = save;
                Err(self.error(&["int", "float", "str", "date", "rel", "attr"]))
            }
        }
    }

    fn selection(&mut self) -> Result<Expr, ParseGrammarError> {
        let mut alts = vec![self.sequence()?];
        loop {
            self.skip_ws(true);
            if !self.eat('|') {
                break;
            }
            alts.push(self.sequence()?);
        }
        Ok(if alts.len() == 1 {
            alts.pop().unwrap()
        } else {
            Expr::Selection(alts)
        })
    }

    fn at_sequence_end(&self) -> bool {
        match self.peek() {
            None | Some('|') | Some(')') => true,
            Some(c) if is_ident_start(c) => {
                self.at_rule_head() || self.peek_ident() == Some("constraint")
            }
            _ => false,
        }
    }

    fn sequence(&mut self) -> Result<Expr, ParseGrammarError> {
        let mut items = Vec::new();
        loop {
            self.skip_ws(true);
            if self.at_sequence_end() {
                break;
            }
            items.push(self.postfix()?);
        }
        match items.len() {
            0 => Err(self.error(&["expression"])),
            1 => Ok(items.pop().unwrap()),
            _ => Ok(Expr::Sequence(items)),
        }
    }

    fn postfix(&mut self) -> Result<Expr, ParseGrammarError> {
        let mut e = self.primary()?;
        loop {
            let save = self.pos;
            self.skip_ws(true);
            if self.eat('*') {
                e = Expr::ZeroOrMore(Box::new(e));
            } else {
                self.pos = save;
                return Ok(e);
            }
        }
    }

    fn primary(&mut self) -> Result<Expr, ParseGrammarError> {
        match self.peek() {
            Some('\'') => Ok(Expr::Literal(self.quoted()?)),
            Some('/') => self.regex(),
            Some('{') => self.domain(),
            Some('(') => {
                self.pos += 1;
                let e = self.selection()?;
                self.skip_ws(true);
                if !self.eat(')') {
                    return Err(self.error(&["`)`", "`|`"]));
                }
                Ok(e)
            }
            Some(c) if is_ident_start(c) => {
                let rule = self.ident().unwrap();
                let save = self.pos;
                self.skip_ws(true);
                if self.eat(':') {
                    self.skip_ws(true);
                    if self.eat('$') {
                        let Some(var) = self.ident() else {
                            return Err(self.error(&["variable name"]));
                        };
                        return Ok(Expr::Ref {
                            rule,
                            annotation: Some(var),
                        });
                    }
                    return Err(self.error(&["`$`"]));
                }
                self.pos = save;
                Ok(Expr::Ref {
                    rule,
                    annotation: None,
                })
            }
            _ => Err(self.error(&["string literal", "regex", "`{`", "`(`", "rule reference"])),
        }
    }

    /// Single-quoted string with backslash escapes.
    fn quoted(&mut self) -> Result<String, ParseGrammarError> {
        debug_assert!(self.peek_is('\''));
        self.pos += 1;
        let mut out = String::new();
        loop {
            let Some(c) = self.peek() else {
                return Err(self.error(&["`'`"]));
            };
            self.pos += c.len_utf8();
            match c {
                '\'' => return Ok(out),
                '\\' => {
                    let Some(e) = self.peek() else {
                        return Err(self.error(&["escape character"]));
                    };
                    self.pos += e.len_utf8();
                    out.push(match e {
                        'n' => '\n',
                        't' => '\t',
                        'r' => '\r',
                        other => other,
                    });
                }
                c => out.push(c),
            }
        }
    }

    fn regex(&mut self) -> Result<Expr, ParseGrammarError> {
        self.pos += 1;
        let mut out = String::new();
        loop {
            let Some(c) = self.peek() else {
                return Err(self.error(&["`/`"]));
            };
            if c == '\n' {
                return Err(self.error(&["`/`"]));
            }
            self.pos += c.len_utf8();
            match c {
                '/' => return Ok(Expr::Regex(out)),
                '\\' if self.peek_is('/') => {
                    self.pos += 1;
                    out.push('/');
                }
                '\\' => {
                    out.push('\\');
                    if let Some(e) = self.peek() {
                        self.pos += e.len_utf8();
                        out.push(e);
                    }
                }
                c => out.push(c),
            }
        }
    }

    fn domain(&mut self) -> Result<Expr, ParseGrammarError> {
        self.pos += 1;
        self.skip_ws(true);
        let is_query = self
            .peek_ident()
            .is_some_and(|w| w.eq_ignore_ascii_case("select") || w.eq_ignore_ascii_case("with"));
        if is_query {
            let start = self.pos;
            let mut depth = 0usize;
            let mut in_quote = false;
            loop {
                let Some(c) = self.peek() else {
                    return Err(self.error(&["`}`"]));
                };
                match c {
                    '\'' => in_quote = !in_quote,
                    '{' if !in_quote => depth += 1,
                    '}' if !in_quote => {
                        if depth == 0 {
                            break;
                        }
                        depth -= 1;
                    }
                    _ => {}
                }
                self.pos += c.len_utf8();
            }
            let text = self.src[start..self.pos].trim().to_string();
            self.pos += 1;
            return Ok(Expr::QueryDomain(text));
        }
        let Some(var) = self.ident() else {
            return Err(self.error(&["variable name", "SELECT query"]));
        };
        self.skip_ws(true);
        if !self.eat(':') {
            return Err(self.error(&["`:`"]));
        }
        self.skip_ws(true);
        let ty = self.value_type()?;
        self.skip_ws(true);
        let predicate = if self.eat('|') {
            let c = self.cond(CondMode::Predicate)?;
            self.skip_ws(true);
            Some(c)
        } else {
            None
        };
        if !self.eat('}') {
            return Err(self.error(&["`}`", "`|`"]));
        }
        Ok(Expr::PredicateDomain { var, ty, predicate })
    }

    // --- predicate / constraint expressions ---

    fn cond(&mut self, mode: CondMode) -> Result<Cond, ParseGrammarError> {
        self.binary(mode, 1)
    }

    fn ws(&mut self, mode: CondMode) {
        self.skip_ws(mode == CondMode::Predicate);
    }

    fn keyword(&mut self, kw: &str) -> bool {
        if self.peek_ident() == Some(kw) {
            self.pos += kw.len();
            true
        } else {
            false
        }
    }

    fn peek_binop(&self) -> Option<(BinOp, usize)> {
        let rest = self.rest();
        let word = self.peek_ident();
        let op = match word {
            Some("or") => return Some((BinOp::Or, 2)),
            Some("and") => return Some((BinOp::And, 3)),
            Some(_) => return None,
            None => rest,
        };
        let table: &[(&str, BinOp)] = &[
            ("<=", BinOp::Le),
            (">=", BinOp::Ge),
            ("!=", BinOp::Ne),
            ("<>", BinOp::Ne),
            ("==", BinOp::Eq),
            ("=", BinOp::Eq),
            ("<", BinOp::Lt),
            (">", BinOp::Gt),
            ("+", BinOp::Add),
            ("-", BinOp::Sub),
            ("*", BinOp::Mul),
            ("/", BinOp::Div),
        ];
        table
            .iter()
            .find(|(sym, _)| op.starts_with(sym))
            .map(|(sym, op)| (*op, sym.len()))
    }

    fn binary(&mut self, mode: CondMode, min_prec: u8) -> Result<Cond, ParseGrammarError> {
        let mut lhs = self.unary(mode)?;
        loop {
            self.ws(mode);
            if min_prec <= 4 {
                if self.keyword("in") {
                    self.ws(mode);
                    if !self.eat('[') {
                        return Err(self.error(&["`[`"]));
                    }
                    let mut items = Vec::new();
                    loop {
                        self.ws(mode);
                        if self.eat(']') {
                            break;
                        }
                        if !items.is_empty() {
                            if !self.eat(',') {
                                return Err(self.error(&["`,`", "`]`"]));
                            }
                            self.ws(mode);
                        }
                        items.push(self.binary(mode, 5)?);
                    }
                    lhs = Cond::In(Box::new(lhs), items);
                    continue;
                }
                if self.keyword("matches") {
                    self.ws(mode);
                    if !self.peek_is('\'') {
                        return Err(self.error(&["pattern string"]));
                    }
                    let pat = self.quoted()?;
                    lhs = Cond::Matches(Box::new(lhs), pat);
                    continue;
                }
            }
            let Some((op, len)) = self.peek_binop() else {
                return Ok(lhs);
            };
            let prec = op.precedence();
            if prec < min_prec {
                return Ok(lhs);
            }
            self.pos += len;
            let rhs = self.binary(mode, prec + 1)?;
            lhs = Cond::binary(op, lhs, rhs);
            // comparisons do not chain
            if op.is_comparison() {
                self.ws(mode);
                if let Some((next, _)) = self.peek_binop() {
                    if next.is_comparison() {
                        return Err(self.error(&["`and`", "`or`"]));
                    }
                }
            }
        }
    }

    fn unary(&mut self, mode: CondMode) -> Result<Cond, ParseGrammarError> {
        self.ws(mode);
        if self.keyword("not") {
            let inner = self.binary(mode, 3)?;
            return Ok(Cond::Not(Box::new(inner)));
        }
        if self.peek_is('-') {
            self.pos += 1;
            if self.peek().is_some_and(|c| c.is_ascii_digit()) {
                return match self.number()? {
                    Value::Int(i) => Ok(Cond::Const(Value::Int(-i))),
                    Value::Float(f) => Ok(Cond::Const(Value::Float(-f))),
                    _ => unreachable!(),
                };
            }
            let inner = self.unary(mode)?;
            return Ok(Cond::Neg(Box::new(inner)));
        }
        self.atom(mode)
    }

    fn number(&mut self) -> Result<Value, ParseGrammarError> {
        let rest = self.rest();
        let mut end = rest
            .find(|c: char| !c.is_ascii_digit())
            .unwrap_or(rest.len());
        let mut is_float = false;
        if rest[end..].starts_with('.') && rest[end + 1..].starts_with(|c: char| c.is_ascii_digit())
        {
            is_float = true;
            end += 1;
            end += rest[end..]
                .find(|c: char| !c.is_ascii_digit())
                .unwrap_or(rest.len() - end);
        }
        if rest[end..].starts_with(['e', 'E']) {
            let mut e = end + 1;
            if rest[e..].starts_with(['+', '-']) {
                e += 1;
            }
            let digits = rest[e..]
                .find(|c: char| !c.is_ascii_digit())
                .unwrap_or(rest.len() - e);
            if digits > 0 {
                is_float = true;
                end = e + digits;
            }
        }
        let text = &rest[..end];
        let value = if is_float {
            text.parse::<f64>().ok().map(Value::Float)
        } else {
            text.parse::<i64>().ok().map(Value::Int)
        };
        match value {
            Some(v) => {
                self.pos += end;
                Ok(v)
            }
            None => Err(self.error(&["number"])),
        }
    }

    fn atom(&mut self, mode: CondMode) -> Result<Cond, ParseGrammarError> {
        match self.peek() {
            Some(c) if c.is_ascii_digit() => Ok(Cond::Const(self.number()?)),
            Some('\'') => Ok(Cond::Const(Value::Str(self.quoted()?))),
            Some('(') => {
                self.pos += 1;
                let inner = self.cond(mode)?;
                self.ws(mode);
                if !self.eat(')') {
                    return Err(self.error(&["`)`"]));
                }
                Ok(inner)
            }
            Some('$') if mode == CondMode::Constraint => {
                let mut path = Vec::new();
                loop {
                    self.pos += 1; // '$'
                    let rest = self.rest();
                    let len = rest
                        .find(|c: char| !(c.is_ascii_alphanumeric() || c == '_' || c == '.'))
                        .unwrap_or(rest.len());
                    if len == 0 {
                        return Err(self.error(&["variable name"]));
                    }
                    path.push(rest[..len].to_string());
                    self.pos += len;
                    if self.rest().starts_with("/$") {
                        self.pos += 1;
                        continue;
                    }
                    break;
                }
                Ok(Cond::Var(path))
            }
            Some(c) if is_ident_start(c) => {
                let word = self.peek_ident().unwrap();
                match word {
                    "true" => {
                        self.pos += 4;
                        Ok(Cond::Const(Value::Bool(true)))
                    }
                    "false" => {
                        self.pos += 5;
                        Ok(Cond::Const(Value::Bool(false)))
                    }
                    "date" => {
                        self.pos += 4;
                        self.ws(mode);
                        if !self.peek_is('\'') {
                            return Err(self.error(&["date string"]));
                        }
                        let text = self.quoted()?;
                        match parse_date(&text) {
                            Some(d) => Ok(Cond::Const(Value::Date(d))),
                            None => Err(self.error(&["YYYY-MM-DD date"])),
                        }
                    }
                    w if KEYWORDS.contains(&w) => Err(self.error(&["operand"])),
                    w if mode == CondMode::Predicate => {
                        let name = w.to_string();
                        self.pos += name.len();
                        Ok(Cond::Var(vec![name]))
                    }
                    _ => Err(self.error(&["`$variable`"])),
                }
            }
            _ => Err(self.error(&["operand"])),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_literal() {
        let g = parse_grammar("q = 'SELECT 1'").unwrap();
        assert_eq!(g.rules.len(), 1);
        assert_eq!(g.rules["q"].body, Expr::lit("SELECT 1"));
        assert_eq!(g.starting_rules, vec!["q"]);
    }

    #[test]
    fn rules_on_one_line() {
        let g = parse_grammar(r"A = B:$v1 B:$v2        B = C:$v3          C = /\d+/").unwrap();
        assert_eq!(g.rules.len(), 3);
        assert_eq!(
            g.rules["A"].body,
            Expr::Sequence(vec![Expr::annotated("B", "v1"), Expr::annotated("B", "v2")])
        );
        assert_eq!(g.rules["C"].body, Expr::Regex(r"\d+".into()));
        assert_eq!(g.starting_rules, vec!["A"]);
    }

    #[test]
    fn typed_rule_and_domain() {
        let g = parse_grammar(
            "q = 'FROM ' t:$t ' WHERE ' val:$s\n\
             t:rel = 'chirps' | 'evi'\n\
             val = { x:int | x >= 1 and x <= 36 }\n\
             constraint $s <= $e\n",
        )
        .unwrap();
        assert_eq!(g.rules["t"].type_tag, Some(ValueType::Rel));
        match &g.rules["val"].body {
            Expr::PredicateDomain { var, ty, predicate } => {
                assert_eq!(var, "x");
                assert_eq!(*ty, ValueType::Int);
                assert!(predicate.is_some());
            }
            other => panic!("unexpected {other:?}"),
        }
        assert_eq!(
            g.constraints,
            vec![Cond::binary(
                BinOp::Le,
                Cond::Var(vec!["s".into()]),
                Cond::Var(vec!["e".into()])
            )]
        );
    }

    #[test]
    fn query_domain_keeps_text() {
        let g = parse_grammar("q = p\np = { SELECT name FROM products WHERE x = '}' }").unwrap();
        assert_eq!(
            g.rules["p"].body,
            Expr::QueryDomain("SELECT name FROM products WHERE x = '}'".into())
        );
    }

    #[test]
    fn attr_parameter() {
        let g = parse_grammar("q = name sources\nsources = { s:rel | s in ['a', 'b'] }\nname = { s:attr[sources] }")
            .unwrap();
        assert_eq!(
            g.rules["name"].body,
            Expr::PredicateDomain {
                var: "s".into(),
                ty: ValueType::Attr(Some("sources".into())),
                predicate: None
            }
        );
    }

    #[test]
    fn duplicate_rule() {
        let err = parse_grammar("a = 'x'\na = 'y'").unwrap_err();
        assert!(matches!(err, ParseGrammarError::DuplicateRule { ref name, line: 2, col: 1 } if name == "a"));
    }

    #[test]
    fn syntax_error_position() {
        let err = parse_grammar("q = 'a' (b | \n").unwrap_err();
        match err {
            ParseGrammarError::Syntax { line, expected, .. } => {
                assert_eq!(line, 2);
                assert!(!expected.is_empty());
            }
            other => panic!("unexpected {other:?}"),
        }
        assert!(parse_grammar("q = 'unterminated").is_err());
        assert!(parse_grammar("q = ").is_err());
    }

    #[test]
    fn constraint_paths_and_division() {
        let c = parse_constraint("$pd/$s <= $pd/$e").unwrap();
        assert_eq!(c.variables().len(), 2);
        assert_eq!(c.variables()[0], ["pd".to_string(), "s".to_string()]);
        let d = parse_constraint("$a / $b > 2").unwrap();
        assert!(matches!(d, Cond::Binary(BinOp::Gt, ref l, _) if matches!(**l, Cond::Binary(BinOp::Div, ..))));
    }

    #[test]
    fn comments_and_star() {
        let g = parse_grammar("# header\nw = ' WHERE ' p (' AND ' p)* # trailing\np = 'x'").unwrap();
        match &g.rules["w"].body {
            Expr::Sequence(items) => assert!(matches!(items[2], Expr::ZeroOrMore(_))),
            other => panic!("unexpected {other:?}"),
        }
    }
}
