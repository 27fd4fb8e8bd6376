//! Recursive-descent parser for `.crule` documents.

use std::collections::{BTreeMap, BTreeSet};

use crate::lex::{lex, Cursor, Tok};
use crate::model::LiteralValue;

use super::{
    ConstraintExpr, EnsuredPredicateSpec, EventSig, ObjectDecl, OrderExpr, PredicateTarget,
    RequiredPredicateSpec, RuleSpec, ValueComparison,
};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum RuleError {
    #[error("{file}:{line}:{col}: syntax error: {message}")]
    Syntax {
        file: String,
        line: u32,
        col: u32,
        message: String,
    },
    #[error("{file}: parameter `{param}` is not declared in OBJECTS (in {context})")]
    UndeclaredParameter {
        file: String,
        param: String,
        context: String,
    },
    #[error("{file}: label `{label}` does not resolve to an event (in {context})")]
    UnresolvedLabel {
        file: String,
        label: String,
        context: String,
    },
    #[error("duplicate rule class `{class}` (in {first} and {second})")]
    DuplicateClass {
        class: String,
        first: String,
        second: String,
    },
    #[error("{file}: duplicate {what} `{name}`")]
    Duplicate {
        file: String,
        what: &'static str,
        name: String,
    },
    #[error("{file}: missing section {section}")]
    MissingSection { file: String, section: &'static str },
}

const SECTIONS: &[&str] = &[
    "OBJECTS",
    "EVENTS",
    "ORDER",
    "FORBIDDEN",
    "CONSTRAINTS",
    "REQUIRES",
    "ENSURES",
];

struct Parser {
    file: String,
    cur: Cursor,
}

impl Parser {
    fn err<T>(&self, message: impl Into<String>) -> Result<T, RuleError> {
        let at = self.cur.peek();
        Err(RuleError::Syntax {
            file: self.file.clone(),
            line: at.line,
            col: at.col,
            message: message.into(),
        })
    }

    fn expect_sym(&mut self, sym: &'static str) -> Result<(), RuleError> {
        if self.cur.eat_sym(sym) {
            Ok(())
        } else {
            self.err(format!("expected `{sym}`, found {}", self.cur.peek().tok))
        }
    }

    fn word(&mut self, what: &str) -> Result<String, RuleError> {
        match self.cur.peek().tok.clone() {
            Tok::Word(w) => {
                self.cur.next();
                Ok(w)
            }
            other => self.err(format!("expected {what}, found {other}")),
        }
    }

    fn type_name(&mut self, what: &str) -> Result<String, RuleError> {
        let w = self.word(what)?;
        if w.chars().next().is_some_and(|c| c.is_ascii_uppercase()) {
            Ok(w)
        } else {
            self.err(format!("{what} must start with an upper-case letter: `{w}`"))
        }
    }

    fn literal(&mut self) -> Result<LiteralValue, RuleError> {
        match self.cur.peek().tok.clone() {
            Tok::Str(s) => {
                self.cur.next();
                Ok(LiteralValue::Str(s))
            }
            Tok::Int(i) => {
                self.cur.next();
                Ok(LiteralValue::Int(i))
            }
            other => self.err(format!("expected literal, found {other}")),
        }
    }

    fn at_section(&self) -> bool {
        matches!(&self.cur.peek().tok, Tok::Word(w) if SECTIONS.contains(&w.as_str()))
    }

    // valueCon := ident "in" "{" literal ("," literal)* "}" | ident "==" literal
    fn value_comparison(&mut self) -> Result<ValueComparison, RuleError> {
        let param = self.word("parameter name")?;
        if self.cur.eat_word("in") {
            self.expect_sym("{")?;
            let mut values = vec![self.literal()?];
            while self.cur.eat_sym(",") {
                values.push(self.literal()?);
            }
            self.expect_sym("}")?;
            Ok(ValueComparison::In { param, values })
        } else if self.cur.eat_sym("==") {
            let value = self.literal()?;
            Ok(ValueComparison::Eq { param, value })
        } else {
            self.err(format!(
                "expected `in` or `==` after `{param}`, found {}",
                self.cur.peek().tok
            ))
        }
    }

    fn constraint(&mut self) -> Result<ConstraintExpr, RuleError> {
        if self.cur.at_word("neverTypeOf") {
            self.cur.next();
            self.expect_sym("(")?;
            let param = self.word("parameter name")?;
            self.expect_sym(",")?;
            let type_name = self.type_name("type name")?;
            self.expect_sym(")")?;
            return Ok(ConstraintExpr::NeverTypeOf { param, type_name });
        }
        if self.cur.at_word("notHardCoded") {
            self.cur.next();
            self.expect_sym("(")?;
            let param = self.word("parameter name")?;
            self.expect_sym(")")?;
            return Ok(ConstraintExpr::NotHardCoded { param });
        }
        let guard = self.value_comparison()?;
        if self.cur.eat_sym("=>") {
            let consequence = Box::new(self.constraint()?);
            Ok(ConstraintExpr::Implication { guard, consequence })
        } else {
            Ok(ConstraintExpr::Value(guard))
        }
    }

    // orderExpr := alt ("," alt)*
    fn order_expr(&mut self) -> Result<OrderExpr, RuleError> {
        let mut parts = vec![self.order_alt()?];
        while self.cur.eat_sym(",") {
            parts.push(self.order_alt()?);
        }
        Ok(if parts.len() == 1 {
            parts.pop().unwrap()
        } else {
            OrderExpr::Seq(parts)
        })
    }

    fn order_alt(&mut self) -> Result<OrderExpr, RuleError> {
        let mut parts = vec![self.order_rep()?];
        while self.cur.eat_sym("|") {
            parts.push(self.order_rep()?);
        }
        Ok(if parts.len() == 1 {
            parts.pop().unwrap()
        } else {
            OrderExpr::Alt(parts)
        })
    }

    fn order_rep(&mut self) -> Result<OrderExpr, RuleError> {
        let atom = self.order_atom()?;
        if self.cur.eat_sym("*") {
            Ok(OrderExpr::Star(Box::new(atom)))
        } else if self.cur.eat_sym("+") {
            Ok(OrderExpr::Plus(Box::new(atom)))
        } else if self.cur.eat_sym("?") {
            Ok(OrderExpr::Opt(Box::new(atom)))
        } else {
            Ok(atom)
        }
    }

    fn order_atom(&mut self) -> Result<OrderExpr, RuleError> {
        if self.cur.eat_sym("(") {
            let inner = self.order_expr()?;
            self.expect_sym(")")?;
            Ok(inner)
        } else {
            Ok(OrderExpr::Label(self.word("event label")?))
        }
    }

    fn rule(&mut self) -> Result<RuleSpec, RuleError> {
        if !self.cur.eat_word("SPEC") {
            return self.err("expected `SPEC` at start of rule");
        }
        let class_name = self.type_name("class name")?;

        let mut objects: Option<Vec<ObjectDecl>> = None;
        let mut events: Option<(BTreeMap<String, EventSig>, BTreeMap<String, BTreeSet<String>>)> =
            None;
        let mut order: Option<OrderExpr> = None;
        let mut forbidden: Option<BTreeSet<(String, usize)>> = None;
        let mut constraints: Option<Vec<ConstraintExpr>> = None;
        let mut requires: Option<Vec<RequiredPredicateSpec>> = None;
        let mut ensures: Option<Vec<EnsuredPredicateSpec>> = None;

        while !matches!(self.cur.peek().tok, Tok::Eof) {
            let section = self.word("section keyword")?;
            let dup = |file: &str| RuleError::Duplicate {
                file: file.to_string(),
                what: "section",
                name: section.clone(),
            };
            match section.as_str() {
                "OBJECTS" => {
                    if objects.is_some() {
                        return Err(dup(&self.file));
                    }
                    let mut decls = Vec::new();
                    while !self.at_section() && !matches!(self.cur.peek().tok, Tok::Eof) {
                        let type_name = self.type_name("object type")?;
                        let name = self.word("object name")?;
                        self.expect_sym(";")?;
                        decls.push(ObjectDecl { type_name, name });
                    }
                    objects = Some(decls);
                }
                "EVENTS" => {
                    if events.is_some() {
                        return Err(dup(&self.file));
                    }
                    let mut evs = BTreeMap::new();
                    let mut aggs = BTreeMap::new();
                    while !self.at_section() && !matches!(self.cur.peek().tok, Tok::Eof) {
                        let label = self.word("event label")?;
                        if self.cur.eat_sym(":=") {
                            let mut members = BTreeSet::new();
                            members.insert(self.word("aggregate member")?);
                            while self.cur.eat_sym("|") {
                                members.insert(self.word("aggregate member")?);
                            }
                            self.expect_sym(";")?;
                            if aggs.insert(label.clone(), members).is_some() {
                                return Err(RuleError::Duplicate {
                                    file: self.file.clone(),
                                    what: "aggregate label",
                                    name: label,
                                });
                            }
                        } else {
                            self.expect_sym(":")?;
                            let method = self.word("method name")?;
                            self.expect_sym("(")?;
                            let mut params = Vec::new();
                            if !self.cur.at_sym(")") {
                                params.push(self.word("parameter name")?);
                                while self.cur.eat_sym(",") {
                                    params.push(self.word("parameter name")?);
                                }
                            }
                            self.expect_sym(")")?;
                            self.expect_sym(";")?;
                            if evs
                                .insert(label.clone(), EventSig { method, params })
                                .is_some()
                            {
                                return Err(RuleError::Duplicate {
                                    file: self.file.clone(),
                                    what: "event label",
                                    name: label,
                                });
                            }
                        }
                    }
                    events = Some((evs, aggs));
                }
                "ORDER" => {
                    if order.is_some() {
                        return Err(dup(&self.file));
                    }
                    let expr = self.order_expr()?;
                    self.expect_sym(";")?;
                    order = Some(expr);
                }
                "FORBIDDEN" => {
                    if forbidden.is_some() {
                        return Err(dup(&self.file));
                    }
                    let mut set = BTreeSet::new();
                    while !self.at_section() && !matches!(self.cur.peek().tok, Tok::Eof) {
                        let name = self.word("method name")?;
                        self.expect_sym("/")?;
                        let arity = match self.cur.peek().tok.clone() {
                            Tok::Int(i) if i >= 0 => {
                                self.cur.next();
                                i as usize
                            }
                            other => {
                                return self.err(format!("expected arity, found {other}"));
                            }
                        };
                        self.expect_sym(";")?;
                        set.insert((name, arity));
                    }
                    forbidden = Some(set);
                }
                "CONSTRAINTS" => {
                    if constraints.is_some() {
                        return Err(dup(&self.file));
                    }
                    let mut list = Vec::new();
                    while !self.at_section() && !matches!(self.cur.peek().tok, Tok::Eof) {
                        list.push(self.constraint()?);
                        self.expect_sym(";")?;
                    }
                    constraints = Some(list);
                }
                "REQUIRES" => {
                    if requires.is_some() {
                        return Err(dup(&self.file));
                    }
                    let mut list = Vec::new();
                    while !self.at_section() && !matches!(self.cur.peek().tok, Tok::Eof) {
                        // A guard is present when the identifier is followed
                        // by `in` or `==` rather than `[`.
                        let guarded = matches!(
                            (&self.cur.peek().tok, &self.cur.peek2().tok),
                            (Tok::Word(_), Tok::Word(w2)) if w2 == "in"
                        ) || matches!(
                            (&self.cur.peek().tok, &self.cur.peek2().tok),
                            (Tok::Word(_), Tok::Sym("=="))
                        );
                        let guard = if guarded {
                            let g = self.value_comparison()?;
                            self.expect_sym("=>")?;
                            Some(g)
                        } else {
                            None
                        };
                        let predicate = self.word("predicate name")?;
                        self.expect_sym("[")?;
                        let param = self.word("parameter name")?;
                        self.expect_sym("]")?;
                        self.expect_sym(";")?;
                        list.push(RequiredPredicateSpec {
                            predicate,
                            param,
                            guard,
                        });
                    }
                    requires = Some(list);
                }
                "ENSURES" => {
                    if ensures.is_some() {
                        return Err(dup(&self.file));
                    }
                    let mut list = Vec::new();
                    while !self.at_section() && !matches!(self.cur.peek().tok, Tok::Eof) {
                        let predicate = self.word("predicate name")?;
                        self.expect_sym("[")?;
                        let target = match self.word("predicate target")?.as_str() {
                            "this" => PredicateTarget::This,
                            "return" => PredicateTarget::Return,
                            other => PredicateTarget::Param(other.to_string()),
                        };
                        self.expect_sym("]")?;
                        let after_label = if self.cur.eat_word("after") {
                            Some(self.word("event label")?)
                        } else {
                            None
                        };
                        self.expect_sym(";")?;
                        list.push(EnsuredPredicateSpec {
                            predicate,
                            target,
                            after_label,
                        });
                    }
                    ensures = Some(list);
                }
                other => {
                    return self.err(format!("unknown section `{other}`"));
                }
            }
        }

        let (events, aggregates) = events.ok_or(RuleError::MissingSection {
            file: self.file.clone(),
            section: "EVENTS",
        })?;
        let order = order.ok_or(RuleError::MissingSection {
            file: self.file.clone(),
            section: "ORDER",
        })?;

        let rule = RuleSpec {
            class_name,
            objects: objects.unwrap_or_default(),
            events,
            aggregates,
            order,
            forbidden: forbidden.unwrap_or_default(),
            constraints: constraints.unwrap_or_default(),
            requires: requires.unwrap_or_default(),
            ensures: ensures.unwrap_or_default(),
        };
        validate(&self.file, &rule)?;
        Ok(rule)
    }
}

fn constraint_params<'a>(c: &'a ConstraintExpr, out: &mut Vec<&'a str>) {
    match c {
        ConstraintExpr::Value(vc) => out.push(vc.param()),
        ConstraintExpr::NeverTypeOf { param, .. } | ConstraintExpr::NotHardCoded { param } => {
            out.push(param)
        }
        ConstraintExpr::Implication { guard, consequence } => {
            out.push(guard.param());
            constraint_params(consequence, out);
        }
    }
}

fn validate(file: &str, rule: &RuleSpec) -> Result<(), RuleError> {
    let declared: BTreeSet<&str> = rule.objects.iter().map(|o| o.name.as_str()).collect();
    let undeclared = |param: &str, context: String| RuleError::UndeclaredParameter {
        file: file.to_string(),
        param: param.to_string(),
        context,
    };

    for (label, sig) in &rule.events {
        for p in &sig.params {
            if !declared.contains(p.as_str()) {
                return Err(undeclared(p, format!("event {label}")));
            }
        }
        if rule.aggregates.contains_key(label) {
            return Err(RuleError::Duplicate {
                file: file.to_string(),
                what: "label (event and aggregate)",
                name: label.clone(),
            });
        }
    }
    for (label, members) in &rule.aggregates {
        for m in members {
            if !rule.events.contains_key(m) {
                return Err(RuleError::UnresolvedLabel {
                    file: file.to_string(),
                    label: m.clone(),
                    context: format!("aggregate {label}"),
                });
            }
        }
    }
    for l in rule.order.labels() {
        if !rule.events.contains_key(&l) && !rule.aggregates.contains_key(&l) {
            return Err(RuleError::UnresolvedLabel {
                file: file.to_string(),
                label: l,
                context: "ORDER".to_string(),
            });
        }
    }
    for c in &rule.constraints {
        let mut params = Vec::new();
        constraint_params(c, &mut params);
        for p in params {
            if !declared.contains(p) {
                return Err(undeclared(p, "CONSTRAINTS".to_string()));
            }
        }
    }
    let event_params: BTreeSet<&str> = rule
        .events
        .values()
        .flat_map(|sig| sig.params.iter().map(|p| p.as_str()))
        .collect();
    for r in &rule.requires {
        if !declared.contains(r.param.as_str()) {
            return Err(undeclared(&r.param, "REQUIRES".to_string()));
        }
        if !event_params.contains(r.param.as_str()) {
            return Err(undeclared(
                &r.param,
                "REQUIRES (parameter never bound by an event)".to_string(),
            ));
        }
        if let Some(g) = &r.guard {
            if !declared.contains(g.param()) {
                return Err(undeclared(g.param(), "REQUIRES guard".to_string()));
            }
        }
    }
    for e in &rule.ensures {
        if let PredicateTarget::Param(p) = &e.target {
            if !declared.contains(p.as_str()) {
                return Err(undeclared(p, "ENSURES".to_string()));
            }
        }
        if let Some(l) = &e.after_label {
            if !rule.events.contains_key(l) && !rule.aggregates.contains_key(l) {
                return Err(RuleError::UnresolvedLabel {
                    file: file.to_string(),
                    label: l.clone(),
                    context: "ENSURES after".to_string(),
                });
            }
        }
    }
    Ok(())
}

fn syntax_from_lex(file: &str, e: crate::lex::LexError) -> RuleError {
    RuleError::Syntax {
        file: file.to_string(),
        line: e.line,
        col: e.col,
        message: e.message,
    }
}

/// Parses a single rule document.
pub fn parse_rule(file: &str, text: &str) -> Result<RuleSpec, RuleError> {
    let toks = lex(text).map_err(|e| syntax_from_lex(file, e))?;
    let mut p = Parser {
        file: file.to_string(),
        cur: Cursor::new(toks),
    };
    p.rule()
}

/// Parses a set of named rule documents and checks class-name uniqueness.
pub fn parse_rules(docs: &[(String, String)]) -> Result<Vec<RuleSpec>, RuleError> {
    let mut rules = Vec::new();
    let mut seen: BTreeMap<String, String> = BTreeMap::new();
    for (file, text) in docs {
        let rule = parse_rule(file, text)?;
        if let Some(first) = seen.get(&rule.class_name) {
            return Err(RuleError::DuplicateClass {
                class: rule.class_name,
                first: first.clone(),
                second: file.clone(),
            });
        }
        seen.insert(rule.class_name.clone(), file.clone());
        rules.push(rule);
    }
    Ok(rules)
}

/// Parses a bare ORDER expression; test and tooling helper.
pub fn parse_order_expr(text: &str) -> Result<OrderExpr, RuleError> {
    let toks = lex(text).map_err(|e| syntax_from_lex("<order>", e))?;
    let mut p = Parser {
        file: "<order>".to_string(),
        cur: Cursor::new(toks),
    };
    let expr = p.order_expr()?;
    if !matches!(p.cur.peek().tok, Tok::Eof) {
        return p.err("trailing input after order expression");
    }
    Ok(expr)
}

#[cfg(test)]
mod tests {
    use super::*;

    const CIPHER_RULE: &str = r#"
SPEC Cipher
OBJECTS
    String trans;
    Int mode;
    Key key;
    IvParameterSpec iv;
    Bytes data;
EVENTS
    g: getInstance(trans);
    i1: init(mode, key);
    i2: init(mode, key, iv);
    Init := i1 | i2;
    d: doFinal(data);
ORDER
    g, Init, d*;
CONSTRAINTS
    trans in {"AES/GCM/NoPadding", "AES/CBC/PKCS5Padding"};
    mode in {1, 2};
REQUIRES
    generatedKey[key];
    mode == 1 => preparedIV[iv];
ENSURES
    preparedCipher[this] after Init;
"#;

    #[test]
    fn parses_cipher_shape() {
        let rule = parse_rule("Cipher.crule", CIPHER_RULE).unwrap();
        assert_eq!(rule.class_name, "Cipher");
        assert_eq!(rule.value_constraint_count(), 2);
        assert_eq!(rule.requires.len(), 2);
        assert_eq!(rule.requires.iter().filter(|r| r.guard.is_some()).count(), 1);
        assert_eq!(rule.ensures.len(), 1);
        assert_eq!(rule.events.len(), 4);
        assert_eq!(rule.aggregates.len(), 1);
    }

    #[test]
    fn guarded_requires_has_value_eq_guard() {
        let rule = parse_rule("Cipher.crule", CIPHER_RULE).unwrap();
        let guarded = rule.requires.iter().find(|r| r.guard.is_some()).unwrap();
        assert_eq!(guarded.predicate, "preparedIV");
        assert_eq!(guarded.param, "iv");
        assert_eq!(
            guarded.guard,
            Some(ValueComparison::Eq {
                param: "mode".into(),
                value: LiteralValue::Int(1),
            })
        );
    }

    #[test]
    fn unresolved_order_label_is_rejected() {
        let text = "SPEC A\nEVENTS\n  e: A();\nORDER\n  e, ghost;\n";
        let err = parse_rule("A.crule", text).unwrap_err();
        assert!(matches!(err, RuleError::UnresolvedLabel { label, .. } if label == "ghost"));
    }

    #[test]
    fn undeclared_event_parameter_is_rejected() {
        let text = "SPEC A\nEVENTS\n  e: A(x);\nORDER\n  e;\n";
        let err = parse_rule("A.crule", text).unwrap_err();
        assert!(matches!(err, RuleError::UndeclaredParameter { param, .. } if param == "x"));
    }

    #[test]
    fn duplicate_class_across_files_is_rejected() {
        let doc = "SPEC A\nEVENTS\n  e: A();\nORDER\n  e;\n".to_string();
        let err = parse_rules(&[("one.crule".into(), doc.clone()), ("two.crule".into(), doc)])
            .unwrap_err();
        assert!(matches!(err, RuleError::DuplicateClass { class, .. } if class == "A"));
    }

    #[test]
    fn syntax_error_reports_position() {
        let err = parse_rule("A.crule", "SPEC A\nEVENTS\n  e: (;\n").unwrap_err();
        match err {
            RuleError::Syntax { line, col, .. } => {
                assert_eq!(line, 3);
                assert!(col > 1);
            }
            other => panic!("expected syntax error, got {other:?}"),
        }
    }

    #[test]
    fn pretty_print_round_trips() {
        let rule = parse_rule("Cipher.crule", CIPHER_RULE).unwrap();
        let printed = rule.to_string();
        let reparsed = parse_rule("Cipher.crule", &printed).unwrap();
        assert_eq!(rule, reparsed);
    }

    #[test]
    fn order_expr_parses_and_prints() {
        let e = parse_order_expr("g, (i1 | i2), d*").unwrap();
        assert_eq!(parse_order_expr(&e.to_string()).unwrap(), e);
    }
}
