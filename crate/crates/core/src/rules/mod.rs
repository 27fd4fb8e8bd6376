//! Allow-list rule files: one rule per `.crule` document describing the
//! secure use of one class — its events, call order, value constraints,
//! required predicates and the predicates it can ensure for others.

mod fsm;
mod parser;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use crate::model::LiteralValue;

pub use fsm::{build_fsm, rule_fsm, Fsm, LangResult, StateId, StepResult};
pub use parser::{parse_order_expr, parse_rule, parse_rules, RuleError};

/// One declared object: a type name and the parameter name it binds.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ObjectDecl {
    pub type_name: String,
    pub name: String,
}

/// Method name plus positional parameter names of one event.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EventSig {
    pub method: String,
    pub params: Vec<String>,
}

impl EventSig {
    pub fn arity(&self) -> usize {
        self.params.len()
    }
}

/// Regular expression over event and aggregate labels. Sequencing binds
/// loosest, then alternation, then the postfix repetitions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum OrderExpr {
    Label(String),
    Seq(Vec<OrderExpr>),
    Alt(Vec<OrderExpr>),
    Star(Box<OrderExpr>),
    Plus(Box<OrderExpr>),
    Opt(Box<OrderExpr>),
}

impl OrderExpr {
    /// All labels mentioned at the leaves.
    pub fn labels(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        self.collect_labels(&mut out);
        out
    }

    fn collect_labels(&self, out: &mut BTreeSet<String>) {
        match self {
            OrderExpr::Label(l) => {
                out.insert(l.clone());
            }
            OrderExpr::Seq(parts) | OrderExpr::Alt(parts) => {
                for p in parts {
                    p.collect_labels(out);
                }
            }
            OrderExpr::Star(inner) | OrderExpr::Plus(inner) | OrderExpr::Opt(inner) => {
                inner.collect_labels(out)
            }
        }
    }

    /// Number of leaf positions; bounds the length of a shortest completion
    /// of any live prefix.
    pub fn leaf_count(&self) -> usize {
        match self {
            OrderExpr::Label(_) => 1,
            OrderExpr::Seq(parts) | OrderExpr::Alt(parts) => {
                parts.iter().map(|p| p.leaf_count()).sum()
            }
            OrderExpr::Star(inner) | OrderExpr::Plus(inner) | OrderExpr::Opt(inner) => {
                inner.leaf_count()
            }
        }
    }

    fn fmt_prec(&self, f: &mut fmt::Formatter<'_>, parent: u8) -> fmt::Result {
        // Precedence: seq = 0, alt = 1, rep = 2.
        let prec = match self {
            OrderExpr::Seq(_) => 0,
            OrderExpr::Alt(_) => 1,
            _ => 2,
        };
        let parens = prec < parent;
        if parens {
            f.write_str("(")?;
        }
        match self {
            OrderExpr::Label(l) => f.write_str(l)?,
            OrderExpr::Seq(parts) => {
                for (i, p) in parts.iter().enumerate() {
                    if i > 0 {
                        f.write_str(", ")?;
                    }
                    p.fmt_prec(f, 1)?;
                }
            }
            OrderExpr::Alt(parts) => {
                for (i, p) in parts.iter().enumerate() {
                    if i > 0 {
                        f.write_str(" | ")?;
                    }
                    p.fmt_prec(f, 2)?;
                }
            }
            OrderExpr::Star(inner) => {
                inner.fmt_prec(f, 3)?;
                f.write_str("*")?;
            }
            OrderExpr::Plus(inner) => {
                inner.fmt_prec(f, 3)?;
                f.write_str("+")?;
            }
            OrderExpr::Opt(inner) => {
                inner.fmt_prec(f, 3)?;
                f.write_str("?")?;
            }
        }
        if parens {
            f.write_str(")")?;
        }
        Ok(())
    }
}

impl fmt::Display for OrderExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.fmt_prec(f, 0)
    }
}

/// A comparison of one parameter against literal values. Doubles as the
/// guard form of implications and guarded requirements.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ValueComparison {
    In {
        param: String,
        values: Vec<LiteralValue>,
    },
    Eq {
        param: String,
        value: LiteralValue,
    },
}

impl ValueComparison {
    pub fn param(&self) -> &str {
        match self {
            ValueComparison::In { param, .. } | ValueComparison::Eq { param, .. } => param,
        }
    }

    /// Whether a single literal satisfies the comparison.
    pub fn admits(&self, lit: &LiteralValue) -> bool {
        match self {
            ValueComparison::In { values, .. } => values.contains(lit),
            ValueComparison::Eq { value, .. } => value == lit,
        }
    }
}

impl fmt::Display for ValueComparison {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ValueComparison::In { param, values } => {
                write!(f, "{param} in {{")?;
                for (i, v) in values.iter().enumerate() {
                    if i > 0 {
                        f.write_str(", ")?;
                    }
                    write!(f, "{v}")?;
                }
                f.write_str("}")
            }
            ValueComparison::Eq { param, value } => write!(f, "{param} == {value}"),
        }
    }
}

/// One entry of a rule's CONSTRAINTS section.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ConstraintExpr {
    Value(ValueComparison),
    NeverTypeOf { param: String, type_name: String },
    NotHardCoded { param: String },
    Implication {
        guard: ValueComparison,
        consequence: Box<ConstraintExpr>,
    },
}

impl fmt::Display for ConstraintExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ConstraintExpr::Value(vc) => write!(f, "{vc}"),
            ConstraintExpr::NeverTypeOf { param, type_name } => {
                write!(f, "neverTypeOf({param}, {type_name})")
            }
            ConstraintExpr::NotHardCoded { param } => write!(f, "notHardCoded({param})"),
            ConstraintExpr::Implication { guard, consequence } => {
                write!(f, "{guard} => {consequence}")
            }
        }
    }
}

/// A predicate the rule demands on one of its parameters. A guarded entry
/// is only active while the guard holds (and only when backward error
/// tracking is enabled).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RequiredPredicateSpec {
    pub predicate: String,
    pub param: String,
    pub guard: Option<ValueComparison>,
}

/// What an ensured predicate attaches to.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PredicateTarget {
    This,
    Return,
    Param(String),
}

impl fmt::Display for PredicateTarget {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PredicateTarget::This => f.write_str("this"),
            PredicateTarget::Return => f.write_str("return"),
            PredicateTarget::Param(p) => f.write_str(p),
        }
    }
}

/// A predicate the rule can establish. Without `after_label` the predicate
/// fires on any event that leaves the order automaton in an accepting state.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EnsuredPredicateSpec {
    pub predicate: String,
    pub target: PredicateTarget,
    pub after_label: Option<String>,
}

/// One fully resolved allow-list rule.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RuleSpec {
    pub class_name: String,
    pub objects: Vec<ObjectDecl>,
    pub events: BTreeMap<String, EventSig>,
    pub aggregates: BTreeMap<String, BTreeSet<String>>,
    pub order: OrderExpr,
    pub forbidden: BTreeSet<(String, usize)>,
    pub constraints: Vec<ConstraintExpr>,
    pub requires: Vec<RequiredPredicateSpec>,
    pub ensures: Vec<EnsuredPredicateSpec>,
}

impl RuleSpec {
    /// Event labels denoted by `label`: the label itself for an event, the
    /// member events for an aggregate.
    pub fn expand_label(&self, label: &str) -> BTreeSet<String> {
        if let Some(members) = self.aggregates.get(label) {
            members.clone()
        } else {
            BTreeSet::from([label.to_string()])
        }
    }

    /// Labels of events whose method is the class name (constructor events).
    pub fn constructor_labels(&self) -> BTreeSet<String> {
        self.events
            .iter()
            .filter(|(_, sig)| sig.method == self.class_name)
            .map(|(label, _)| label.clone())
            .collect()
    }

    /// Event label matching a call of `method` with `arity` arguments.
    pub fn event_for_call(&self, method: &str, arity: usize) -> Option<&str> {
        self.events
            .iter()
            .find(|(_, sig)| sig.method == method && sig.arity() == arity)
            .map(|(label, _)| label.as_str())
    }

    pub fn value_constraint_count(&self) -> usize {
        self.constraints
            .iter()
            .filter(|c| matches!(c, ConstraintExpr::Value(_)))
            .count()
    }
}

impl fmt::Display for RuleSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "SPEC {}", self.class_name)?;
        if !self.objects.is_empty() {
            writeln!(f, "OBJECTS")?;
            for o in &self.objects {
                writeln!(f, "    {} {};", o.type_name, o.name)?;
            }
        }
        writeln!(f, "EVENTS")?;
        for (label, sig) in &self.events {
            writeln!(f, "    {}: {}({});", label, sig.method, sig.params.join(", "))?;
        }
        for (label, members) in &self.aggregates {
            let parts: Vec<_> = members.iter().cloned().collect();
            writeln!(f, "    {} := {};", label, parts.join(" | "))?;
        }
        writeln!(f, "ORDER")?;
        writeln!(f, "    {};", self.order)?;
        if !self.forbidden.is_empty() {
            writeln!(f, "FORBIDDEN")?;
            for (name, arity) in &self.forbidden {
                writeln!(f, "    {name}/{arity};")?;
            }
        }
        if !self.constraints.is_empty() {
            writeln!(f, "CONSTRAINTS")?;
            for c in &self.constraints {
                writeln!(f, "    {c};")?;
            }
        }
        if !self.requires.is_empty() {
            writeln!(f, "REQUIRES")?;
            for r in &self.requires {
                match &r.guard {
                    Some(g) => writeln!(f, "    {} => {}[{}];", g, r.predicate, r.param)?,
                    None => writeln!(f, "    {}[{}];", r.predicate, r.param)?,
                }
            }
        }
        if !self.ensures.is_empty() {
            writeln!(f, "ENSURES")?;
            for e in &self.ensures {
                match &e.after_label {
                    Some(l) => writeln!(f, "    {}[{}] after {};", e.predicate, e.target, l)?,
                    None => writeln!(f, "    {}[{}];", e.predicate, e.target)?,
                }
            }
        }
        Ok(())
    }
}
