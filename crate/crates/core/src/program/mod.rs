//! The analyzed mini language: parsing, call inlining and exact execution
//! path enumeration with per-path value identities.
//!
//! The language has no loops, no recursion, no heap. Branches carry no
//! condition; both arms are enumerated. That keeps the set of execution
//! paths finite and exact, so downstream analyses see ground truth instead
//! of an abstraction.

mod parser;
mod paths;

use std::collections::BTreeMap;
use std::fmt;

use crate::model::{LiteralValue, SourceLocation};

pub use parser::{parse_program, ProgramError};
pub use paths::{enumerate_paths, path_product, PathBudgetExceeded};

/// A call argument: a variable reference or an inline literal.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Arg {
    Var(String),
    Literal(LiteralValue),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum StatementKind {
    /// `x = <literal>;`
    Assign { var: String, literal: LiteralValue },
    /// `x = y;`
    Copy { var: String, from: String },
    /// `x = new T(args);`
    New {
        var: String,
        class: String,
        args: Vec<Arg>,
    },
    /// `[x =] T.m(args);`
    StaticCall {
        var: Option<String>,
        class: String,
        method: String,
        args: Vec<Arg>,
    },
    /// `[x =] r.m(args);`
    InstanceCall {
        var: Option<String>,
        receiver: String,
        method: String,
        args: Vec<Arg>,
    },
    /// `[x =] f(args);`
    UserCall {
        var: Option<String>,
        function: String,
        args: Vec<Arg>,
    },
    /// `return x;`
    Return { var: String },
    /// `if { ... } else { ... }` — no condition, both arms are possible.
    Branch {
        then_block: Vec<Statement>,
        else_block: Vec<Statement>,
    },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Statement {
    /// Stable ordinal within the program, textual order, 1-based.
    pub id: u32,
    pub line: u32,
    pub kind: StatementKind,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FunctionDef {
    pub name: String,
    pub params: Vec<String>,
    pub body: Vec<Statement>,
    pub line: u32,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Program {
    pub file: String,
    pub functions: BTreeMap<String, FunctionDef>,
    /// Function names in source order.
    pub function_order: Vec<String>,
    pub statement_count: u32,
}

impl Program {
    pub fn entry(&self) -> &FunctionDef {
        &self.functions["main"]
    }

    pub fn location(&self, stmt: &Statement) -> SourceLocation {
        SourceLocation::new(self.file.clone(), stmt.line, stmt.id)
    }

    /// All statements, branch bodies included, in textual order.
    pub fn all_statements(&self) -> Vec<&Statement> {
        fn collect<'a>(stmts: &'a [Statement], out: &mut Vec<&'a Statement>) {
            for s in stmts {
                out.push(s);
                if let StatementKind::Branch {
                    then_block,
                    else_block,
                } = &s.kind
                {
                    collect(then_block, out);
                    collect(else_block, out);
                }
            }
        }
        let mut out = Vec::new();
        for name in &self.function_order {
            collect(&self.functions[name].body, &mut out);
        }
        out
    }
}

/// Identity of a runtime value along a path: the statement that created it
/// plus the inline context (call-site statement ids, outermost first).
/// Copies, returns and parameter bindings never mint a new identity. `slot`
/// disambiguates several values born at one statement (inline literal
/// arguments take slots above zero).
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ValueId {
    pub created_at: u32,
    pub context: Vec<u32>,
    pub slot: u8,
}

impl ValueId {
    pub fn new(created_at: u32, context: Vec<u32>, slot: u8) -> Self {
        Self {
            created_at,
            context,
            slot,
        }
    }
}

impl fmt::Display for ValueId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "s{}", self.created_at)?;
        if self.slot > 0 {
            write!(f, ".{}", self.slot)?;
        }
        if !self.context.is_empty() {
            let ctx: Vec<String> = self.context.iter().map(|c| format!("s{c}")).collect();
            write!(f, "[{}]", ctx.join(","))?;
        }
        Ok(())
    }
}

/// Result of literal extraction for one value on one path.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Extraction {
    Literals(std::collections::BTreeSet<LiteralValue>),
    Unknown,
}

impl Extraction {
    pub fn is_unknown(&self) -> bool {
        matches!(self, Extraction::Unknown)
    }
}

/// What is known about a value on a path. `literals: None` means some
/// contributing definition is an opaque call result.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ValueFacts {
    pub literals: Option<std::collections::BTreeSet<LiteralValue>>,
    pub types: std::collections::BTreeSet<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CallKind {
    New,
    Static,
    Instance,
}

/// A resolved call occurrence on a path.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CallStep {
    pub kind: CallKind,
    /// Class name for `New` and `Static` calls.
    pub class: Option<String>,
    /// Receiver value for `Instance` calls.
    pub receiver: Option<ValueId>,
    /// Method name; the class name for constructor calls.
    pub method: String,
    pub args: Vec<ValueId>,
    /// The call's result value, bound to a variable or discarded.
    pub result: ValueId,
}

/// One executed statement instance on a path.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PathStep {
    pub statement_id: u32,
    pub location: SourceLocation,
    pub context: Vec<u32>,
    pub call: Option<CallStep>,
}

/// One fully inlined, branch-resolved execution of `main`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExecutionPath {
    pub id: usize,
    pub steps: Vec<PathStep>,
    facts: BTreeMap<ValueId, ValueFacts>,
}

impl ExecutionPath {
    /// Literal constants reaching `value` on this path, or `Unknown` when
    /// any contributing definition is an opaque call result.
    pub fn extract_literals(&self, value: &ValueId) -> Extraction {
        match self.facts.get(value).and_then(|f| f.literals.clone()) {
            Some(lits) => Extraction::Literals(lits),
            None => Extraction::Unknown,
        }
    }

    /// Static types of `value`: literal kinds, allocation classes and the
    /// class of static factory results. Empty means untypeable.
    pub fn static_type(&self, value: &ValueId) -> std::collections::BTreeSet<String> {
        self.facts
            .get(value)
            .map(|f| f.types.clone())
            .unwrap_or_default()
    }

    pub fn facts(&self) -> &BTreeMap<ValueId, ValueFacts> {
        &self.facts
    }

    /// Whether this path executes the statement instance (id + context).
    pub fn contains_instance(&self, statement_id: u32, context: &[u32]) -> bool {
        self.steps
            .iter()
            .any(|s| s.statement_id == statement_id && s.context == context)
    }
}
