//! Shared data model: source locations, error reports, predicate instances,
//! analysis configuration, phase timings and chain statistics.
//!
//! Everything here is immutable after construction and freely shareable.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

/// A position in an analyzed program. `statement_id` is the stable ordinal
/// of the statement within the parsed program (textual order, 1-based).
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct SourceLocation {
    pub file: String,
    pub line: u32,
    pub statement_id: u32,
}

impl SourceLocation {
    pub fn new(file: impl Into<String>, line: u32, statement_id: u32) -> Self {
        debug_assert!(line >= 1);
        Self {
            file: file.into(),
            line,
            statement_id,
        }
    }
}

impl fmt::Display for SourceLocation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.file, self.line)
    }
}

/// The seven diagnostic kinds. No analysis stage emits anything else.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ErrorKind {
    Constraint,
    RequiredPredicate,
    Typestate,
    IncompleteOperation,
    HardCoded,
    NeverTypeOf,
    ForbiddenMethod,
}

impl ErrorKind {
    pub const ALL: [ErrorKind; 7] = [
        ErrorKind::Constraint,
        ErrorKind::RequiredPredicate,
        ErrorKind::Typestate,
        ErrorKind::IncompleteOperation,
        ErrorKind::HardCoded,
        ErrorKind::NeverTypeOf,
        ErrorKind::ForbiddenMethod,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            ErrorKind::Constraint => "CONSTRAINT",
            ErrorKind::RequiredPredicate => "REQUIRED_PREDICATE",
            ErrorKind::Typestate => "TYPESTATE",
            ErrorKind::IncompleteOperation => "INCOMPLETE_OPERATION",
            ErrorKind::HardCoded => "HARD_CODED",
            ErrorKind::NeverTypeOf => "NEVER_TYPE_OF",
            ErrorKind::ForbiddenMethod => "FORBIDDEN_METHOD",
        }
    }

    /// Kinds that block a seed from ensuring its predicates. An incomplete
    /// operation does not appear here: the ensuring point itself already
    /// gates on reaching the right state along every path.
    pub fn blocks_ensuring(&self) -> bool {
        matches!(
            self,
            ErrorKind::Constraint
                | ErrorKind::HardCoded
                | ErrorKind::NeverTypeOf
                | ErrorKind::ForbiddenMethod
                | ErrorKind::Typestate
        )
    }
}

impl fmt::Display for ErrorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Stable error identifier. Deterministic function of
/// (kind, location, seed, predicate name); identical inputs yield identical
/// ids on every run and platform.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ErrorId(pub String);

impl fmt::Display for ErrorId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Builds the canonical error id. Two errors differing only in predicate
/// name stay distinct, so two missing predicates at the same call site are
/// counted separately.
pub fn make_error_id(
    kind: ErrorKind,
    location: &SourceLocation,
    seed_id: &str,
    predicate_name: Option<&str>,
) -> ErrorId {
    let mut id = format!("{}:s{}:{}", kind.name(), location.statement_id, seed_id);
    if let Some(pred) = predicate_name {
        id.push(':');
        id.push_str(pred);
    }
    ErrorId(id)
}

/// A literal constant as it appears in rule files and programs. Rule files
/// only ever contain strings and integers; `Bytes` literals come from the
/// program side's `bytes("...")` form.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum LiteralValue {
    Str(String),
    Int(i64),
    Bytes(String),
}

impl LiteralValue {
    /// Static type name of the literal's kind.
    pub fn type_name(&self) -> &'static str {
        match self {
            LiteralValue::Str(_) => "String",
            LiteralValue::Int(_) => "Int",
            LiteralValue::Bytes(_) => "Bytes",
        }
    }
}

impl fmt::Display for LiteralValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LiteralValue::Str(s) => write!(f, "\"{s}\""),
            LiteralValue::Int(i) => write!(f, "{i}"),
            LiteralValue::Bytes(s) => write!(f, "bytes(\"{s}\")"),
        }
    }
}

/// Chain role of an error after link mapping.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Role {
    Root,
    Subsequent,
    Isolated,
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Role::Root => "ROOT",
            Role::Subsequent => "SUBSEQUENT",
            Role::Isolated => "ISOLATED",
        })
    }
}

/// One diagnostic. `preceding_ids` and `subsequent_ids` are exact inverses
/// over the full report set of an analysis; only REQUIRED_PREDICATE errors
/// ever carry preceding links.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorReport {
    pub id: ErrorId,
    pub kind: ErrorKind,
    pub rule_class: String,
    pub seed_id: String,
    pub location: SourceLocation,
    pub message: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub predicate: Option<String>,
    pub preceding_ids: BTreeSet<ErrorId>,
    pub subsequent_ids: BTreeSet<ErrorId>,
    pub role: Role,
}

impl ErrorReport {
    pub fn new(
        kind: ErrorKind,
        location: SourceLocation,
        rule_class: impl Into<String>,
        seed_id: impl Into<String>,
        message: impl Into<String>,
        predicate: Option<String>,
    ) -> Self {
        let seed_id = seed_id.into();
        let id = make_error_id(kind, &location, &seed_id, predicate.as_deref());
        Self {
            id,
            kind,
            rule_class: rule_class.into(),
            seed_id,
            location,
            message: message.into(),
            predicate,
            preceding_ids: BTreeSet::new(),
            subsequent_ids: BTreeSet::new(),
            role: Role::Isolated,
        }
    }
}

/// Whether a predicate instance is a real guarantee or the trace of a
/// failed one.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum PredicateStatus {
    Ensured,
    Hidden,
}

/// A named guarantee attached to a value. A hidden instance records why its
/// producer failed: `cause_error_ids` is non-empty exactly when the status
/// is hidden.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PredicateInstance<V: Ord> {
    pub name: String,
    pub target_value: V,
    pub producing_seed: String,
    pub status: PredicateStatus,
    pub cause_error_ids: BTreeSet<ErrorId>,
}

impl<V: Ord> PredicateInstance<V> {
    pub fn ensured(name: impl Into<String>, target_value: V, producing_seed: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            target_value,
            producing_seed: producing_seed.into(),
            status: PredicateStatus::Ensured,
            cause_error_ids: BTreeSet::new(),
        }
    }

    pub fn hidden(
        name: impl Into<String>,
        target_value: V,
        producing_seed: impl Into<String>,
        cause_error_ids: BTreeSet<ErrorId>,
    ) -> Self {
        debug_assert!(!cause_error_ids.is_empty());
        Self {
            name: name.into(),
            target_value,
            producing_seed: producing_seed.into(),
            status: PredicateStatus::Hidden,
            cause_error_ids,
        }
    }
}

/// Analysis switches. `sed` turns on hidden-predicate cause tracking and
/// chain links; `bet` honours guards on required predicates and needs `sed`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AnalysisConfig {
    pub sed_enabled: bool,
    pub bet_enabled: bool,
    pub max_paths: usize,
    pub collect_timings: bool,
}

impl AnalysisConfig {
    pub const DEFAULT_MAX_PATHS: usize = 4096;

    pub fn new(sed_enabled: bool, bet_enabled: bool) -> Result<Self, InvalidConfig> {
        if bet_enabled && !sed_enabled {
            return Err(InvalidConfig);
        }
        Ok(Self {
            sed_enabled,
            bet_enabled,
            max_paths: Self::DEFAULT_MAX_PATHS,
            collect_timings: false,
        })
    }

    pub fn with_max_paths(mut self, max_paths: usize) -> Self {
        self.max_paths = max_paths;
        self
    }

    pub fn with_timings(mut self, collect: bool) -> Self {
        self.collect_timings = collect;
        self
    }
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        Self {
            sed_enabled: true,
            bet_enabled: true,
            max_paths: Self::DEFAULT_MAX_PATHS,
            collect_timings: false,
        }
    }
}

/// Backward error tracking requires subsequent error detection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
#[error("invalid configuration: bet requires sed to be enabled")]
pub struct InvalidConfig;

/// Wall-clock phase durations in fractional milliseconds.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct PhaseTimings {
    pub rule_parse_ms: f64,
    pub program_parse_ms: f64,
    pub seed_detection_ms: f64,
    pub typestate_ms: f64,
    pub constraints_ms: f64,
    pub propagation_ms: f64,
    pub chain_mapping_ms: f64,
    pub reporting_ms: f64,
    pub total_ms: f64,
}

impl PhaseTimings {
    pub fn phase_sum(&self) -> f64 {
        self.rule_parse_ms
            + self.program_parse_ms
            + self.seed_detection_ms
            + self.typestate_ms
            + self.constraints_ms
            + self.propagation_ms
            + self.chain_mapping_ms
            + self.reporting_ms
    }

    /// (label, value) pairs in pipeline order, total last.
    pub fn entries(&self) -> [(&'static str, f64); 9] {
        [
            ("rule_parse", self.rule_parse_ms),
            ("program_parse", self.program_parse_ms),
            ("seed_detection", self.seed_detection_ms),
            ("typestate", self.typestate_ms),
            ("constraints", self.constraints_ms),
            ("propagation", self.propagation_ms),
            ("chain_mapping", self.chain_mapping_ms),
            ("reporting", self.reporting_ms),
            ("total", self.total_ms),
        ]
    }
}

/// One aggregated edge of the class-level dependency graph.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassDependencyEdge {
    pub from: String,
    pub to: String,
    pub count: u64,
    pub self_loop: bool,
}

/// Aggregate numbers over one analysis run's chain graph.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainStatistics {
    pub total_errors: u64,
    pub per_kind_counts: BTreeMap<ErrorKind, u64>,
    pub per_kind_root_counts: BTreeMap<ErrorKind, u64>,
    pub subsequent_count: u64,
    pub avg_direct_subsequent_per_root: f64,
    pub avg_preceding_per_subsequent: f64,
    pub tree_sizes: Vec<u64>,
    pub trees_depth_ge_3: u64,
    pub class_dependency_edges: Vec<ClassDependencyEdge>,
}

impl ChainStatistics {
    pub fn empty() -> Self {
        Self {
            total_errors: 0,
            per_kind_counts: BTreeMap::new(),
            per_kind_root_counts: BTreeMap::new(),
            subsequent_count: 0,
            avg_direct_subsequent_per_root: 0.0,
            avg_preceding_per_subsequent: 0.0,
            tree_sizes: Vec::new(),
            trees_depth_ge_3: 0,
            class_dependency_edges: Vec::new(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn loc(stmt: u32) -> SourceLocation {
        SourceLocation::new("t.mprog", stmt, stmt)
    }

    #[test]
    fn error_id_is_deterministic() {
        let a = make_error_id(ErrorKind::Constraint, &loc(3), "Cipher#s3", None);
        let b = make_error_id(ErrorKind::Constraint, &loc(3), "Cipher#s3", None);
        assert_eq!(a, b);
    }

    #[test]
    fn predicate_name_distinguishes_ids() {
        let a = make_error_id(
            ErrorKind::RequiredPredicate,
            &loc(11),
            "Cipher#s8",
            Some("generatedKey"),
        );
        let b = make_error_id(
            ErrorKind::RequiredPredicate,
            &loc(11),
            "Cipher#s8",
            Some("preparedIV"),
        );
        assert_ne!(a, b);
    }

    #[test]
    fn config_rejects_bet_without_sed() {
        assert!(AnalysisConfig::new(false, true).is_err());
        assert!(AnalysisConfig::new(true, true).is_ok());
        assert!(AnalysisConfig::new(false, false).is_ok());
    }

    #[test]
    fn kind_names_are_the_seven_tags() {
        let names: Vec<_> = ErrorKind::ALL.iter().map(|k| k.name()).collect();
        assert_eq!(
            names,
            vec![
                "CONSTRAINT",
                "REQUIRED_PREDICATE",
                "TYPESTATE",
                "INCOMPLETE_OPERATION",
                "HARD_CODED",
                "NEVER_TYPE_OF",
                "FORBIDDEN_METHOD",
            ]
        );
    }
}
