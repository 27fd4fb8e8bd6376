//! Static analysis of API usage against allow-list rules, with error chain
//! detection: hidden predicates connect each missing-guarantee report to
//! the upstream reports that caused it, so root errors can be told apart
//! from subsequent ones.

mod lex;

pub mod model;
pub mod program;
pub mod rules;

pub use model::{
    make_error_id, AnalysisConfig, ChainStatistics, ErrorId, ErrorKind, ErrorReport,
    LiteralValue, PhaseTimings, PredicateInstance, PredicateStatus, Role, SourceLocation,
};
