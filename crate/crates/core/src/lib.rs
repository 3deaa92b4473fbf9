//! Metric temporal logic toolkit for formalizing natural-language traffic
//! rules.
//!
//! The crate covers the whole translation loop: the MTL syntax
//! ([`mtl`]), finite-trace semantics for monitoring recorded trajectories
//! ([`semantics`]), canonical forms and mistake classification
//! ([`equiv`]), few-shot and chain-of-thought prompt rendering
//! ([`prompting`]), LLM access with a deterministic replay backend
//! ([`llm`]), sampling with majority vote ([`pipeline`]) and dataset
//! scoring ([`evaluation`]).

pub mod equiv;
pub mod evaluation;
pub mod llm;
pub mod mtl;
pub mod pipeline;
pub mod prompting;
pub mod semantics;

pub use equiv::{canonicalize, classify_error, equivalent, ErrorClass, SwapRule, SwapSet};
pub use mtl::{parse_formula, print_formula, Atom, Formula, Interval, ParseError, TemporalOp};
pub use semantics::{evaluate, monitor, Trace, Verdict};
