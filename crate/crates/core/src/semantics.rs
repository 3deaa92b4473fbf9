//! Pointwise MTL semantics over finite traces.
//!
//! For a trace of length `n`, a position `i` and an interval `[a,b]`, the
//! future window is `{j : i+a <= j <= i+b, j < n}`; without an interval it
//! is `{j : i <= j < n}`. `G` over an empty window is vacuously true, `F`
//! and `U` over an empty window are false, and `X` is false at the last
//! position. `P[a,b]` looks back over `{j : i-b <= j <= i-a, j >= 0}`.
//!
//! Evaluation is bottom-up: each subformula is turned into a truth vector
//! over all positions, so monitoring is linear in the trace length per
//! subformula.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mtl::{parse_atom, Atom, Formula, Interval, TemporalOp};

/// The set of ground atoms true at one step.
pub type State = BTreeSet<Atom>;

/// A finite sequence of states.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Trace {
    pub states: Vec<State>,
}

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("malformed trace document: {0}")]
    Format(#[from] serde_json::Error),
    #[error("state {state}, atom {index}: `{text}` is not a ground atom: {source}")]
    Atom {
        state: usize,
        index: usize,
        text: String,
        source: crate::mtl::ParseError,
    },
}

#[derive(Serialize, Deserialize)]
struct TraceDocument {
    states: Vec<Vec<String>>,
}

impl Trace {
    pub fn new(states: Vec<State>) -> Self {
        Trace { states }
    }

    /// Builds a trace from per-step atom strings, e.g. `[["p"], [], ["q(a)"]]`.
    pub fn from_atom_strings<S: AsRef<str>>(steps: &[Vec<S>]) -> Result<Self, TraceError> {
        let mut states = Vec::with_capacity(steps.len());
        for (state, atoms) in steps.iter().enumerate() {
            let mut set = State::new();
            for (index, text) in atoms.iter().enumerate() {
                let text = text.as_ref();
                let atom = parse_atom(text).map_err(|source| TraceError::Atom {
                    state,
                    index,
                    text: text.to_string(),
                    source,
                })?;
                set.insert(atom);
            }
            states.push(set);
        }
        Ok(Trace { states })
    }

    /// Parses the `{"states": [[atom, ...], ...]}` document format.
    pub fn from_json(text: &str) -> Result<Self, TraceError> {
        let doc: TraceDocument = serde_json::from_str(text)?;
        Self::from_atom_strings(&doc.states)
    }

    pub fn to_json(&self) -> String {
        let doc = TraceDocument {
            states: self
                .states
                .iter()
                .map(|s| s.iter().map(|a| a.to_string()).collect())
                .collect(),
        };
        serde_json::to_string(&doc).expect("trace documents always serialize")
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn holds_atom(&self, position: usize, atom: &Atom) -> bool {
        self.states.get(position).is_some_and(|s| s.contains(atom))
    }
}

impl Serialize for Trace {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        TraceDocument {
            states: self
                .states
                .iter()
                .map(|s| s.iter().map(|a| a.to_string()).collect())
                .collect(),
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for Trace {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let doc = TraceDocument::deserialize(deserializer)?;
        Trace::from_atom_strings(&doc.states).map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("position {position} is outside a trace of length {len}")]
pub struct PositionOutOfRange {
    pub position: usize,
    pub len: usize,
}

/// Outcome of monitoring a formula over a whole trace.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Verdict {
    pub holds: bool,
    pub at_position: usize,
    pub formula: Formula,
    /// First step at which the obligation fails, when it is violated.
    pub violating_position: Option<usize>,
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match (self.holds, self.violating_position) {
            (true, _) => write!(f, "holds: {}", self.formula),
            (false, Some(pos)) => write!(f, "violated at position {pos}: {}", self.formula),
            (false, None) => write!(f, "violated: {}", self.formula),
        }
    }
}

/// Truth value of `f` at `position` of `trace`.
///
/// On an empty trace only position 0 is accepted; atoms are false there and
/// every temporal window is empty.
pub fn evaluate(f: &Formula, trace: &Trace, position: usize) -> Result<bool, PositionOutOfRange> {
    if trace.is_empty() {
        if position != 0 {
            return Err(PositionOutOfRange { position, len: 0 });
        }
        return Ok(evaluate_empty(f));
    }
    if position >= trace.len() {
        return Err(PositionOutOfRange {
            position,
            len: trace.len(),
        });
    }
    Ok(truth_vector(f, trace)[position])
}

/// Monitors `f` from the start of `trace`.
pub fn monitor(f: &Formula, trace: &Trace) -> Verdict {
    let holds = evaluate(f, trace, 0).expect("position 0 is always valid");
    let violating_position = if holds || trace.is_empty() {
        None
    } else {
        Some(find_violation(f, trace, 0))
    };
    Verdict {
        holds,
        at_position: 0,
        formula: f.clone(),
        violating_position,
    }
}

/// Truth vectors of every distinct subformula, innermost first.
pub fn truth_table(f: &Formula, trace: &Trace) -> Vec<(Formula, Vec<bool>)> {
    let mut rows: Vec<(Formula, Vec<bool>)> = Vec::new();
    collect_rows(f, trace, &mut rows);
    rows
}

fn collect_rows(f: &Formula, trace: &Trace, rows: &mut Vec<(Formula, Vec<bool>)>) {
    match f {
        Formula::Atom(_) => {}
        Formula::Not(g) | Formula::Temporal { operand: g, .. } => collect_rows(g, trace, rows),
        Formula::And(gs) | Formula::Or(gs) => gs.iter().for_each(|g| collect_rows(g, trace, rows)),
        Formula::Implies(a, b) | Formula::Until { left: a, right: b, .. } => {
            collect_rows(a, trace, rows);
            collect_rows(b, trace, rows);
        }
    }
    if !rows.iter().any(|(g, _)| g == f) {
        rows.push((f.clone(), truth_vector(f, trace)));
    }
}

fn find_violation(f: &Formula, trace: &Trace, position: usize) -> usize {
    match f {
        Formula::Temporal {
            op: TemporalOp::G,
            interval,
            operand,
        } => {
            let inner = truth_vector(operand, trace);
            let (lo, hi) = future_window(position, *interval, trace.len());
            (lo..=hi)
                .find(|&j| !inner[j])
                .map(|j| find_violation(operand, trace, j))
                .unwrap_or(position)
        }
        Formula::And(operands) => operands
            .iter()
            .find(|g| !truth_vector(g, trace)[position])
            .map(|g| find_violation(g, trace, position))
            .unwrap_or(position),
        _ => position,
    }
}

fn evaluate_empty(f: &Formula) -> bool {
    match f {
        Formula::Atom(_) => false,
        Formula::Not(g) => !evaluate_empty(g),
        Formula::And(gs) => gs.iter().all(evaluate_empty),
        Formula::Or(gs) => gs.iter().any(evaluate_empty),
        Formula::Implies(a, b) => !evaluate_empty(a) || evaluate_empty(b),
        Formula::Temporal { op: TemporalOp::G, .. } => true,
        Formula::Temporal { .. } | Formula::Until { .. } => false,
    }
}

/// Inclusive future window `[lo, hi]` clipped to the trace; empty when `lo > hi`.
fn future_window(i: usize, interval: Option<Interval>, n: usize) -> (usize, usize) {
    let last = n - 1;
    match interval {
        None => (i, last),
        Some(iv) => {
            let lo = offset(i, iv.lo());
            let hi = offset(i, iv.hi()).min(last);
            (lo, hi)
        }
    }
}

fn offset(i: usize, by: u64) -> usize {
    usize::try_from(by).map_or(usize::MAX, |by| i.saturating_add(by))
}

/// Number of `true` entries in `prefix`-summed range `[lo, hi]`.
fn count(prefix: &[usize], lo: usize, hi: usize) -> usize {
    if lo > hi {
        0
    } else {
        prefix[hi + 1] - prefix[lo]
    }
}

fn prefix_counts(v: &[bool]) -> Vec<usize> {
    let mut prefix = Vec::with_capacity(v.len() + 1);
    prefix.push(0);
    for &b in v {
        prefix.push(prefix.last().unwrap() + usize::from(b));
    }
    prefix
}

fn truth_vector(f: &Formula, trace: &Trace) -> Vec<bool> {
    let n = trace.len();
    match f {
        Formula::Atom(a) => trace.states.iter().map(|s| s.contains(a)).collect(),
        Formula::Not(g) => truth_vector(g, trace).into_iter().map(|b| !b).collect(),
        Formula::And(gs) => {
            let mut out = vec![true; n];
            for g in gs {
                out.iter_mut().zip(truth_vector(g, trace)).for_each(|(o, b)| *o &= b);
            }
            out
        }
        Formula::Or(gs) => {
            let mut out = vec![false; n];
            for g in gs {
                out.iter_mut().zip(truth_vector(g, trace)).for_each(|(o, b)| *o |= b);
            }
            out
        }
        Formula::Implies(a, b) => truth_vector(a, trace)
            .into_iter()
            .zip(truth_vector(b, trace))
            .map(|(a, b)| !a || b)
            .collect(),
        Formula::Temporal { op, interval, operand } => {
            let inner = truth_vector(operand, trace);
            let prefix = prefix_counts(&inner);
            (0..n)
                .map(|i| match op {
                    TemporalOp::G => {
                        let (lo, hi) = future_window(i, *interval, n);
                        lo > hi || count(&prefix, lo, hi) == hi - lo + 1
                    }
                    TemporalOp::F => {
                        let (lo, hi) = future_window(i, *interval, n);
                        count(&prefix, lo, hi) > 0
                    }
                    TemporalOp::X => interval.is_none_or(|iv| iv.contains(1)) && i + 1 < n && inner[i + 1],
                    TemporalOp::P => {
                        let (lo, hi) = match interval {
                            None => (0, Some(i)),
                            Some(iv) => {
                                let hi = usize::try_from(iv.lo()).ok().and_then(|a| i.checked_sub(a));
                                let lo = usize::try_from(iv.hi()).ok().map_or(0, |b| i.saturating_sub(b));
                                (lo, hi)
                            }
                        };
                        hi.is_some_and(|hi| count(&prefix, lo, hi) > 0)
                    }
                })
                .collect()
        }
        Formula::Until { left, right, interval } => {
            let lhs = truth_vector(left, trace);
            let rhs = truth_vector(right, trace);
            let prefix = prefix_counts(&rhs);
            // first_false[i] = smallest k >= i with !lhs[k], or n
            let mut first_false = vec![n; n + 1];
            for i in (0..n).rev() {
                first_false[i] = if lhs[i] { first_false[i + 1] } else { i };
            }
            (0..n)
                .map(|i| {
                    let (lo, hi) = future_window(i, *interval, n);
                    let hi = hi.min(first_false[i]);
                    count(&prefix, lo, hi) > 0
                })
                .collect()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mtl::parse_formula;

    fn trace(steps: &[&[&str]]) -> Trace {
        let steps: Vec<Vec<&str>> = steps.iter().map(|s| s.to_vec()).collect();
        Trace::from_atom_strings(&steps).unwrap()
    }

    fn eval(text: &str, t: &Trace, pos: usize) -> bool {
        evaluate(&parse_formula(text).unwrap(), t, pos).unwrap()
    }

    #[test]
    fn eventually_within_window() {
        let t = trace(&[&[], &["p"], &[]]);
        assert!(eval("F[1,2](p)", &t, 0));
        assert!(!eval("F[2,2](p)", &t, 0));
        assert!(!eval("F[1,2](p)", &t, 1));
    }

    #[test]
    fn globally() {
        let t = trace(&[&["p"], &["p"], &["p"]]);
        assert!(eval("G(p)", &t, 0));
        let t = trace(&[&["p"], &["p"], &[]]);
        assert!(!eval("G(p)", &t, 0));
        assert!(eval("G[0,1](p)", &t, 0));
        // window beyond the end of the trace is vacuous
        assert!(eval("G[5,9](p)", &t, 0));
    }

    #[test]
    fn next_at_end_is_false() {
        let t = trace(&[&[], &["p"]]);
        assert!(eval("X(p)", &t, 0));
        assert!(!eval("X(p)", &t, 1));
        assert!(!eval("X(!p)", &t, 1));
        assert!(eval("X[0,3](p)", &t, 0));
        assert!(!eval("X[2,3](p)", &t, 0));
    }

    #[test]
    fn until_is_non_strict_at_witness() {
        let t = trace(&[&["a"], &["a"], &["b"]]);
        assert!(eval("a U b", &t, 0));
        assert!(eval("a U[2,2] b", &t, 0));
        assert!(!eval("a U[0,1] b", &t, 0));
        let t = trace(&[&["a"], &[], &["b"]]);
        assert!(!eval("a U b", &t, 0));
        // witness at i itself needs no left operand
        let t = trace(&[&["b"]]);
        assert!(eval("a U b", &t, 0));
    }

    #[test]
    fn past() {
        let t = trace(&[&["p"], &[], &[], &[]]);
        assert!(eval("P(p)", &t, 3));
        assert!(eval("P[0,3](p)", &t, 3));
        assert!(!eval("P[0,2](p)", &t, 3));
        assert!(eval("P[3,5](p)", &t, 3));
        assert!(!eval("P[4,5](p)", &t, 3));
        assert!(!eval("P[1,1](p)", &t, 0));
    }

    #[test]
    fn overtaking_needs_recent_signal() {
        let f = "G(overtake(ego,other) -> P[0,3](turn_signal(ego)))";
        let ok = trace(&[
            &[],
            &["turn_signal(ego)"],
            &["overtake(ego,other)"],
            &["overtake(ego,other)"],
            &["overtake(ego,other)"],
            &[],
        ]);
        assert!(eval(f, &ok, 0));
        let late = trace(&[
            &["turn_signal(ego)"],
            &[],
            &["overtake(ego,other)"],
            &["overtake(ego,other)"],
            &["overtake(ego,other)"],
            &[],
        ]);
        assert!(!eval(f, &late, 0));
        let v = monitor(&parse_formula(f).unwrap(), &late);
        assert_eq!(v.violating_position, Some(4));
    }

    #[test]
    fn empty_trace() {
        let empty = Trace::default();
        assert!(monitor(&parse_formula("G(p)").unwrap(), &empty).holds);
        assert!(!monitor(&parse_formula("F(p)").unwrap(), &empty).holds);
        assert!(monitor(&parse_formula("!F(p)").unwrap(), &empty).holds);
        assert!(!monitor(&parse_formula("p").unwrap(), &empty).holds);
        assert_eq!(
            evaluate(&Formula::prop("p"), &empty, 1),
            Err(PositionOutOfRange { position: 1, len: 0 })
        );
    }

    #[test]
    fn position_out_of_range() {
        let t = trace(&[&["p"]]);
        assert_eq!(
            evaluate(&Formula::prop("p"), &t, 1),
            Err(PositionOutOfRange { position: 1, len: 1 })
        );
    }

    #[test]
    fn huge_interval_bounds_do_not_overflow() {
        let t = trace(&[&["p"], &["p"]]);
        let big = u64::MAX;
        assert!(eval(&format!("G[{big},{big}](q)"), &t, 1));
        assert!(!eval(&format!("F[0,{big}](q)"), &t, 0));
        assert!(eval(&format!("P[0,{big}](p)"), &t, 1));
        assert!(!eval(&format!("P[{big},{big}](p)"), &t, 1));
    }

    #[test]
    fn trace_documents() {
        let t = Trace::from_json(r#"{"states": [["turn_signal(ego)"], ["overtake(ego,other)"], []]}"#).unwrap();
        assert_eq!(t.len(), 3);
        assert!(t.holds_atom(1, &Atom::new("overtake", ["ego", "other"])));
        assert_eq!(Trace::from_json(&t.to_json()).unwrap(), t);
        let err = Trace::from_json(r#"{"states": [["ok"], ["Bad"]]}"#).unwrap_err();
        assert!(matches!(err, TraceError::Atom { state: 1, index: 0, .. }));
        assert!(Trace::from_json("[]").is_err());
    }

    #[test]
    fn violation_position() {
        let t = trace(&[&["p"], &["p"], &[], &["p"]]);
        let v = monitor(&parse_formula("G(p)").unwrap(), &t);
        assert!(!v.holds);
        assert_eq!(v.violating_position, Some(2));
        let v = monitor(&parse_formula("G(p) & F(q)").unwrap(), &t);
        assert_eq!(v.violating_position, Some(2));
        assert!(monitor(&parse_formula("F(p)").unwrap(), &t).violating_position.is_none());
    }

    #[test]
    fn table_has_root_last() {
        let f = parse_formula("G(p -> F(q))").unwrap();
        let t = trace(&[&["p"], &["q"]]);
        let rows = truth_table(&f, &t);
        assert_eq!(rows.last().unwrap().0, f);
        assert_eq!(rows.last().unwrap().1, vec![true, true]);
        assert_eq!(rows.len(), 5);
    }
}
