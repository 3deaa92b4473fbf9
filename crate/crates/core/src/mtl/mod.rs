//! Metric temporal logic abstract syntax.
//!
//! A [`Formula`] is built from ground atoms, the classical connectives and the
//! interval-decorated temporal operators `G`, `F`, `X`, `P` (prefix) and `U`
//! (infix). Intervals are measured in trace steps; a temporal operator without
//! an interval ranges to the end of the trace.

mod parser;
mod printer;
mod vocabulary;

use std::fmt;

use serde::{Deserialize, Serialize};

pub use parser::{parse_atom, parse_formula, ParseError};
pub use vocabulary::{collect_vocabulary, Operator, Vocabulary};

/// A closed interval `[lo, hi]` of trace steps with `lo <= hi`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "RawInterval", into = "RawInterval")]
pub struct Interval {
    lo: u64,
    hi: u64,
}

#[derive(Serialize, Deserialize)]
struct RawInterval {
    lo: u64,
    hi: u64,
}

impl TryFrom<RawInterval> for Interval {
    type Error = String;

    fn try_from(raw: RawInterval) -> Result<Self, Self::Error> {
        Interval::new(raw.lo, raw.hi).ok_or_else(|| format!("interval lower bound {} exceeds upper bound {}", raw.lo, raw.hi))
    }
}

impl From<Interval> for RawInterval {
    fn from(i: Interval) -> Self {
        RawInterval { lo: i.lo, hi: i.hi }
    }
}

impl Interval {
    /// Returns `None` when `lo > hi`.
    pub fn new(lo: u64, hi: u64) -> Option<Self> {
        (lo <= hi).then_some(Interval { lo, hi })
    }

    pub fn lo(&self) -> u64 {
        self.lo
    }

    pub fn hi(&self) -> u64 {
        self.hi
    }

    pub fn contains(&self, step: u64) -> bool {
        self.lo <= step && step <= self.hi
    }
}

impl fmt::Display for Interval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{},{}]", self.lo, self.hi)
    }
}

/// Prefix temporal operators.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum TemporalOp {
    /// Globally: at every position of the window.
    G,
    /// Finally: at some position of the window.
    F,
    /// Next: at the following position.
    X,
    /// Past: at some earlier (or the current) position of the window.
    P,
}

impl TemporalOp {
    pub fn symbol(self) -> &'static str {
        match self {
            TemporalOp::G => "G",
            TemporalOp::F => "F",
            TemporalOp::X => "X",
            TemporalOp::P => "P",
        }
    }
}

/// A predicate applied to constant arguments, e.g. `in_front(stop_line,ego)`.
///
/// Arguments are identifiers or natural-number literals such as a traffic
/// sign number.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Atom {
    pub predicate: String,
    pub args: Vec<String>,
}

impl Atom {
    pub fn new<P, I, S>(predicate: P, args: I) -> Self
    where
        P: Into<String>,
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Atom {
            predicate: predicate.into(),
            args: args.into_iter().map(Into::into).collect(),
        }
    }

    pub fn arity(&self) -> usize {
        self.args.len()
    }
}

impl fmt::Display for Atom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.predicate)?;
        if !self.args.is_empty() {
            write!(f, "({})", self.args.join(","))?;
        }
        Ok(())
    }
}

/// An MTL formula.
///
/// `And` and `Or` always hold at least two operands, none of which is itself
/// an `And` (resp. `Or`); the constructors [`Formula::and`] and
/// [`Formula::or`] flatten nested operands to keep that shape.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Formula {
    Atom(Atom),
    Not(Box<Formula>),
    And(Vec<Formula>),
    Or(Vec<Formula>),
    Implies(Box<Formula>, Box<Formula>),
    Temporal {
        op: TemporalOp,
        interval: Option<Interval>,
        operand: Box<Formula>,
    },
    Until {
        left: Box<Formula>,
        right: Box<Formula>,
        interval: Option<Interval>,
    },
}

impl Formula {
    pub fn atom<P, I, S>(predicate: P, args: I) -> Self
    where
        P: Into<String>,
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Formula::Atom(Atom::new(predicate, args))
    }

    /// Nullary atom.
    pub fn prop(name: impl Into<String>) -> Self {
        Formula::Atom(Atom {
            predicate: name.into(),
            args: Vec::new(),
        })
    }

    #[allow(clippy::should_implement_trait)]
    pub fn not(operand: Formula) -> Self {
        Formula::Not(Box::new(operand))
    }

    /// Conjunction of `operands`, flattening nested conjunctions.
    ///
    /// A single operand is returned unchanged.
    ///
    /// # Panics
    ///
    /// Panics if `operands` is empty.
    pub fn and(operands: impl IntoIterator<Item = Formula>) -> Self {
        let mut flat = Vec::new();
        for f in operands {
            match f {
                Formula::And(inner) => flat.extend(inner),
                other => flat.push(other),
            }
        }
        assert!(!flat.is_empty(), "conjunction needs at least one operand");
        if flat.len() == 1 {
            flat.pop().unwrap()
        } else {
            Formula::And(flat)
        }
    }

    /// Disjunction of `operands`, flattening nested disjunctions.
    ///
    /// # Panics
    ///
    /// Panics if `operands` is empty.
    pub fn or(operands: impl IntoIterator<Item = Formula>) -> Self {
        let mut flat = Vec::new();
        for f in operands {
            match f {
                Formula::Or(inner) => flat.extend(inner),
                other => flat.push(other),
            }
        }
        assert!(!flat.is_empty(), "disjunction needs at least one operand");
        if flat.len() == 1 {
            flat.pop().unwrap()
        } else {
            Formula::Or(flat)
        }
    }

    pub fn implies(antecedent: Formula, consequent: Formula) -> Self {
        Formula::Implies(Box::new(antecedent), Box::new(consequent))
    }

    pub fn temporal(op: TemporalOp, interval: Option<Interval>, operand: Formula) -> Self {
        Formula::Temporal {
            op,
            interval,
            operand: Box::new(operand),
        }
    }

    pub fn always(interval: Option<Interval>, operand: Formula) -> Self {
        Self::temporal(TemporalOp::G, interval, operand)
    }

    pub fn eventually(interval: Option<Interval>, operand: Formula) -> Self {
        Self::temporal(TemporalOp::F, interval, operand)
    }

    pub fn next(interval: Option<Interval>, operand: Formula) -> Self {
        Self::temporal(TemporalOp::X, interval, operand)
    }

    pub fn past(interval: Option<Interval>, operand: Formula) -> Self {
        Self::temporal(TemporalOp::P, interval, operand)
    }

    pub fn until(left: Formula, right: Formula, interval: Option<Interval>) -> Self {
        Formula::Until {
            left: Box::new(left),
            right: Box::new(right),
            interval,
        }
    }

    /// Nesting depth; atoms have depth 0.
    pub fn depth(&self) -> usize {
        match self {
            Formula::Atom(_) => 0,
            Formula::Not(f) | Formula::Temporal { operand: f, .. } => 1 + f.depth(),
            Formula::And(fs) | Formula::Or(fs) => 1 + fs.iter().map(Formula::depth).max().unwrap_or(0),
            Formula::Implies(a, b) | Formula::Until { left: a, right: b, .. } => 1 + a.depth().max(b.depth()),
        }
    }

    /// Every atom occurrence, left to right.
    pub fn atoms(&self) -> Vec<&Atom> {
        let mut out = Vec::new();
        self.visit_atoms(&mut |a| out.push(a));
        out
    }

    fn visit_atoms<'a>(&'a self, visit: &mut impl FnMut(&'a Atom)) {
        match self {
            Formula::Atom(a) => visit(a),
            Formula::Not(f) | Formula::Temporal { operand: f, .. } => f.visit_atoms(visit),
            Formula::And(fs) | Formula::Or(fs) => fs.iter().for_each(|f| f.visit_atoms(visit)),
            Formula::Implies(a, b) | Formula::Until { left: a, right: b, .. } => {
                a.visit_atoms(visit);
                b.visit_atoms(visit);
            }
        }
    }
}

impl std::str::FromStr for Formula {
    type Err = ParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_formula(s)
    }
}

/// Renders `f` in the deterministic ASCII concrete syntax.
pub fn print_formula(f: &Formula) -> String {
    f.to_string()
}

/// `true` if `s` matches `[a-z][a-z0-9_]*`.
pub fn is_identifier(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some('a'..='z')) && chars.all(|c| matches!(c, 'a'..='z' | '0'..='9' | '_'))
}

/// `true` if `s` matches `[0-9]+`.
pub fn is_nat(s: &str) -> bool {
    !s.is_empty() && s.bytes().all(|b| b.is_ascii_digit())
}
