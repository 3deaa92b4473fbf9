//! Canonical forms, "same logic" equivalence and the mistake taxonomy.
//!
//! Two formulas are equivalent when their canonical forms are structurally
//! equal. Canonicalization is syntactic: it removes implications, pushes
//! negation inward (through the connectives and the `G`/`F` dual pair),
//! drops double negation, flattens and sorts conjunctions and disjunctions,
//! and rewrites every atom to the smallest representative of its class under
//! the configured predicate swap rules. Distributivity and other semantic
//! rewrites are deliberately not applied.

use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mtl::{Atom, Formula, Interval, Operator, TemporalOp};

/// A declared predicate symmetry: `from(x0..xn)` is the same fact as
/// `to(x[perm[0]]..x[perm[n]])`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SwapRule {
    pub from: String,
    pub to: String,
    pub perm: Vec<usize>,
}

impl SwapRule {
    pub fn new(from: impl Into<String>, to: impl Into<String>, perm: Vec<usize>) -> Self {
        SwapRule {
            from: from.into(),
            to: to.into(),
            perm,
        }
    }

    fn inverse(&self) -> SwapRule {
        let mut inv = vec![0; self.perm.len()];
        for (i, &p) in self.perm.iter().enumerate() {
            inv[p] = i;
        }
        SwapRule {
            from: self.to.clone(),
            to: self.from.clone(),
            perm: inv,
        }
    }

    fn is_permutation(&self) -> bool {
        let mut seen = vec![false; self.perm.len()];
        self.perm.iter().all(|&p| p < seen.len() && !std::mem::replace(&mut seen[p], true))
    }
}

#[derive(Debug, Error)]
pub enum SwapError {
    #[error("swap rule {from} -> {to}: {perm:?} is not a permutation")]
    NotAPermutation { from: String, to: String, perm: Vec<usize> },
    #[error("swap rule {from} -> {to} permutes {expected} arguments but `{atom}` has {found}")]
    SwapArityMismatch {
        from: String,
        to: String,
        atom: String,
        expected: usize,
        found: usize,
    },
    #[error("cannot read swap rules: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed swap rule file: {0}")]
    Format(#[from] serde_json::Error),
}

/// Symmetric-closed set of swap rules, indexed by source predicate.
#[derive(Debug, Clone, Default)]
pub struct SwapSet {
    rules: Vec<SwapRule>,
    by_predicate: HashMap<String, Vec<SwapRule>>,
}

impl SwapSet {
    pub fn empty() -> Self {
        Self::default()
    }

    /// Validates `rules` and adds the inverse of each one.
    pub fn new(rules: impl IntoIterator<Item = SwapRule>) -> Result<Self, SwapError> {
        let mut set = SwapSet::default();
        for rule in rules {
            if !rule.is_permutation() {
                return Err(SwapError::NotAPermutation {
                    from: rule.from,
                    to: rule.to,
                    perm: rule.perm,
                });
            }
            let inverse = rule.inverse();
            for r in [rule.clone(), inverse] {
                let entry = set.by_predicate.entry(r.from.clone()).or_default();
                if !entry.contains(&r) {
                    entry.push(r);
                }
            }
            set.rules.push(rule);
        }
        Ok(set)
    }

    /// Parses a JSON array of `{from, to, perm}` records.
    pub fn from_json(text: &str) -> Result<Self, SwapError> {
        let rules: Vec<SwapRule> = serde_json::from_str(text)?;
        Self::new(rules)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, SwapError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    /// The rules as configured, without derived inverses.
    pub fn rules(&self) -> &[SwapRule] {
        &self.rules
    }

    /// Smallest `(predicate, args)` reachable from `atom` through the rules.
    ///
    /// With `strict`, a rule whose permutation length differs from the
    /// atom's arity is an error; otherwise such rules are skipped.
    fn representative(&self, atom: &Atom, strict: bool) -> Result<Atom, SwapError> {
        if !self.by_predicate.contains_key(&atom.predicate) {
            return Ok(atom.clone());
        }
        let mut seen: BTreeSet<Atom> = BTreeSet::from([atom.clone()]);
        let mut queue = VecDeque::from([atom.clone()]);
        while let Some(current) = queue.pop_front() {
            for rule in self.by_predicate.get(&current.predicate).into_iter().flatten() {
                if rule.perm.len() != current.arity() {
                    if strict {
                        return Err(SwapError::SwapArityMismatch {
                            from: rule.from.clone(),
                            to: rule.to.clone(),
                            atom: current.to_string(),
                            expected: rule.perm.len(),
                            found: current.arity(),
                        });
                    }
                    continue;
                }
                let next = Atom {
                    predicate: rule.to.clone(),
                    args: rule.perm.iter().map(|&i| current.args[i].clone()).collect(),
                };
                if seen.insert(next.clone()) {
                    queue.push_back(next);
                }
            }
        }
        Ok(seen.into_iter().next().expect("seed atom is always present"))
    }
}

/// Canonical form of `f` under `swaps`; idempotent.
pub fn canonicalize(f: &Formula, swaps: &SwapSet) -> Result<Formula, SwapError> {
    Canonicalizer { swaps, strict: true }.run(f, false)
}

/// Like [`canonicalize`], but swap rules whose permutation does not fit an
/// atom's arity are skipped instead of reported.
pub fn canonicalize_lenient(f: &Formula, swaps: &SwapSet) -> Formula {
    Canonicalizer { swaps, strict: false }
        .run(f, false)
        .expect("lenient canonicalization is total")
}

/// `true` iff `a` and `b` have structurally equal canonical forms.
pub fn equivalent(a: &Formula, b: &Formula, swaps: &SwapSet) -> Result<bool, SwapError> {
    Ok(canonicalize(a, swaps)? == canonicalize(b, swaps)?)
}

struct Canonicalizer<'a> {
    swaps: &'a SwapSet,
    strict: bool,
}

impl Canonicalizer<'_> {
    /// Canonical form of `f`, or of `!f` when `negated`.
    fn run(&self, f: &Formula, negated: bool) -> Result<Formula, SwapError> {
        let wrap = |g: Formula| if negated { Formula::not(g) } else { g };
        Ok(match f {
            Formula::Atom(a) => wrap(Formula::Atom(self.swaps.representative(a, self.strict)?)),
            Formula::Not(g) => self.run(g, !negated)?,
            Formula::And(gs) | Formula::Or(gs) => {
                let parts = gs.iter().map(|g| self.run(g, negated)).collect::<Result<Vec<_>, _>>()?;
                // De Morgan: a negated conjunction becomes a disjunction and vice versa
                if matches!(f, Formula::And(_)) != negated {
                    sorted_and(parts)
                } else {
                    sorted_or(parts)
                }
            }
            Formula::Implies(a, b) => {
                if negated {
                    sorted_and(vec![self.run(a, false)?, self.run(b, true)?])
                } else {
                    sorted_or(vec![self.run(a, true)?, self.run(b, false)?])
                }
            }
            Formula::Temporal { op, interval, operand } => match (op, negated) {
                (TemporalOp::G, true) => Formula::eventually(*interval, self.run(operand, true)?),
                (TemporalOp::F, true) => Formula::always(*interval, self.run(operand, true)?),
                _ => wrap(Formula::temporal(*op, *interval, self.run(operand, false)?)),
            },
            Formula::Until { left, right, interval } => {
                wrap(Formula::until(self.run(left, false)?, self.run(right, false)?, *interval))
            }
        })
    }
}

fn sort_operands(operands: Vec<Formula>) -> Vec<Formula> {
    let mut keyed: Vec<(String, Formula)> = operands.into_iter().map(|f| (f.to_string(), f)).collect();
    keyed.sort_by(|a, b| a.0.cmp(&b.0));
    keyed.into_iter().map(|(_, f)| f).collect()
}

fn sorted_and(parts: Vec<Formula>) -> Formula {
    match Formula::and(parts) {
        Formula::And(ops) => Formula::And(sort_operands(ops)),
        single => single,
    }
}

fn sorted_or(parts: Vec<Formula>) -> Formula {
    match Formula::or(parts) {
        Formula::Or(ops) => Formula::Or(sort_operands(ops)),
        single => single,
    }
}

/// Mistake categories, in decreasing priority.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorClass {
    /// The output did not parse (the "unknown-template" category).
    GrammarViolation,
    WrongTemporalOperator,
    WrongPredicate,
    WrongArgumentOrder,
    WrongLogicalConnective,
    Correct,
}

impl ErrorClass {
    pub const ALL: [ErrorClass; 6] = [
        ErrorClass::GrammarViolation,
        ErrorClass::WrongTemporalOperator,
        ErrorClass::WrongPredicate,
        ErrorClass::WrongArgumentOrder,
        ErrorClass::WrongLogicalConnective,
        ErrorClass::Correct,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ErrorClass::GrammarViolation => "grammar_violation",
            ErrorClass::WrongTemporalOperator => "wrong_temporal_operator",
            ErrorClass::WrongPredicate => "wrong_predicate",
            ErrorClass::WrongArgumentOrder => "wrong_argument_order",
            ErrorClass::WrongLogicalConnective => "wrong_logical_connective",
            ErrorClass::Correct => "correct",
        }
    }
}

impl fmt::Display for ErrorClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for ErrorClass {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ErrorClass::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| format!("unknown error class `{s}`"))
    }
}

#[derive(Default)]
struct Features {
    temporal: Vec<(Operator, Option<Interval>)>,
    predicates: BTreeSet<(String, usize)>,
    arguments: BTreeMap<(String, usize), BTreeSet<Vec<String>>>,
}

fn features(f: &Formula) -> Features {
    fn walk(f: &Formula, out: &mut Features) {
        match f {
            Formula::Atom(a) => {
                let key = (a.predicate.clone(), a.arity());
                out.predicates.insert(key.clone());
                out.arguments.entry(key).or_default().insert(a.args.clone());
            }
            Formula::Not(g) => walk(g, out),
            Formula::And(gs) | Formula::Or(gs) => gs.iter().for_each(|g| walk(g, out)),
            Formula::Implies(a, b) => {
                walk(a, out);
                walk(b, out);
            }
            Formula::Temporal { op, interval, operand } => {
                out.temporal.push(((*op).into(), *interval));
                walk(operand, out);
            }
            Formula::Until { left, right, interval } => {
                out.temporal.push((Operator::U, *interval));
                walk(left, out);
                walk(right, out);
            }
        }
    }
    let mut out = Features::default();
    walk(f, &mut out);
    out.temporal.sort();
    out
}

/// Classifies `candidate` against `gold`; `None` means the output did not parse.
///
/// Swap rules whose arity does not fit an atom are skipped here rather than
/// reported, so classification is total.
pub fn classify_error(gold: &Formula, candidate: Option<&Formula>, swaps: &SwapSet) -> ErrorClass {
    let Some(candidate) = candidate else {
        return ErrorClass::GrammarViolation;
    };
    let gold = canonicalize_lenient(gold, swaps);
    let cand = canonicalize_lenient(candidate, swaps);
    if gold == cand {
        return ErrorClass::Correct;
    }
    let (g, c) = (features(&gold), features(&cand));
    if g.temporal != c.temporal {
        ErrorClass::WrongTemporalOperator
    } else if g.predicates != c.predicates {
        ErrorClass::WrongPredicate
    } else if g.arguments != c.arguments {
        ErrorClass::WrongArgumentOrder
    } else {
        ErrorClass::WrongLogicalConnective
    }
}
