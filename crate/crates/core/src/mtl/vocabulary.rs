use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use super::{Formula, TemporalOp};

/// Connectives and temporal operators, as counted by [`collect_vocabulary`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Operator {
    Not,
    And,
    Or,
    Implies,
    G,
    F,
    X,
    P,
    U,
}

impl From<TemporalOp> for Operator {
    fn from(op: TemporalOp) -> Self {
        match op {
            TemporalOp::G => Operator::G,
            TemporalOp::F => Operator::F,
            TemporalOp::X => Operator::X,
            TemporalOp::P => Operator::P,
        }
    }
}

impl Operator {
    pub fn is_temporal(self) -> bool {
        matches!(self, Operator::G | Operator::F | Operator::X | Operator::P | Operator::U)
    }
}

impl fmt::Display for Operator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Operator::Not => "!",
            Operator::And => "&",
            Operator::Or => "|",
            Operator::Implies => "->",
            Operator::G => "G",
            Operator::F => "F",
            Operator::X => "X",
            Operator::P => "P",
            Operator::U => "U",
        })
    }
}

/// Predicates (with arity) and operator occurrence counts of a formula.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Vocabulary {
    pub predicates: BTreeSet<(String, usize)>,
    pub operators: BTreeMap<Operator, usize>,
}

/// Collects every predicate with its arity and the multiset of operators in `f`.
///
/// An n-ary conjunction or disjunction counts once.
pub fn collect_vocabulary(f: &Formula) -> Vocabulary {
    let mut vocab = Vocabulary::default();
    walk(f, &mut vocab);
    vocab
}

fn walk(f: &Formula, vocab: &mut Vocabulary) {
    let mut count = |op: Operator| *vocab.operators.entry(op).or_insert(0) += 1;
    match f {
        Formula::Atom(a) => {
            vocab.predicates.insert((a.predicate.clone(), a.arity()));
        }
        Formula::Not(inner) => {
            count(Operator::Not);
            walk(inner, vocab);
        }
        Formula::And(fs) | Formula::Or(fs) => {
            count(if matches!(f, Formula::And(_)) { Operator::And } else { Operator::Or });
            fs.iter().for_each(|g| walk(g, vocab));
        }
        Formula::Implies(a, b) => {
            count(Operator::Implies);
            walk(a, vocab);
            walk(b, vocab);
        }
        Formula::Temporal { op, operand, .. } => {
            count((*op).into());
            walk(operand, vocab);
        }
        Formula::Until { left, right, .. } => {
            count(Operator::U);
            walk(left, vocab);
            walk(right, vocab);
        }
    }
}
