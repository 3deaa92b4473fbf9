//! Formula and trace generators plus a brute-force reference evaluator.
//!
//! The reference evaluator expands every temporal operator into an explicit
//! loop over positions, straight from the operator definitions, and shares no
//! code with the library's evaluator.

#![allow(dead_code)]

use rand::seq::SliceRandom;
use rand::Rng;
use traffic_mtl::mtl::{Atom, Formula, Interval, TemporalOp};
use traffic_mtl::semantics::{State, Trace};

pub const TEMPORAL_OPS: [TemporalOp; 4] = [TemporalOp::G, TemporalOp::F, TemporalOp::X, TemporalOp::P];

/// Reference truth value of `f` at position `i` of a trace of length `n`.
/// With `n == 0` every window is empty and atoms are false.
pub fn oracle(f: &Formula, trace: &Trace, i: usize) -> bool {
    let n = trace.states.len() as u64;
    let i = i as u64;
    match f {
        Formula::Atom(a) => i < n && trace.states[i as usize].contains(a),
        Formula::Not(g) => !oracle(g, trace, i as usize),
        Formula::And(gs) => gs.iter().all(|g| oracle(g, trace, i as usize)),
        Formula::Or(gs) => gs.iter().any(|g| oracle(g, trace, i as usize)),
        Formula::Implies(a, b) => !oracle(a, trace, i as usize) || oracle(b, trace, i as usize),
        Formula::Temporal { op, interval, operand } => {
            let (a, b) = bounds(*interval);
            match op {
                TemporalOp::G => {
                    let mut all = true;
                    let mut j = i.saturating_add(a);
                    while j < n && j <= i.saturating_add(b) {
                        all &= oracle(operand, trace, j as usize);
                        j += 1;
                    }
                    all
                }
                TemporalOp::F => {
                    let mut any = false;
                    let mut j = i.saturating_add(a);
                    while j < n && j <= i.saturating_add(b) {
                        any |= oracle(operand, trace, j as usize);
                        j += 1;
                    }
                    any
                }
                TemporalOp::X => i + 1 < n && a <= 1 && 1 <= b && oracle(operand, trace, (i + 1) as usize),
                TemporalOp::P => {
                    let mut any = false;
                    for j in 0..n.min(i + 1) {
                        let back = i - j;
                        if a <= back && back <= b {
                            any |= oracle(operand, trace, j as usize);
                        }
                    }
                    any
                }
            }
        }
        Formula::Until { left, right, interval } => {
            let (a, b) = bounds(*interval);
            let mut any = false;
            for j in i..n {
                let d = j - i;
                if d < a || d > b {
                    continue;
                }
                let mut prefix = true;
                for k in i..j {
                    prefix &= oracle(left, trace, k as usize);
                }
                any |= prefix && oracle(right, trace, j as usize);
            }
            any
        }
    }
}

fn bounds(interval: Option<Interval>) -> (u64, u64) {
    interval.map_or((0, u64::MAX), |iv| (iv.lo(), iv.hi()))
}

pub fn props(names: &[&str]) -> Vec<Atom> {
    names.iter().map(|n| Atom::new(*n, Vec::<String>::new())).collect()
}

/// Every trace over `atoms` with length at most `max_len`.
pub fn all_traces(atoms: &[Atom], max_len: usize) -> Vec<Trace> {
    let valuations = 1usize << atoms.len();
    let mut out = vec![Trace::default()];
    let mut frontier = vec![Vec::<State>::new()];
    for _ in 0..max_len {
        let mut next = Vec::new();
        for prefix in &frontier {
            for mask in 0..valuations {
                let state: State = atoms
                    .iter()
                    .enumerate()
                    .filter(|(k, _)| mask >> k & 1 == 1)
                    .map(|(_, a)| a.clone())
                    .collect();
                let mut states = prefix.clone();
                states.push(state);
                out.push(Trace::new(states.clone()));
                next.push(states);
            }
        }
        frontier = next;
    }
    out
}

/// Every formula over `atoms` with at most `levels` levels of operators,
/// drawing intervals from `intervals`. Binary connectives take two operands.
pub fn all_formulas(atoms: &[Atom], levels: usize, intervals: &[Option<Interval>]) -> Vec<Formula> {
    let mut all: Vec<Formula> = atoms.iter().cloned().map(Formula::Atom).collect();
    for _ in 0..levels {
        let mut next = all.clone();
        for f in &all {
            next.push(Formula::Not(Box::new(f.clone())));
            for op in TEMPORAL_OPS {
                for iv in intervals {
                    next.push(Formula::Temporal {
                        op,
                        interval: *iv,
                        operand: Box::new(f.clone()),
                    });
                }
            }
        }
        for l in &all {
            for r in &all {
                next.push(Formula::And(vec![l.clone(), r.clone()]));
                next.push(Formula::Or(vec![l.clone(), r.clone()]));
                next.push(Formula::Implies(Box::new(l.clone()), Box::new(r.clone())));
                for iv in intervals {
                    next.push(Formula::Until {
                        left: Box::new(l.clone()),
                        right: Box::new(r.clone()),
                        interval: *iv,
                    });
                }
            }
        }
        next.sort_by_key(|f| f.to_string());
        next.dedup();
        all = next;
    }
    all
}

pub fn random_interval<R: Rng>(rng: &mut R, max: u64) -> Option<Interval> {
    if rng.gen_bool(0.4) {
        return None;
    }
    let lo = rng.gen_range(0..=max);
    let hi = rng.gen_range(lo..=max);
    Interval::new(lo, hi)
}

/// Random identifier-shaped atom with up to `max_arity` arguments.
pub fn random_atom<R: Rng>(rng: &mut R, max_arity: usize) -> Atom {
    const PREDICATES: [&str; 6] = ["p", "q", "in_front", "yield", "turn_signal", "at_traffic_sign"];
    const ARGS: [&str; 6] = ["ego", "other", "stop_line", "pedestrian", "205", "0"];
    let predicate = *PREDICATES.choose(rng).unwrap();
    let arity = rng.gen_range(0..=max_arity);
    let args: Vec<&str> = (0..arity).map(|_| *ARGS.choose(rng).unwrap()).collect();
    Atom::new(predicate, args)
}

/// Random formula of depth at most `depth` whose leaves come from `leaf`.
///
/// And/Or operands are never themselves And/Or of the same kind, matching
/// what the parser produces after flattening.
pub fn random_formula<R: Rng>(
    rng: &mut R,
    depth: usize,
    max_interval: u64,
    leaf: &mut impl FnMut(&mut R) -> Atom,
) -> Formula {
    if depth == 0 || rng.gen_bool(0.2) {
        return Formula::Atom(leaf(rng));
    }
    let d = depth - 1;
    match rng.gen_range(0..8) {
        0 => Formula::Not(Box::new(random_formula(rng, d, max_interval, leaf))),
        k @ (1 | 2) => {
            let width = rng.gen_range(2..=3);
            let operands = (0..width)
                .map(|_| loop {
                    let g = random_formula(rng, d, max_interval, leaf);
                    let clash = matches!((&g, k), (Formula::And(_), 1) | (Formula::Or(_), 2));
                    if !clash {
                        break g;
                    }
                })
                .collect();
            if k == 1 {
                Formula::And(operands)
            } else {
                Formula::Or(operands)
            }
        }
        3 => Formula::Implies(
            Box::new(random_formula(rng, d, max_interval, leaf)),
            Box::new(random_formula(rng, d, max_interval, leaf)),
        ),
        4 => Formula::Until {
            left: Box::new(random_formula(rng, d, max_interval, leaf)),
            right: Box::new(random_formula(rng, d, max_interval, leaf)),
            interval: random_interval(rng, max_interval),
        },
        _ => Formula::Temporal {
            op: *TEMPORAL_OPS.choose(rng).unwrap(),
            interval: random_interval(rng, max_interval),
            operand: Box::new(random_formula(rng, d, max_interval, leaf)),
        },
    }
}

pub fn random_trace<R: Rng>(rng: &mut R, atoms: &[Atom], max_len: usize) -> Trace {
    let len = rng.gen_range(0..=max_len);
    let states = (0..len)
        .map(|_| atoms.iter().filter(|_| rng.gen_bool(0.5)).cloned().collect())
        .collect();
    Trace::new(states)
}

/// Positions at which a formula is evaluated: every index, or just 0 on an
/// empty trace.
pub fn positions(trace: &Trace) -> std::ops::Range<usize> {
    0..trace.states.len().max(1)
}
