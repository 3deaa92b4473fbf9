use std::fmt;

use super::Formula;

fn write_joined(f: &mut fmt::Formatter<'_>, operands: &[Formula], sep: &str) -> fmt::Result {
    for (i, operand) in operands.iter().enumerate() {
        if i > 0 {
            f.write_str(sep)?;
        }
        write!(f, "{operand}")?;
    }
    Ok(())
}

/// Writes `formula` without its outermost parentheses.
fn write_bare(f: &mut fmt::Formatter<'_>, formula: &Formula) -> fmt::Result {
    match formula {
        Formula::And(operands) => write_joined(f, operands, " & "),
        Formula::Or(operands) => write_joined(f, operands, " | "),
        Formula::Implies(a, b) => write!(f, "{a} -> {b}"),
        Formula::Until { left, right, interval } => {
            write!(f, "{left} U")?;
            if let Some(i) = interval {
                write!(f, "{i}")?;
            }
            write!(f, " {right}")
        }
        other => write!(f, "{other}"),
    }
}

/// Fully parenthesized ASCII rendering; atoms are left bare and the operand
/// of a temporal prefix reuses the operator's own parentheses.
impl fmt::Display for Formula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Formula::Atom(atom) => write!(f, "{atom}"),
            Formula::Not(operand) => write!(f, "!{operand}"),
            Formula::And(_) | Formula::Or(_) | Formula::Implies(..) | Formula::Until { .. } => {
                f.write_str("(")?;
                write_bare(f, self)?;
                f.write_str(")")
            }
            Formula::Temporal { op, interval, operand } => {
                f.write_str(op.symbol())?;
                if let Some(i) = interval {
                    write!(f, "{i}")?;
                }
                f.write_str("(")?;
                write_bare(f, operand)?;
                f.write_str(")")
            }
        }
    }
}
