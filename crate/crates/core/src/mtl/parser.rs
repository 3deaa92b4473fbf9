//! Recursive descent parser for the concrete MTL syntax.
//!
//! Precedence, strongest first: `!` and temporal prefixes, `&`, `U`, `|`,
//! `->` (right associative). Both ASCII and Unicode spellings of the
//! connectives are accepted.

use std::collections::BTreeSet;
use std::fmt;

use super::{Atom, Formula, Interval, TemporalOp};

/// Maximum nesting of parentheses and unary operators.
const MAX_DEPTH: usize = 128;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParseError {
    /// Byte offset into the input where parsing failed.
    pub offset: usize,
    /// Tokens that would have been accepted at `offset`.
    pub expected: BTreeSet<String>,
    pub message: String,
}

impl ParseError {
    fn new(offset: usize, expected: &[&str], message: impl Into<String>) -> Self {
        ParseError {
            offset,
            expected: expected.iter().map(|s| s.to_string()).collect(),
            message: message.into(),
        }
    }
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "parse error at byte {}: {}", self.offset, self.message)?;
        if !self.expected.is_empty() {
            let expected: Vec<&str> = self.expected.iter().map(String::as_str).collect();
            write!(f, " (expected one of: {})", expected.join(", "))?;
        }
        Ok(())
    }
}

impl std::error::Error for ParseError {}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Tok {
    Ident(String),
    Nat(String),
    LParen,
    RParen,
    LBracket,
    RBracket,
    Comma,
    Not,
    And,
    Or,
    Implies,
    Temporal(TemporalOp),
    Until,
    Eof,
}

impl Tok {
    fn describe(&self) -> String {
        match self {
            Tok::Ident(s) => format!("identifier `{s}`"),
            Tok::Nat(s) => format!("number `{s}`"),
            Tok::LParen => "`(`".into(),
            Tok::RParen => "`)`".into(),
            Tok::LBracket => "`[`".into(),
            Tok::RBracket => "`]`".into(),
            Tok::Comma => "`,`".into(),
            Tok::Not => "`!`".into(),
            Tok::And => "`&`".into(),
            Tok::Or => "`|`".into(),
            Tok::Implies => "`->`".into(),
            Tok::Temporal(op) => format!("`{}`", op.symbol()),
            Tok::Until => "`U`".into(),
            Tok::Eof => "end of input".into(),
        }
    }
}

fn tokenize(input: &str) -> Result<Vec<(usize, Tok)>, ParseError> {
    let mut toks = Vec::new();
    let mut iter = input.char_indices().peekable();
    while let Some(&(start, c)) = iter.peek() {
        if c.is_whitespace() {
            iter.next();
            continue;
        }
        let single = match c {
            '(' => Some(Tok::LParen),
            ')' => Some(Tok::RParen),
            '[' => Some(Tok::LBracket),
            ']' => Some(Tok::RBracket),
            ',' => Some(Tok::Comma),
            '!' | '¬' => Some(Tok::Not),
            '&' | '∧' => Some(Tok::And),
            '|' | '∨' => Some(Tok::Or),
            '→' | '⇒' => Some(Tok::Implies),
            'G' => Some(Tok::Temporal(TemporalOp::G)),
            'F' => Some(Tok::Temporal(TemporalOp::F)),
            'X' => Some(Tok::Temporal(TemporalOp::X)),
            'P' => Some(Tok::Temporal(TemporalOp::P)),
            'U' => Some(Tok::Until),
            _ => None,
        };
        if let Some(tok) = single {
            iter.next();
            toks.push((start, tok));
            continue;
        }
        match c {
            '-' => {
                iter.next();
                match iter.peek() {
                    Some(&(_, '>')) => {
                        iter.next();
                        toks.push((start, Tok::Implies));
                    }
                    _ => return Err(ParseError::new(start + 1, &["->"], "`-` must be followed by `>`")),
                }
            }
            'a'..='z' => {
                let mut end = start;
                while let Some(&(i, ch)) = iter.peek() {
                    if matches!(ch, 'a'..='z' | '0'..='9' | '_') {
                        end = i + ch.len_utf8();
                        iter.next();
                    } else {
                        break;
                    }
                }
                toks.push((start, Tok::Ident(input[start..end].to_string())));
            }
            '0'..='9' => {
                let mut end = start;
                while let Some(&(i, ch)) = iter.peek() {
                    if ch.is_ascii_digit() {
                        end = i + 1;
                        iter.next();
                    } else {
                        break;
                    }
                }
                toks.push((start, Tok::Nat(input[start..end].to_string())));
            }
            other => {
                return Err(ParseError::new(start, &[], format!("unexpected character `{other}`")));
            }
        }
    }
    toks.push((input.len(), Tok::Eof));
    Ok(toks)
}

const UNARY_START: &[&str] = &["!", "G", "F", "X", "P", "(", "identifier"];

struct Parser {
    toks: Vec<(usize, Tok)>,
    pos: usize,
    depth: usize,
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.pos].1
    }

    fn offset(&self) -> usize {
        self.toks[self.pos].0
    }

    fn bump(&mut self) -> Tok {
        let tok = self.toks[self.pos].1.clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        tok
    }

    fn unexpected(&self, expected: &[&str]) -> ParseError {
        ParseError::new(self.offset(), expected, format!("unexpected {}", self.peek().describe()))
    }

    fn expect(&mut self, tok: Tok, name: &str) -> Result<(), ParseError> {
        if *self.peek() == tok {
            self.bump();
            Ok(())
        } else {
            Err(self.unexpected(&[name]))
        }
    }

    fn descend(&mut self) -> Result<(), ParseError> {
        self.depth += 1;
        if self.depth > MAX_DEPTH {
            Err(ParseError::new(self.offset(), &[], "formula nested too deeply"))
        } else {
            Ok(())
        }
    }

    fn formula(&mut self) -> Result<Formula, ParseError> {
        self.implies()
    }

    fn implies(&mut self) -> Result<Formula, ParseError> {
        let lhs = self.or()?;
        if *self.peek() == Tok::Implies {
            self.bump();
            self.descend()?;
            let rhs = self.implies()?;
            self.depth -= 1;
            return Ok(Formula::implies(lhs, rhs));
        }
        Ok(lhs)
    }

    fn or(&mut self) -> Result<Formula, ParseError> {
        let mut operands = vec![self.until()?];
        while *self.peek() == Tok::Or {
            self.bump();
            operands.push(self.until()?);
        }
        Ok(Formula::or(operands))
    }

    fn until(&mut self) -> Result<Formula, ParseError> {
        let lhs = self.and()?;
        if *self.peek() == Tok::Until {
            self.bump();
            let interval = self.interval_opt()?;
            let rhs = self.and()?;
            return Ok(Formula::until(lhs, rhs, interval));
        }
        Ok(lhs)
    }

    fn and(&mut self) -> Result<Formula, ParseError> {
        let mut operands = vec![self.unary()?];
        while *self.peek() == Tok::And {
            self.bump();
            operands.push(self.unary()?);
        }
        Ok(Formula::and(operands))
    }

    fn unary(&mut self) -> Result<Formula, ParseError> {
        self.descend()?;
        let f = match self.peek().clone() {
            Tok::Not => {
                self.bump();
                Formula::not(self.unary()?)
            }
            Tok::Temporal(op) => {
                self.bump();
                let interval = self.interval_opt()?;
                if *self.peek() != Tok::LParen {
                    let mut expected = vec!["("];
                    if interval.is_none() {
                        expected.push("[");
                    }
                    return Err(self.unexpected(&expected));
                }
                self.bump();
                let operand = self.formula()?;
                self.expect(Tok::RParen, ")")?;
                Formula::temporal(op, interval, operand)
            }
            Tok::LParen => {
                self.bump();
                let inner = self.formula()?;
                self.expect(Tok::RParen, ")")?;
                inner
            }
            Tok::Ident(_) => Formula::Atom(self.atom()?),
            _ => return Err(self.unexpected(UNARY_START)),
        };
        self.depth -= 1;
        Ok(f)
    }

    fn atom(&mut self) -> Result<Atom, ParseError> {
        let predicate = match self.bump() {
            Tok::Ident(name) => name,
            _ => unreachable!("atom() called on a non-identifier"),
        };
        let mut args = Vec::new();
        if *self.peek() == Tok::LParen {
            self.bump();
            if *self.peek() != Tok::RParen {
                loop {
                    match self.peek().clone() {
                        Tok::Ident(s) | Tok::Nat(s) => {
                            self.bump();
                            args.push(s);
                        }
                        _ => return Err(self.unexpected(&["identifier", "number"])),
                    }
                    match self.peek() {
                        Tok::Comma => {
                            self.bump();
                        }
                        Tok::RParen => break,
                        _ => return Err(self.unexpected(&[",", ")"])),
                    }
                }
            }
            self.bump();
        }
        Ok(Atom { predicate, args })
    }

    fn interval_opt(&mut self) -> Result<Option<Interval>, ParseError> {
        if *self.peek() != Tok::LBracket {
            return Ok(None);
        }
        let start = self.offset();
        self.bump();
        let lo = self.nat()?;
        self.expect(Tok::Comma, ",")?;
        let hi = self.nat()?;
        self.expect(Tok::RBracket, "]")?;
        Interval::new(lo, hi)
            .map(Some)
            .ok_or_else(|| ParseError::new(start, &[], format!("malformed interval: lower bound {lo} exceeds upper bound {hi}")))
    }

    fn nat(&mut self) -> Result<u64, ParseError> {
        let offset = self.offset();
        match self.peek().clone() {
            Tok::Nat(digits) => {
                self.bump();
                digits
                    .parse()
                    .map_err(|_| ParseError::new(offset, &[], format!("interval bound `{digits}` is out of range")))
            }
            _ => Err(self.unexpected(&["number"])),
        }
    }
}

/// Parses a formula in the concrete MTL syntax.
///
/// ```
/// use traffic_mtl::mtl::{parse_formula, Formula};
///
/// let f = parse_formula("G[0,5](p) | q").unwrap();
/// assert!(matches!(f, Formula::Or(_)));
/// ```
pub fn parse_formula(text: &str) -> Result<Formula, ParseError> {
    let toks = tokenize(text)?;
    let mut parser = Parser { toks, pos: 0, depth: 0 };
    let f = parser.formula()?;
    if *parser.peek() != Tok::Eof {
        return Err(parser.unexpected(&["&", "|", "U", "->", ")", "end of input"]));
    }
    Ok(f)
}

/// Parses a single ground atom such as `turn_signal(ego)`.
pub fn parse_atom(text: &str) -> Result<Atom, ParseError> {
    let toks = tokenize(text)?;
    let mut parser = Parser { toks, pos: 0, depth: 0 };
    if !matches!(parser.peek(), Tok::Ident(_)) {
        return Err(parser.unexpected(&["identifier"]));
    }
    let atom = parser.atom()?;
    if *parser.peek() != Tok::Eof {
        return Err(parser.unexpected(&["end of input"]));
    }
    Ok(atom)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(name: &str) -> Formula {
        Formula::prop(name)
    }

    #[test]
    fn table_row_one() {
        let f = parse_formula("cross(ego,stop_line) -> (in_front(stop_line,ego) & X(!in_front(stop_line,ego)))").unwrap();
        let in_front = Formula::atom("in_front", ["stop_line", "ego"]);
        let expected = Formula::implies(
            Formula::atom("cross", ["ego", "stop_line"]),
            Formula::and([in_front.clone(), Formula::next(None, Formula::not(in_front))]),
        );
        assert_eq!(f, expected);
    }

    #[test]
    fn smallest_formula() {
        assert_eq!(parse_formula("p").unwrap(), p("p"));
        assert_eq!(parse_formula("  p  ").unwrap(), p("p"));
    }

    #[test]
    fn prefix_scope_ends_at_operand() {
        let i = Interval::new(0, 5);
        let outer = parse_formula("G[0,5](p) | q").unwrap();
        let inner = parse_formula("G[0,5](p | q)").unwrap();
        assert_eq!(outer, Formula::or([Formula::always(i, p("p")), p("q")]));
        assert_eq!(inner, Formula::always(i, Formula::or([p("p"), p("q")])));
        assert_ne!(outer, inner);
    }

    #[test]
    fn precedence() {
        // & binds tighter than U, U tighter than |, | tighter than ->
        let f = parse_formula("a & b U c | d -> e -> g").unwrap();
        let until = Formula::until(Formula::and([p("a"), p("b")]), p("c"), None);
        let expected = Formula::implies(Formula::or([until, p("d")]), Formula::implies(p("e"), p("g")));
        assert_eq!(f, expected);
        assert_eq!(parse_formula("!p & q").unwrap(), Formula::and([Formula::not(p("p")), p("q")]));
    }

    #[test]
    fn flattening() {
        let f = parse_formula("(a & b) & (c & d)").unwrap();
        assert_eq!(f, Formula::And(vec![p("a"), p("b"), p("c"), p("d")]));
        let g = parse_formula("a | (b | c)").unwrap();
        assert_eq!(g, Formula::Or(vec![p("a"), p("b"), p("c")]));
    }

    #[test]
    fn unicode_aliases() {
        let ascii = parse_formula("!a & b | c -> d").unwrap();
        assert_eq!(parse_formula("¬a ∧ b ∨ c → d").unwrap(), ascii);
        assert_eq!(parse_formula("¬a ∧ b ∨ c ⇒ d").unwrap(), ascii);
    }

    #[test]
    fn numeric_args_and_nullary_parens() {
        let f = parse_formula("!at_traffic_sign(ego,205)").unwrap();
        assert_eq!(f, Formula::not(Formula::atom("at_traffic_sign", ["ego", "205"])));
        assert_eq!(parse_formula("p()").unwrap(), p("p"));
    }

    #[test]
    fn until_with_interval() {
        let f = parse_formula("a U[2,4] b").unwrap();
        assert_eq!(f, Formula::until(p("a"), p("b"), Interval::new(2, 4)));
        assert!(parse_formula("a U b U c").is_err());
    }

    #[test]
    fn errors_carry_offsets() {
        let e = parse_formula("G(p").unwrap_err();
        assert_eq!(e.offset, 3);
        assert!(e.expected.contains(")"));

        let e = parse_formula("G[5,2](p)").unwrap_err();
        assert_eq!(e.offset, 1);
        assert!(e.message.contains("malformed interval"));

        let e = parse_formula("p ^ q").unwrap_err();
        assert_eq!(e.offset, 2);

        let e = parse_formula("G[0,](p)").unwrap_err();
        assert_eq!(e.offset, 4);
        assert!(e.expected.contains("number"));

        let e = parse_formula("p)").unwrap_err();
        assert_eq!(e.offset, 1);

        let e = parse_formula("").unwrap_err();
        assert_eq!(e.offset, 0);
        assert!(e.expected.contains("identifier"));

        assert!(parse_formula("Gp").is_err());
        assert!(parse_formula("Ego").is_err());
        assert!(parse_formula("p - q").is_err());
        assert!(parse_formula("G[0,99999999999999999999](p)").is_err());
    }

    #[test]
    fn disjunctive_argument_is_rejected() {
        let e = parse_formula("yield(ego,(pedestrian | bicycle))").unwrap_err();
        assert_eq!(e.offset, 10);
    }

    #[test]
    fn deep_nesting_is_an_error_not_a_crash() {
        let deep = format!("{}p{}", "(".repeat(100_000), ")".repeat(100_000));
        assert!(parse_formula(&deep).is_err());
        let negs = format!("{}p", "!".repeat(100_000));
        assert!(parse_formula(&negs).is_err());
        let imps = "p -> ".repeat(100_000) + "p";
        assert!(parse_formula(&imps).is_err());
    }

    #[test]
    fn atoms() {
        assert_eq!(parse_atom("turn_signal(ego)").unwrap(), Atom::new("turn_signal", ["ego"]));
        assert_eq!(parse_atom("p").unwrap(), Atom::new("p", Vec::<String>::new()));
        assert!(parse_atom("!p").is_err());
        assert!(parse_atom("p & q").is_err());
    }
}
