//! Exact arithmetic expressions: AST, parser, printer, and evaluator.
//!
//! The grammar covers what arithmetic transcripts actually contain — integer
//! literals (with optional thousands-separator commas), the four binary
//! operators (ASCII and the unicode `×`/`÷` variants), unary minus, and
//! parentheses. Evaluation is exact over arbitrary-precision rationals, so
//! operands near 1e20 and long division chains introduce no rounding.
//!
//! The printer and parser are inverses: `parse_expression(&format!("{e}"))`
//! reconstructs `e` for every tree (property-tested below). Decimal literals
//! are deliberately *not* part of the expression grammar; they occur in
//! transcripts only as claimed results and final answers, which are parsed by
//! [`decimal_to_rational`].

use std::fmt;

use num_bigint::{BigInt, BigUint};
use num_rational::BigRational;
use num_traits::{Signed, Zero};
use thiserror::Error;

use crate::types::rational_abs_rounded;

/// Binary arithmetic operators.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
}

impl BinOp {
    /// Binding strength: additive 1, multiplicative 2.
    fn prec(self) -> u8 {
        match self {
            BinOp::Add | BinOp::Sub => 1,
            BinOp::Mul | BinOp::Div => 2,
        }
    }

    fn symbol(self) -> char {
        match self {
            BinOp::Add => '+',
            BinOp::Sub => '-',
            BinOp::Mul => '*',
            BinOp::Div => '/',
        }
    }
}

/// An arithmetic expression tree.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Expr {
    Int(BigInt),
    Bin {
        op: BinOp,
        lhs: Box<Expr>,
        rhs: Box<Expr>,
    },
}

impl Expr {
    pub fn int<T: Into<BigInt>>(v: T) -> Expr {
        Expr::Int(v.into())
    }

    pub fn bin(op: BinOp, lhs: Expr, rhs: Expr) -> Expr {
        Expr::Bin {
            op,
            lhs: Box::new(lhs),
            rhs: Box::new(rhs),
        }
    }

    /// True when the tree contains at least one operator (i.e. is not a bare
    /// literal). Used by the trace scanner to reject operand fragments.
    pub fn is_compound(&self) -> bool {
        matches!(self, Expr::Bin { .. })
    }

    fn prec(&self) -> u8 {
        match self {
            Expr::Int(_) => u8::MAX,
            Expr::Bin { op, .. } => op.prec(),
        }
    }
}

/// Parse or evaluation failure, with the byte offset into the original input
/// where applicable.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ExprError {
    #[error("syntax error at byte {offset}: {message}")]
    Syntax { offset: usize, message: String },
    #[error("unsupported token `{token}` at byte {offset}")]
    UnsupportedToken { offset: usize, token: String },
    #[error("division by zero in `{expr}`")]
    DivisionByZero { expr: String },
}

// ---------------------------------------------------------------------------
// Lexer
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(BigInt),
    Plus,
    Minus,
    Star,
    Slash,
    LParen,
    RParen,
}

fn lex(input: &str) -> Result<Vec<(Tok, usize)>, ExprError> {
    let mut toks = Vec::new();
    let bytes = input.as_bytes();
    let mut chars = input.char_indices().peekable();
    while let Some(&(i, c)) = chars.peek() {
        match c {
            ' ' | '\t' => {
                chars.next();
            }
            '+' => {
                chars.next();
                toks.push((Tok::Plus, i));
            }
            '-' | '−' => {
                chars.next();
                toks.push((Tok::Minus, i));
            }
            '*' | '×' => {
                chars.next();
                toks.push((Tok::Star, i));
            }
            '/' | '÷' => {
                chars.next();
                toks.push((Tok::Slash, i));
            }
            '(' => {
                chars.next();
                toks.push((Tok::LParen, i));
            }
            ')' => {
                chars.next();
                toks.push((Tok::RParen, i));
            }
            '0'..='9' => {
                let mut digits = String::new();
                while let Some(&(j, d)) = chars.peek() {
                    if d.is_ascii_digit() {
                        digits.push(d);
                        chars.next();
                    } else if d == ',' && bytes.get(j + 1).is_some_and(|b| b.is_ascii_digit()) {
                        // Thousands separator: swallow the comma, keep lexing
                        // the same number.
                        chars.next();
                    } else {
                        break;
                    }
                }
                let n: BigInt = digits.parse().expect("digit string parses");
                toks.push((Tok::Num(n), i));
            }
            other => {
                return Err(ExprError::UnsupportedToken {
                    offset: i,
                    token: other.to_string(),
                });
            }
        }
    }
    Ok(toks)
}

// ---------------------------------------------------------------------------
// Parser (recursive descent, left-associative)
// ---------------------------------------------------------------------------

struct Parser<'a> {
    toks: &'a [(Tok, usize)],
    pos: usize,
    input_len: usize,
}

impl<'a> Parser<'a> {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|(t, _)| t)
    }

    fn offset(&self) -> usize {
        self.toks
            .get(self.pos)
            .map(|(_, o)| *o)
            .unwrap_or(self.input_len)
    }

    fn bump(&mut self) -> Option<Tok> {
        let t = self.toks.get(self.pos).map(|(t, _)| t.clone());
        if t.is_some() {
            self.pos += 1;
        }
        t
    }

    fn err(&self, message: &str) -> ExprError {
        ExprError::Syntax {
            offset: self.offset(),
            message: message.to_string(),
        }
    }

    fn expr(&mut self) -> Result<Expr, ExprError> {
        let mut lhs = self.term()?;
        loop {
            let op = match self.peek() {
                Some(Tok::Plus) => BinOp::Add,
                Some(Tok::Minus) => BinOp::Sub,
                _ => break,
            };
            self.bump();
            let rhs = self.term()?;
            lhs = Expr::bin(op, lhs, rhs);
        }
        Ok(lhs)
    }

    fn term(&mut self) -> Result<Expr, ExprError> {
        let mut lhs = self.factor()?;
        loop {
            let op = match self.peek() {
                Some(Tok::Star) => BinOp::Mul,
                Some(Tok::Slash) => BinOp::Div,
                _ => break,
            };
            self.bump();
            let rhs = self.factor()?;
            lhs = Expr::bin(op, lhs, rhs);
        }
        Ok(lhs)
    }

    fn factor(&mut self) -> Result<Expr, ExprError> {
        if matches!(self.peek(), Some(Tok::Minus)) {
            self.bump();
            // A minus sign in operand position negates: literals fold to
            // negative literals, anything else becomes `0 - e`.
            return Ok(match self.factor()? {
                Expr::Int(n) => Expr::Int(-n),
                e => Expr::bin(BinOp::Sub, Expr::int(0), e),
            });
        }
        self.primary()
    }

    fn primary(&mut self) -> Result<Expr, ExprError> {
        match self.bump() {
            Some(Tok::Num(n)) => Ok(Expr::Int(n)),
            Some(Tok::LParen) => {
                let e = self.expr()?;
                if matches!(self.peek(), Some(Tok::RParen)) {
                    self.bump();
                    Ok(e)
                } else {
                    Err(self.err("expected `)`"))
                }
            }
            Some(_) => {
                self.pos -= 1;
                Err(self.err("expected a number or `(`"))
            }
            None => Err(self.err("expected a number or `(`, found end of input")),
        }
    }
}

/// Parse an arithmetic expression. Errors carry the byte offset into `input`.
pub fn parse_expression(input: &str) -> Result<Expr, ExprError> {
    let toks = lex(input)?;
    if toks.is_empty() {
        return Err(ExprError::Syntax {
            offset: 0,
            message: "empty expression".to_string(),
        });
    }
    let mut p = Parser {
        toks: &toks,
        pos: 0,
        input_len: input.len(),
    };
    let e = p.expr()?;
    if p.pos != toks.len() {
        return Err(p.err("unexpected trailing token"));
    }
    Ok(e)
}

// ---------------------------------------------------------------------------
// Printer
// ---------------------------------------------------------------------------

impl fmt::Display for Expr {
    /// Minimal-parenthesis form. With left-associative parsing, a left child
    /// needs parentheses only when it binds more loosely than its parent, a
    /// right child also when it binds equally (so `a - (b - c)` survives);
    /// negative literals on the right are parenthesized to keep `5 - (-3)`
    /// unambiguous.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Int(n) => write!(f, "{n}"),
            Expr::Bin { op, lhs, rhs } => {
                if lhs.prec() < op.prec() {
                    write!(f, "({lhs})")?;
                } else {
                    write!(f, "{lhs}")?;
                }
                write!(f, " {} ", op.symbol())?;
                let rhs_neg_lit = matches!(&**rhs, Expr::Int(n) if n.is_negative());
                if rhs.prec() <= op.prec() || rhs_neg_lit {
                    write!(f, "({rhs})")
                } else {
                    write!(f, "{rhs}")
                }
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Evaluation
// ---------------------------------------------------------------------------

/// Evaluate exactly over rationals. Division by zero reports the offending
/// subexpression in printed form.
pub fn eval_exact(e: &Expr) -> Result<BigRational, ExprError> {
    match e {
        Expr::Int(n) => Ok(BigRational::from_integer(n.clone())),
        Expr::Bin { op, lhs, rhs } => {
            let l = eval_exact(lhs)?;
            let r = eval_exact(rhs)?;
            Ok(match op {
                BinOp::Add => l + r,
                BinOp::Sub => l - r,
                BinOp::Mul => l * r,
                BinOp::Div => {
                    if r.is_zero() {
                        return Err(ExprError::DivisionByZero {
                            expr: e.to_string(),
                        });
                    }
                    l / r
                }
            })
        }
    }
}

/// Magnitude of the largest multiplication anywhere in the tree: the maximum
/// |value| over every `Mul` node's exact result, rounded half-up. `None` when
/// the tree multiplies nothing.
pub fn max_mul_magnitude(e: &Expr) -> Result<Option<BigUint>, ExprError> {
    fn walk(e: &Expr, best: &mut Option<BigUint>) -> Result<BigRational, ExprError> {
        match e {
            Expr::Int(n) => Ok(BigRational::from_integer(n.clone())),
            Expr::Bin { op, lhs, rhs } => {
                let l = walk(lhs, best)?;
                let r = walk(rhs, best)?;
                let v = match op {
                    BinOp::Add => l + r,
                    BinOp::Sub => l - r,
                    BinOp::Mul => l * r,
                    BinOp::Div => {
                        if r.is_zero() {
                            return Err(ExprError::DivisionByZero {
                                expr: e.to_string(),
                            });
                        }
                        l / r
                    }
                };
                if matches!(op, BinOp::Mul) {
                    let mag = rational_abs_rounded(&v);
                    if best.as_ref().is_none_or(|b| mag > *b) {
                        *best = Some(mag);
                    }
                }
                Ok(v)
            }
        }
    }
    let mut best = None;
    walk(e, &mut best)?;
    Ok(best)
}

/// Parse a plain decimal numeral (optional sign, thousands-separator commas,
/// optional fraction part) into an exact rational. Returns `None` for
/// anything else — this is for claimed results and final answers, not
/// expressions.
pub fn decimal_to_rational(s: &str) -> Option<BigRational> {
    let s = s.trim();
    let (neg, rest) = match s.strip_prefix('-') {
        Some(r) => (true, r),
        None => (false, s.strip_prefix('+').unwrap_or(s)),
    };
    let mut int_digits = String::new();
    let mut frac_digits = String::new();
    let mut seen_dot = false;
    let bytes = rest.as_bytes();
    let mut i = 0;
    while i < bytes.len() {
        let b = bytes[i];
        match b {
            b'0'..=b'9' => {
                if seen_dot {
                    frac_digits.push(b as char);
                } else {
                    int_digits.push(b as char);
                }
                i += 1;
            }
            b',' if !seen_dot && bytes.get(i + 1).is_some_and(|c| c.is_ascii_digit()) => {
                i += 1;
            }
            b'.' if !seen_dot => {
                seen_dot = true;
                i += 1;
            }
            _ => return None,
        }
    }
    if int_digits.is_empty() && frac_digits.is_empty() {
        return None;
    }
    if int_digits.is_empty() {
        int_digits.push('0');
    }
    let mut numer: BigInt = format!("{int_digits}{frac_digits}").parse().ok()?;
    if neg {
        numer = -numer;
    }
    let denom = BigInt::from(10u32).pow(frac_digits.len() as u32);
    Some(BigRational::new(numer, denom))
}
