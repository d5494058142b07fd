//! Closed-form time functions used for coefficients, delays, forcing and
//! histories.
//!
//! The grammar is deliberately small: real literals, the variable `t`, the
//! constant `pi`, unary minus, `+ - * /`, integer powers `^`, and the
//! functions `sin`, `cos`, `exp`. Standard precedence applies; `^` binds
//! tighter than unary minus, so `-t^2` is `-(t^2)`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg;

/// Denominators with magnitude below this are rejected during evaluation.
pub const DIVISION_GUARD: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseErrorKind {
    #[error("empty expression")]
    Empty,
    #[error("unknown identifier `{0}`")]
    UnknownIdentifier(String),
    #[error("unbalanced parentheses")]
    UnbalancedParentheses,
    #[error("unexpected token `{0}`")]
    UnexpectedToken(String),
    #[error("unexpected end of input")]
    UnexpectedEnd,
    #[error("malformed number `{0}`")]
    BadNumber(String),
    #[error("exponent must be an integer literal")]
    BadExponent,
}

/// Parse failure with the byte offset where it was detected.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{kind} at position {position}")]
pub struct ParseError {
    pub kind: ParseErrorKind,
    pub position: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Error)]
pub enum EvalError {
    #[error("division by near-zero value {denominator:e} at t = {t}")]
    DivisionByNearZero { t: f64, denominator: f64 },
    #[error("non-finite value at t = {t}")]
    NonFinite { t: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Func {
    Sin,
    Cos,
    Exp,
}

impl Func {
    fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Exp => "exp",
        }
    }

    fn apply(self, x: f64) -> f64 {
        match self {
            Func::Sin => x.sin(),
            Func::Cos => x.cos(),
            Func::Exp => x.exp(),
        }
    }
}

/// Expression tree over the time variable `t`.
#[derive(Debug, Clone, PartialEq)]
pub enum TimeExpr {
    Num(f64),
    Time,
    Pi,
    Neg(Box<TimeExpr>),
    Add(Box<TimeExpr>, Box<TimeExpr>),
    Sub(Box<TimeExpr>, Box<TimeExpr>),
    Mul(Box<TimeExpr>, Box<TimeExpr>),
    Div(Box<TimeExpr>, Box<TimeExpr>),
    Pow(Box<TimeExpr>, i32),
    Call(Func, Box<TimeExpr>),
}

impl TimeExpr {
    pub fn constant(value: f64) -> Self {
        TimeExpr::Num(value)
    }

    pub fn eval(&self, t: f64) -> Result<f64, EvalError> {
        let v = self.eval_raw(t)?;
        if v.is_finite() {
            Ok(v)
        } else {
            Err(EvalError::NonFinite { t })
        }
    }

    fn eval_raw(&self, t: f64) -> Result<f64, EvalError> {
        Ok(match self {
            TimeExpr::Num(v) => *v,
            TimeExpr::Time => t,
            TimeExpr::Pi => std::f64::consts::PI,
            TimeExpr::Neg(a) => -a.eval_raw(t)?,
            TimeExpr::Add(a, b) => a.eval_raw(t)? + b.eval_raw(t)?,
            TimeExpr::Sub(a, b) => a.eval_raw(t)? - b.eval_raw(t)?,
            TimeExpr::Mul(a, b) => a.eval_raw(t)? * b.eval_raw(t)?,
            TimeExpr::Div(a, b) => {
                let num = a.eval_raw(t)?;
                let den = b.eval_raw(t)?;
                if den.abs() < DIVISION_GUARD || den.is_nan() {
                    return Err(EvalError::DivisionByNearZero { t, denominator: den });
                }
                num / den
            }
            TimeExpr::Pow(a, k) => {
                let base = a.eval_raw(t)?;
                if *k < 0 && base.abs() < DIVISION_GUARD {
                    return Err(EvalError::DivisionByNearZero { t, denominator: base });
                }
                base.powi(*k)
            }
            TimeExpr::Call(f, a) => f.apply(a.eval_raw(t)?),
        })
    }

    /// True when the expression does not reference `t`.
    pub fn is_constant(&self) -> bool {
        match self {
            TimeExpr::Time => false,
            TimeExpr::Num(_) | TimeExpr::Pi => true,
            TimeExpr::Neg(a) | TimeExpr::Pow(a, _) | TimeExpr::Call(_, a) => a.is_constant(),
            TimeExpr::Add(a, b)
            | TimeExpr::Sub(a, b)
            | TimeExpr::Mul(a, b)
            | TimeExpr::Div(a, b) => a.is_constant() && b.is_constant(),
        }
    }

    /// Value of a `t`-free expression.
    pub fn constant_value(&self) -> Option<f64> {
        if self.is_constant() {
            self.eval(0.0).ok()
        } else {
            None
        }
    }

    pub fn is_zero(&self) -> bool {
        self.constant_value() == Some(0.0)
    }
}

pub fn parse_expr(text: &str) -> Result<TimeExpr, ParseError> {
    let tokens = tokenize(text)?;
    if tokens.is_empty() {
        return Err(ParseError {
            kind: ParseErrorKind::Empty,
            position: 0,
        });
    }
    let mut parser = Parser {
        tokens,
        pos: 0,
        end: text.len(),
    };
    let expr = parser.expr()?;
    if let Some((tok, at)) = parser.tokens.get(parser.pos) {
        let kind = if *tok == Token::RParen {
            ParseErrorKind::UnbalancedParentheses
        } else {
            ParseErrorKind::UnexpectedToken(tok.to_string())
        };
        return Err(ParseError { kind, position: *at });
    }
    Ok(expr)
}

impl FromStr for TimeExpr {
    type Err = ParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_expr(s)
    }
}

pub fn eval_expr(e: &TimeExpr, t: f64) -> Result<f64, EvalError> {
    e.eval(t)
}

// Fully parenthesised so that the printed form re-parses to the same tree.
impl fmt::Display for TimeExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TimeExpr::Num(v) if *v < 0.0 || (*v == 0.0 && v.is_sign_negative()) => {
                write!(f, "(-{:?})", -v)
            }
            TimeExpr::Num(v) => write!(f, "{v:?}"),
            TimeExpr::Time => write!(f, "t"),
            TimeExpr::Pi => write!(f, "pi"),
            TimeExpr::Neg(a) => write!(f, "(-{a})"),
            TimeExpr::Add(a, b) => write!(f, "({a} + {b})"),
            TimeExpr::Sub(a, b) => write!(f, "({a} - {b})"),
            TimeExpr::Mul(a, b) => write!(f, "({a} * {b})"),
            TimeExpr::Div(a, b) => write!(f, "({a} / {b})"),
            TimeExpr::Pow(a, k) => write!(f, "({a}^{k})"),
            TimeExpr::Call(func, a) => write!(f, "{}({a})", func.name()),
        }
    }
}

impl Serialize for TimeExpr {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for TimeExpr {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let text = String::deserialize(d)?;
        parse_expr(&text).map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Token {
    Num(f64),
    Ident(String),
    Plus,
    Minus,
    Star,
    Slash,
    Caret,
    LParen,
    RParen,
}

impl fmt::Display for Token {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Token::Num(v) => write!(f, "{v}"),
            Token::Ident(s) => write!(f, "{s}"),
            Token::Plus => write!(f, "+"),
            Token::Minus => write!(f, "-"),
            Token::Star => write!(f, "*"),
            Token::Slash => write!(f, "/"),
            Token::Caret => write!(f, "^"),
            Token::LParen => write!(f, "("),
            Token::RParen => write!(f, ")"),
        }
    }
}

fn tokenize(text: &str) -> Result<Vec<(Token, usize)>, ParseError> {
    let bytes = text.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i] as char;
        if c.is_ascii_whitespace() {
            i += 1;
            continue;
        }
        let start = i;
        let tok = match c {
            '+' => Token::Plus,
            '-' => Token::Minus,
            '*' => Token::Star,
            '/' => Token::Slash,
            '^' => Token::Caret,
            '(' => Token::LParen,
            ')' => Token::RParen,
            c if c.is_ascii_digit() || c == '.' => {
                while i < bytes.len() && (bytes[i].is_ascii_digit() || bytes[i] == b'.') {
                    i += 1;
                }
                // optional exponent: e, E followed by optional sign and digits
                if i < bytes.len() && (bytes[i] == b'e' || bytes[i] == b'E') {
                    let mut j = i + 1;
                    if j < bytes.len() && (bytes[j] == b'+' || bytes[j] == b'-') {
                        j += 1;
                    }
                    if j < bytes.len() && bytes[j].is_ascii_digit() {
                        while j < bytes.len() && bytes[j].is_ascii_digit() {
                            j += 1;
                        }
                        i = j;
                    }
                }
                let lit = &text[start..i];
                let v: f64 = lit.parse().map_err(|_| ParseError {
                    kind: ParseErrorKind::BadNumber(lit.to_string()),
                    position: start,
                })?;
                out.push((Token::Num(v), start));
                continue;
            }
            c if c.is_ascii_alphabetic() || c == '_' => {
                while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                    i += 1;
                }
                out.push((Token::Ident(text[start..i].to_string()), start));
                continue;
            }
            other => {
                return Err(ParseError {
                    kind: ParseErrorKind::UnexpectedToken(other.to_string()),
                    position: start,
                })
            }
        };
        out.push((tok, start));
        i += 1;
    }
    Ok(out)
}

struct Parser {
    tokens: Vec<(Token, usize)>,
    pos: usize,
    end: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Token> {
        self.tokens.get(self.pos).map(|(t, _)| t)
    }

    fn position(&self) -> usize {
        self.tokens.get(self.pos).map_or(self.end, |(_, p)| *p)
    }

    fn next(&mut self) -> Option<Token> {
        let tok = self.tokens.get(self.pos).map(|(t, _)| t.clone());
        self.pos += 1;
        tok
    }

    fn err(&self, kind: ParseErrorKind) -> ParseError {
        ParseError {
            kind,
            position: self.position(),
        }
    }

    fn expr(&mut self) -> Result<TimeExpr, ParseError> {
        let mut lhs = self.term()?;
        loop {
            match self.peek() {
                Some(Token::Plus) => {
                    self.pos += 1;
                    lhs = TimeExpr::Add(Box::new(lhs), Box::new(self.term()?));
                }
                Some(Token::Minus) => {
                    self.pos += 1;
                    lhs = TimeExpr::Sub(Box::new(lhs), Box::new(self.term()?));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn term(&mut self) -> Result<TimeExpr, ParseError> {
        let mut lhs = self.unary()?;
        loop {
            match self.peek() {
                Some(Token::Star) => {
                    self.pos += 1;
                    lhs = TimeExpr::Mul(Box::new(lhs), Box::new(self.unary()?));
                }
                Some(Token::Slash) => {
                    self.pos += 1;
                    lhs = TimeExpr::Div(Box::new(lhs), Box::new(self.unary()?));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn unary(&mut self) -> Result<TimeExpr, ParseError> {
        match self.peek() {
            Some(Token::Minus) => {
                self.pos += 1;
                Ok(TimeExpr::Neg(Box::new(self.unary()?)))
            }
            Some(Token::Plus) => {
                self.pos += 1;
                self.unary()
            }
            _ => self.power(),
        }
    }

    fn power(&mut self) -> Result<TimeExpr, ParseError> {
        let base = self.primary()?;
        if self.peek() != Some(&Token::Caret) {
            return Ok(base);
        }
        self.pos += 1;
        let negative = match self.peek() {
            Some(Token::Minus) => {
                self.pos += 1;
                true
            }
            Some(Token::Plus) => {
                self.pos += 1;
                false
            }
            _ => false,
        };
        match self.next() {
            Some(Token::Num(v)) if v.fract() == 0.0 && v.abs() <= i32::MAX as f64 => {
                let k = v as i32;
                Ok(TimeExpr::Pow(Box::new(base), if negative { -k } else { k }))
            }
            _ => {
                self.pos -= 1;
                Err(self.err(ParseErrorKind::BadExponent))
            }
        }
    }

    fn primary(&mut self) -> Result<TimeExpr, ParseError> {
        let at = self.position();
        match self.next() {
            Some(Token::Num(v)) => Ok(TimeExpr::Num(v)),
            Some(Token::LParen) => {
                let inner = self.expr()?;
                self.expect_rparen(at)?;
                Ok(inner)
            }
            Some(Token::Ident(name)) => match name.as_str() {
                "t" => Ok(TimeExpr::Time),
                "pi" => Ok(TimeExpr::Pi),
                "sin" | "cos" | "exp" => {
                    let func = match name.as_str() {
                        "sin" => Func::Sin,
                        "cos" => Func::Cos,
                        _ => Func::Exp,
                    };
                    let open = self.position();
                    match self.next() {
                        Some(Token::LParen) => {}
                        Some(tok) => {
                            return Err(ParseError {
                                kind: ParseErrorKind::UnexpectedToken(tok.to_string()),
                                position: open,
                            })
                        }
                        None => return Err(self.err(ParseErrorKind::UnexpectedEnd)),
                    }
                    let arg = self.expr()?;
                    self.expect_rparen(open)?;
                    Ok(TimeExpr::Call(func, Box::new(arg)))
                }
                _ => Err(ParseError {
                    kind: ParseErrorKind::UnknownIdentifier(name),
                    position: at,
                }),
            },
            Some(Token::RParen) => Err(ParseError {
                kind: ParseErrorKind::UnbalancedParentheses,
                position: at,
            }),
            Some(tok) => Err(ParseError {
                kind: ParseErrorKind::UnexpectedToken(tok.to_string()),
                position: at,
            }),
            None => Err(self.err(ParseErrorKind::UnexpectedEnd)),
        }
    }

    fn expect_rparen(&mut self, open: usize) -> Result<(), ParseError> {
        match self.peek() {
            Some(Token::RParen) => {
                self.pos += 1;
                Ok(())
            }
            None => Err(ParseError {
                kind: ParseErrorKind::UnbalancedParentheses,
                position: open,
            }),
            Some(tok) => Err(self.err(ParseErrorKind::UnexpectedToken(tok.to_string()))),
        }
    }
}

/// Square matrix of time expressions, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeVaryingMatrix {
    n: usize,
    entries: Vec<TimeExpr>,
}

impl TimeVaryingMatrix {
    /// Builds from rows; every row must have `rows.len()` entries.
    pub fn from_rows(rows: Vec<Vec<TimeExpr>>) -> Option<Self> {
        let n = rows.len();
        if n == 0 || rows.iter().any(|r| r.len() != n) {
            return None;
        }
        Some(Self {
            n,
            entries: rows.into_iter().flatten().collect(),
        })
    }

    pub fn parse_rows<S: AsRef<str>>(rows: &[Vec<S>]) -> Result<Option<Self>, ParseError> {
        let parsed = rows
            .iter()
            .map(|r| r.iter().map(|s| parse_expr(s.as_ref())).collect())
            .collect::<Result<Vec<Vec<_>>, _>>()?;
        Ok(Self::from_rows(parsed))
    }

    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            entries: vec![TimeExpr::Num(0.0); n * n],
        }
    }

    pub fn diagonal(diag: Vec<TimeExpr>) -> Self {
        let n = diag.len();
        let mut m = Self::zeros(n);
        for (i, e) in diag.into_iter().enumerate() {
            m.entries[i * n + i] = e;
        }
        m
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn entry(&self, row: usize, col: usize) -> &TimeExpr {
        &self.entries[row * self.n + col]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[TimeExpr]> {
        self.entries.chunks(self.n)
    }

    pub fn is_zero(&self) -> bool {
        self.entries.iter().all(TimeExpr::is_zero)
    }

    /// Writes the row-major values at `t` into `out` (length n²).
    pub fn eval_into(&self, t: f64, out: &mut [f64]) -> Result<(), EvalError> {
        for (slot, e) in out.iter_mut().zip(&self.entries) {
            *slot = e.eval(t)?;
        }
        Ok(())
    }

    pub fn eval(&self, t: f64) -> Result<Vec<f64>, EvalError> {
        let mut out = vec![0.0; self.n * self.n];
        self.eval_into(t, &mut out)?;
        Ok(out)
    }

    /// Spectral norm of the matrix at `t`.
    pub fn spectral_norm(&self, t: f64) -> Result<f64, EvalError> {
        let m = self.eval(t)?;
        Ok(linalg::spectral_norm(&m, self.n))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ev(s: &str, t: f64) -> f64 {
        parse_expr(s).unwrap().eval(t).unwrap()
    }

    #[test]
    fn sec5_lambda_case_a_at_zero() {
        assert_eq!(ev("-3 + 0.1*sin(5*t)", 0.0), -3.0);
    }

    #[test]
    fn omega_at_zero() {
        assert_eq!(ev("1 + 0.1*(sin(t) + sin(pi*t))", 0.0), 1.0);
    }

    #[test]
    fn exponential_decay() {
        assert!((ev("exp(-1*t)", 1.0) - 0.36787944117144233).abs() < 1e-15);
    }

    #[test]
    fn literal_is_constant_everywhere() {
        let e = parse_expr("7").unwrap();
        for t in [-3.0, 0.0, 1e6] {
            assert_eq!(e.eval(t).unwrap(), 7.0);
        }
        assert_eq!(e.constant_value(), Some(7.0));
    }

    #[test]
    fn forcing_peak() {
        let v = ev("sin(10*t)", std::f64::consts::PI / 20.0);
        assert!((v - 1.0).abs() < 1e-15);
    }

    #[test]
    fn case_b_lambda_at_zero() {
        assert!((ev("0.1*exp(-1*t) - 3", 0.0) + 2.9).abs() < 1e-15);
    }

    #[test]
    fn precedence_and_power() {
        assert_eq!(ev("-t^2", 3.0), -9.0);
        assert_eq!(ev("2*3+4", 0.0), 10.0);
        assert_eq!(ev("2*(3+4)", 0.0), 14.0);
        assert_eq!(ev("2^-1", 0.0), 0.5);
        assert_eq!(ev("10-4-3", 0.0), 3.0);
        assert_eq!(ev("12/4/3", 0.0), 1.0);
        assert_eq!(ev("1.5e1 + 2E-1", 0.0), 15.2);
    }

    #[test]
    fn parse_errors_carry_positions() {
        let e = parse_expr("").unwrap_err();
        assert_eq!(e.kind, ParseErrorKind::Empty);
        let e = parse_expr("   ").unwrap_err();
        assert_eq!(e.kind, ParseErrorKind::Empty);
        let e = parse_expr("1 + tan(t)").unwrap_err();
        assert_eq!(e.kind, ParseErrorKind::UnknownIdentifier("tan".into()));
        assert_eq!(e.position, 4);
        let e = parse_expr("(1 + t").unwrap_err();
        assert_eq!(e.kind, ParseErrorKind::UnbalancedParentheses);
        let e = parse_expr("1 + t)").unwrap_err();
        assert_eq!(e.kind, ParseErrorKind::UnbalancedParentheses);
        assert_eq!(e.position, 5);
        let e = parse_expr("t^1.5").unwrap_err();
        assert_eq!(e.kind, ParseErrorKind::BadExponent);
        let e = parse_expr("sin(t").unwrap_err();
        assert_eq!(e.kind, ParseErrorKind::UnbalancedParentheses);
        assert!(matches!(
            parse_expr("1 +").unwrap_err().kind,
            ParseErrorKind::UnexpectedEnd
        ));
    }

    #[test]
    fn guarded_division() {
        let e = parse_expr("1/(t-1)").unwrap();
        assert!(matches!(
            e.eval(1.0),
            Err(EvalError::DivisionByNearZero { .. })
        ));
        assert_eq!(e.eval(2.0).unwrap(), 1.0);
        let e = parse_expr("t^-2").unwrap();
        assert!(e.eval(0.0).is_err());
    }

    #[test]
    fn overflow_is_reported() {
        let e = parse_expr("exp(t)").unwrap();
        assert!(matches!(e.eval(1000.0), Err(EvalError::NonFinite { .. })));
    }

    #[test]
    fn matrix_norms() {
        let m = TimeVaryingMatrix::parse_rows(&[vec!["0", "1"], vec!["-1", "0"]])
            .unwrap()
            .unwrap();
        assert!((m.spectral_norm(0.3).unwrap() - 1.0).abs() < 1e-14);
        assert!(TimeVaryingMatrix::parse_rows(&[vec!["0", "1"], vec!["1"]])
            .unwrap()
            .is_none());
    }

    fn arb_expr() -> impl Strategy<Value = TimeExpr> {
        let leaf = prop_oneof![
            (0.0f64..10.0).prop_map(TimeExpr::Num),
            Just(TimeExpr::Time),
            Just(TimeExpr::Pi),
        ];
        leaf.prop_recursive(5, 40, 2, |inner| {
            prop_oneof![
                inner.clone().prop_map(|a| TimeExpr::Neg(Box::new(a))),
                (inner.clone(), inner.clone())
                    .prop_map(|(a, b)| TimeExpr::Add(Box::new(a), Box::new(b))),
                (inner.clone(), inner.clone())
                    .prop_map(|(a, b)| TimeExpr::Sub(Box::new(a), Box::new(b))),
                (inner.clone(), inner.clone())
                    .prop_map(|(a, b)| TimeExpr::Mul(Box::new(a), Box::new(b))),
                (inner.clone(), inner.clone())
                    .prop_map(|(a, b)| TimeExpr::Div(Box::new(a), Box::new(b))),
                (inner.clone(), 0i32..4).prop_map(|(a, k)| TimeExpr::Pow(Box::new(a), k)),
                inner.clone().prop_map(|a| TimeExpr::Call(Func::Sin, Box::new(a))),
                inner.clone().prop_map(|a| TimeExpr::Call(Func::Cos, Box::new(a))),
                inner.prop_map(|a| TimeExpr::Call(Func::Exp, Box::new(a))),
            ]
        })
    }

    proptest! {
        #[test]
        fn print_parse_round_trip(e in arb_expr(), t in -5.0f64..5.0) {
            let printed = e.to_string();
            let reparsed = parse_expr(&printed).unwrap();
            let a = e.eval(t);
            let b = reparsed.eval(t);
            match (a, b) {
                (Ok(x), Ok(y)) => prop_assert_eq!(x.to_bits(), y.to_bits()),
                (Err(_), Err(_)) => {}
                (x, y) => prop_assert!(false, "mismatch {:?} vs {:?}", x, y),
            }
        }

        #[test]
        fn evaluation_is_pure(e in arb_expr(), t in -5.0f64..5.0) {
            let a = e.eval(t).map(f64::to_bits).ok();
            let b = e.eval(t).map(f64::to_bits).ok();
            prop_assert_eq!(a, b);
        }
    }
}
