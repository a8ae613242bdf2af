//! Scalar expressions over an input vector `x = (x1, …, xn)` and the
//! [`FunctionSpec`] type built from them.
//!
//! Grammar (whitespace-insensitive):
//!
//! ```text
//! expr     := term (("+" | "-") term)*
//! term     := unary (("*" | "/") unary)*
//! unary    := "-" unary | power
//! power    := primary ("^" exponent)?
//! exponent := "-" exponent | primary
//! primary  := number | "x" digits | "normx" | func "(" expr ")" | "(" expr ")"
//! func     := "sin" | "cos" | "exp" | "abs" | "sqrt" | "sgn"
//! ```
//!
//! `^` binds tighter than unary minus (`-x1^2 = -(x1^2)`) and does not chain:
//! `x1^2^3` is rejected, write `x1^(2^3)` instead.

use alloc::boxed::Box;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::norm2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum UnaryOp {
    Neg,
    Sin,
    Cos,
    Exp,
    Abs,
    Sqrt,
    Sgn,
}

impl UnaryOp {
    fn from_name(name: &str) -> Option<Self> {
        Some(match name {
            "sin" => UnaryOp::Sin,
            "cos" => UnaryOp::Cos,
            "exp" => UnaryOp::Exp,
            "abs" => UnaryOp::Abs,
            "sqrt" => UnaryOp::Sqrt,
            "sgn" => UnaryOp::Sgn,
            _ => return None,
        })
    }

    fn name(self) -> &'static str {
        match self {
            UnaryOp::Neg => "-",
            UnaryOp::Sin => "sin",
            UnaryOp::Cos => "cos",
            UnaryOp::Exp => "exp",
            UnaryOp::Abs => "abs",
            UnaryOp::Sqrt => "sqrt",
            UnaryOp::Sgn => "sgn",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BinaryOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

impl BinaryOp {
    fn symbol(self) -> char {
        match self {
            BinaryOp::Add => '+',
            BinaryOp::Sub => '-',
            BinaryOp::Mul => '*',
            BinaryOp::Div => '/',
            BinaryOp::Pow => '^',
        }
    }
}

/// Expression tree. Variables are stored 0-based; `Var(0)` prints as `x1`.
#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Const(f64),
    Var(usize),
    /// Euclidean norm of the whole input vector.
    NormX,
    Unary(UnaryOp, Box<Expr>),
    Binary(BinaryOp, Box<Expr>, Box<Expr>),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseError {
    #[error("empty expression")]
    Empty,
    #[error("syntax error at byte {offset}: {message}")]
    Syntax { offset: usize, message: &'static str },
    #[error("variable x{index} at byte {offset} is out of range for n = {n}")]
    VariableOutOfRange { offset: usize, index: usize, n: usize },
}

impl ParseError {
    /// Byte offset of the error, if it has one.
    pub fn offset(&self) -> Option<usize> {
        match self {
            ParseError::Empty => None,
            ParseError::Syntax { offset, .. } | ParseError::VariableOutOfRange { offset, .. } => Some(*offset),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum EvalError {
    #[error("division by zero")]
    DivisionByZero,
    #[error("square root of a negative number")]
    SqrtOfNegative,
    #[error("negative base raised to a non-integer power")]
    NegativeBaseFractionalPower,
    #[error("variable x{index} not present in an input of length {len}")]
    MissingVariable { index: usize, len: usize },
}

/// Evaluation failure of one component of a [`FunctionSpec`].
#[derive(Debug, Clone, PartialEq, Error)]
pub enum FunctionError {
    #[error("input has dimension {got}, expected {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("component {component}: {source}")]
    Eval { component: usize, source: EvalError },
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SpecError {
    #[error("input and output dimensions must be positive")]
    EmptyDimension,
    #[error("{what}: expected {expected} entries, found {found}")]
    LengthMismatch { what: &'static str, expected: usize, found: usize },
    #[error("component {component}: {source}")]
    Parse { component: usize, source: ParseError },
    #[error("component {component}: uses x{index} but n = {n}")]
    VariableOutOfRange { component: usize, index: usize, n: usize },
    #[error("norm bound {value} of component {component} must be finite and non-negative")]
    InvalidBound { component: usize, value: f64 },
    #[error("domain interval {coordinate} = [{lo}, {hi}] is empty or not finite")]
    InvalidInterval { coordinate: usize, lo: f64, hi: f64 },
    #[error("f(0) = {value} at component {component}; a BIBO function must vanish at the origin")]
    NonZeroAtOrigin { component: usize, value: f64 },
}

pub fn parse(text: &str, n: usize) -> Result<Expr, ParseError> {
    if text.trim().is_empty() {
        return Err(ParseError::Empty);
    }
    let tokens = tokenize(text)?;
    let mut parser = Parser { tokens, pos: 0, n, end: text.len() };
    let expr = parser.expr()?;
    if let Some(tok) = parser.peek() {
        return Err(ParseError::Syntax { offset: tok.offset, message: "unexpected trailing input" });
    }
    Ok(expr)
}

#[derive(Debug, Clone, PartialEq)]
enum TokenKind {
    Number(f64),
    Ident(String),
    Op(char),
    LParen,
    RParen,
}

#[derive(Debug, Clone)]
struct Token {
    kind: TokenKind,
    offset: usize,
}

fn tokenize(text: &str) -> Result<Vec<Token>, ParseError> {
    let bytes = text.as_bytes();
    let mut tokens = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        let start = i;
        match c {
            b' ' | b'\t' | b'\n' | b'\r' => {
                i += 1;
                continue;
            }
            b'+' | b'-' | b'*' | b'/' | b'^' => {
                tokens.push(Token { kind: TokenKind::Op(c as char), offset: start });
                i += 1;
            }
            b'(' => {
                tokens.push(Token { kind: TokenKind::LParen, offset: start });
                i += 1;
            }
            b')' => {
                tokens.push(Token { kind: TokenKind::RParen, offset: start });
                i += 1;
            }
            b'0'..=b'9' | b'.' => {
                while i < bytes.len() && bytes[i].is_ascii_digit() {
                    i += 1;
                }
                if i < bytes.len() && bytes[i] == b'.' {
                    i += 1;
                    while i < bytes.len() && bytes[i].is_ascii_digit() {
                        i += 1;
                    }
                }
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
                let value: f64 = text[start..i]
                    .parse()
                    .map_err(|_| ParseError::Syntax { offset: start, message: "malformed number" })?;
                tokens.push(Token { kind: TokenKind::Number(value), offset: start });
            }
            c if c.is_ascii_alphabetic() || c == b'_' => {
                while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                    i += 1;
                }
                tokens.push(Token { kind: TokenKind::Ident(text[start..i].to_string()), offset: start });
            }
            _ => return Err(ParseError::Syntax { offset: start, message: "unexpected character" }),
        }
    }
    Ok(tokens)
}

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
    n: usize,
    end: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Token> {
        self.tokens.get(self.pos)
    }

    fn offset(&self) -> usize {
        self.peek().map_or(self.end, |t| t.offset)
    }

    fn eat_op(&mut self, ops: &[char]) -> Option<char> {
        match self.peek() {
            Some(Token { kind: TokenKind::Op(c), .. }) if ops.contains(c) => {
                let c = *c;
                self.pos += 1;
                Some(c)
            }
            _ => None,
        }
    }

    fn expect_rparen(&mut self) -> Result<(), ParseError> {
        match self.peek() {
            Some(Token { kind: TokenKind::RParen, .. }) => {
                self.pos += 1;
                Ok(())
            }
            _ => Err(ParseError::Syntax { offset: self.offset(), message: "expected ')'" }),
        }
    }

    fn expr(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.term()?;
        while let Some(c) = self.eat_op(&['+', '-']) {
            let rhs = self.term()?;
            let op = if c == '+' { BinaryOp::Add } else { BinaryOp::Sub };
            lhs = Expr::Binary(op, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn term(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.unary()?;
        while let Some(c) = self.eat_op(&['*', '/']) {
            let rhs = self.unary()?;
            let op = if c == '*' { BinaryOp::Mul } else { BinaryOp::Div };
            lhs = Expr::Binary(op, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Expr, ParseError> {
        if self.eat_op(&['-']).is_some() {
            return Ok(Expr::Unary(UnaryOp::Neg, Box::new(self.unary()?)));
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expr, ParseError> {
        let base = self.primary()?;
        if self.eat_op(&['^']).is_none() {
            return Ok(base);
        }
        let exponent = self.exponent()?;
        if matches!(self.peek(), Some(Token { kind: TokenKind::Op('^'), .. })) {
            return Err(ParseError::Syntax { offset: self.offset(), message: "chained '^' needs parentheses" });
        }
        Ok(Expr::Binary(BinaryOp::Pow, Box::new(base), Box::new(exponent)))
    }

    fn exponent(&mut self) -> Result<Expr, ParseError> {
        if self.eat_op(&['-']).is_some() {
            return Ok(Expr::Unary(UnaryOp::Neg, Box::new(self.exponent()?)));
        }
        self.primary()
    }

    fn primary(&mut self) -> Result<Expr, ParseError> {
        let Some(tok) = self.peek().cloned() else {
            return Err(ParseError::Syntax { offset: self.end, message: "unexpected end of input" });
        };
        self.pos += 1;
        match tok.kind {
            TokenKind::Number(v) => Ok(Expr::Const(v)),
            TokenKind::LParen => {
                let inner = self.expr()?;
                self.expect_rparen()?;
                Ok(inner)
            }
            TokenKind::Ident(name) => self.identifier(&name, tok.offset),
            TokenKind::RParen | TokenKind::Op(_) => {
                Err(ParseError::Syntax { offset: tok.offset, message: "expected an operand" })
            }
        }
    }

    fn identifier(&mut self, name: &str, offset: usize) -> Result<Expr, ParseError> {
        if name == "normx" {
            return Ok(Expr::NormX);
        }
        if let Some(op) = UnaryOp::from_name(name) {
            match self.peek() {
                Some(Token { kind: TokenKind::LParen, .. }) => self.pos += 1,
                _ => return Err(ParseError::Syntax { offset: self.offset(), message: "expected '(' after function name" }),
            }
            let arg = self.expr()?;
            self.expect_rparen()?;
            return Ok(Expr::Unary(op, Box::new(arg)));
        }
        if let Some(digits) = name.strip_prefix('x') {
            if !digits.is_empty() && digits.bytes().all(|b| b.is_ascii_digit()) {
                let index: usize = digits
                    .parse()
                    .map_err(|_| ParseError::Syntax { offset, message: "variable index too large" })?;
                if index == 0 || index > self.n {
                    return Err(ParseError::VariableOutOfRange { offset, index, n: self.n });
                }
                return Ok(Expr::Var(index - 1));
            }
        }
        Err(ParseError::Syntax { offset, message: "unknown identifier" })
    }
}

impl Expr {
    /// Evaluates the expression at `x` in IEEE double precision.
    pub fn eval(&self, x: &[f64]) -> Result<f64, EvalError> {
        let norm = norm2(x);
        self.eval_with(x, norm)
    }

    fn eval_with(&self, x: &[f64], norm: f64) -> Result<f64, EvalError> {
        match self {
            Expr::Const(c) => Ok(*c),
            Expr::Var(i) => x.get(*i).copied().ok_or(EvalError::MissingVariable { index: i + 1, len: x.len() }),
            Expr::NormX => Ok(norm),
            Expr::Unary(op, arg) => {
                let a = arg.eval_with(x, norm)?;
                Ok(match op {
                    UnaryOp::Neg => -a,
                    UnaryOp::Sin => libm::sin(a),
                    UnaryOp::Cos => libm::cos(a),
                    UnaryOp::Exp => libm::exp(a),
                    UnaryOp::Abs => libm::fabs(a),
                    UnaryOp::Sqrt => {
                        if a < 0.0 {
                            return Err(EvalError::SqrtOfNegative);
                        }
                        libm::sqrt(a)
                    }
                    UnaryOp::Sgn => {
                        if a > 0.0 {
                            1.0
                        } else if a < 0.0 {
                            -1.0
                        } else {
                            0.0
                        }
                    }
                })
            }
            Expr::Binary(op, lhs, rhs) => {
                let a = lhs.eval_with(x, norm)?;
                let b = rhs.eval_with(x, norm)?;
                Ok(match op {
                    BinaryOp::Add => a + b,
                    BinaryOp::Sub => a - b,
                    BinaryOp::Mul => a * b,
                    BinaryOp::Div => {
                        if b == 0.0 {
                            return Err(EvalError::DivisionByZero);
                        }
                        a / b
                    }
                    BinaryOp::Pow => {
                        if a < 0.0 && libm::trunc(b) != b {
                            return Err(EvalError::NegativeBaseFractionalPower);
                        }
                        if a == 0.0 && b < 0.0 {
                            return Err(EvalError::DivisionByZero);
                        }
                        libm::pow(a, b)
                    }
                })
            }
        }
    }

    /// Largest variable index used, 1-based. Zero when no variable appears.
    pub fn max_variable(&self) -> usize {
        match self {
            Expr::Const(_) | Expr::NormX => 0,
            Expr::Var(i) => i + 1,
            Expr::Unary(_, a) => a.max_variable(),
            Expr::Binary(_, a, b) => a.max_variable().max(b.max_variable()),
        }
    }
}

/// Prints a form that [`parse`] maps back onto the same tree.
impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Const(c) => write!(f, "{c:?}"),
            Expr::Var(i) => write!(f, "x{}", i + 1),
            Expr::NormX => f.write_str("normx"),
            Expr::Unary(UnaryOp::Neg, a) => write!(f, "(-{a})"),
            Expr::Unary(op, a) => write!(f, "{}({a})", op.name()),
            Expr::Binary(op, a, b) => write!(f, "({a}{}{b})", op.symbol()),
        }
    }
}

/// A BIBO function `f: Rⁿ → Rᵖ` given by `p` expressions, declared upper
/// bounds on each component's 2-induced norm, and a sampling box.
#[derive(Debug, Clone, PartialEq)]
pub struct FunctionSpec {
    n: usize,
    components: Vec<Expr>,
    norm_bounds: Vec<f64>,
    domain_box: Vec<[f64; 2]>,
}

/// Raw, unvalidated form of a [`FunctionSpec`]; this is the JSON file layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FunctionSpecRaw {
    pub n: usize,
    pub p: usize,
    pub components: Vec<String>,
    pub norm_bounds: Vec<f64>,
    pub domain_box: Vec<[f64; 2]>,
}

impl FunctionSpec {
    pub fn new(
        n: usize,
        components: Vec<Expr>,
        norm_bounds: Vec<f64>,
        domain_box: Vec<[f64; 2]>,
    ) -> Result<Self, SpecError> {
        let p = components.len();
        if n == 0 || p == 0 {
            return Err(SpecError::EmptyDimension);
        }
        if norm_bounds.len() != p {
            return Err(SpecError::LengthMismatch { what: "norm_bounds", expected: p, found: norm_bounds.len() });
        }
        if domain_box.len() != n {
            return Err(SpecError::LengthMismatch { what: "domain_box", expected: n, found: domain_box.len() });
        }
        for (component, e) in components.iter().enumerate() {
            let index = e.max_variable();
            if index > n {
                return Err(SpecError::VariableOutOfRange { component, index, n });
            }
        }
        for (component, &value) in norm_bounds.iter().enumerate() {
            if !value.is_finite() || value < 0.0 {
                return Err(SpecError::InvalidBound { component, value });
            }
        }
        for (coordinate, &[lo, hi]) in domain_box.iter().enumerate() {
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err(SpecError::InvalidInterval { coordinate, lo, hi });
            }
        }
        let spec = FunctionSpec { n, components, norm_bounds, domain_box };
        // A domain error at the origin (e.g. a 1/x2 term under a ‖x‖ factor)
        // is accepted; the lifting defines v(0) = 0 regardless.
        let origin = vec![0.0; n];
        for (component, e) in spec.components.iter().enumerate() {
            if let Ok(value) = e.eval(&origin) {
                if value != 0.0 {
                    return Err(SpecError::NonZeroAtOrigin { component, value });
                }
            }
        }
        Ok(spec)
    }

    /// Parses each component string against `n` variables.
    pub fn parse(
        n: usize,
        components: &[&str],
        norm_bounds: Vec<f64>,
        domain_box: Vec<[f64; 2]>,
    ) -> Result<Self, SpecError> {
        let exprs = components
            .iter()
            .enumerate()
            .map(|(component, text)| parse(text, n).map_err(|source| SpecError::Parse { component, source }))
            .collect::<Result<Vec<_>, _>>()?;
        Self::new(n, exprs, norm_bounds, domain_box)
    }

    pub fn from_raw(raw: &FunctionSpecRaw) -> Result<Self, SpecError> {
        if raw.components.len() != raw.p {
            return Err(SpecError::LengthMismatch { what: "components", expected: raw.p, found: raw.components.len() });
        }
        let texts: Vec<&str> = raw.components.iter().map(String::as_str).collect();
        Self::parse(raw.n, &texts, raw.norm_bounds.clone(), raw.domain_box.clone())
    }

    pub fn to_raw(&self) -> FunctionSpecRaw {
        FunctionSpecRaw {
            n: self.n,
            p: self.p(),
            components: self.components.iter().map(ToString::to_string).collect(),
            norm_bounds: self.norm_bounds.clone(),
            domain_box: self.domain_box.clone(),
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn p(&self) -> usize {
        self.components.len()
    }

    pub fn components(&self) -> &[Expr] {
        &self.components
    }

    pub fn norm_bounds(&self) -> &[f64] {
        &self.norm_bounds
    }

    pub fn domain_box(&self) -> &[[f64; 2]] {
        &self.domain_box
    }

    /// Same function with different declared bounds.
    pub fn with_norm_bounds(&self, norm_bounds: Vec<f64>) -> Result<Self, SpecError> {
        Self::new(self.n, self.components.clone(), norm_bounds, self.domain_box.clone())
    }

    /// Evaluates component `i` (0-based) at `x`.
    pub fn eval_component(&self, i: usize, x: &[f64]) -> Result<f64, FunctionError> {
        self.check_dim(x)?;
        self.components[i].eval(x).map_err(|source| FunctionError::Eval { component: i, source })
    }

    pub fn eval_f(&self, x: &[f64]) -> Result<Vec<f64>, FunctionError> {
        self.check_dim(x)?;
        let norm = norm2(x);
        self.components
            .iter()
            .enumerate()
            .map(|(component, e)| e.eval_with(x, norm).map_err(|source| FunctionError::Eval { component, source }))
            .collect()
    }

    fn check_dim(&self, x: &[f64]) -> Result<(), FunctionError> {
        if x.len() != self.n {
            return Err(FunctionError::DimensionMismatch { expected: self.n, got: x.len() });
        }
        Ok(())
    }
}

pub const SISO_EXPR: &str = "0.5*(x1*sin(x1)+x1*cos(x1^2))";

/// `h2` is read as `0.1·cos(3·x1/x2)`.
pub const MIMO_EXPR: &str = "normx/2.5*(sin(0.1*x1*x2) + 0.1*cos(3*x1/x2) + 0.4*sin(20*x1) \
     + 0.3*cos(x2+4) + 0.3*sin(0.1*exp(x1)) + 0.2*cos(1/x1^2) + 0.1*sin(0.1*(x1+x2)) \
     + 0.1*cos(0.001*x2^2))";

/// `f(x) = (x sin x + x cos x²)/2` on `[-20, 20]`, induced norm bound 1.
pub fn builtin_siso() -> FunctionSpec {
    FunctionSpec::parse(1, &[SISO_EXPR], vec![1.0], vec![[-20.0, 20.0]]).expect("builtin SISO spec is valid")
}

/// `f(x) = (‖x‖/2.5)·Σ hᵢ(x)` over `[-10, 10]²`.
///
/// The declared bound is the amplitude sum of the eight `hᵢ` divided by 2.5,
/// which is exactly 1. Evaluation fails on `x1 = 0` and `x2 = 0`.
pub fn builtin_mimo() -> FunctionSpec {
    FunctionSpec::parse(2, &[MIMO_EXPR], vec![1.0], vec![[-10.0, 10.0], [-10.0, 10.0]])
        .expect("builtin MIMO spec is valid")
}

/// Looks up a builtin by name (`siso` or `mimo`).
pub fn builtin(name: &str) -> Option<FunctionSpec> {
    match name {
        "siso" => Some(builtin_siso()),
        "mimo" => Some(builtin_mimo()),
        _ => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn parses_siso_expression() {
        let e = parse(SISO_EXPR, 1).unwrap();
        assert!(matches!(e, Expr::Binary(BinaryOp::Mul, _, _)));
        assert_eq!(e.max_variable(), 1);
    }

    #[test]
    fn parses_single_variable() {
        assert_eq!(parse("x1", 1).unwrap(), Expr::Var(0));
        assert_eq!(parse("  x2 ", 3).unwrap(), Expr::Var(1));
    }

    #[test]
    fn dangling_operator_reports_end_offset() {
        let err = parse("x1 +", 1).unwrap_err();
        assert!(matches!(err, ParseError::Syntax { .. }));
        assert_eq!(err.offset(), Some(4));
    }

    #[test]
    fn rejects_out_of_range_variable() {
        assert_eq!(parse("x1 + x3", 2), Err(ParseError::VariableOutOfRange { offset: 5, index: 3, n: 2 }));
        assert!(matches!(parse("x0", 2), Err(ParseError::VariableOutOfRange { index: 0, .. })));
    }

    #[test]
    fn misc_syntax_errors() {
        assert_eq!(parse("", 1), Err(ParseError::Empty));
        assert_eq!(parse("sin x1", 1).unwrap_err().offset(), Some(4));
        assert_eq!(parse("(x1", 1).unwrap_err().offset(), Some(3));
        assert_eq!(parse("x1 $ 2", 1).unwrap_err().offset(), Some(3));
        assert_eq!(parse("foo(x1)", 1).unwrap_err().offset(), Some(0));
        assert_eq!(parse("x1^2^3", 1).unwrap_err().offset(), Some(4));
        assert_eq!(parse("x1 x1", 1).unwrap_err().offset(), Some(3));
    }

    #[test]
    fn precedence_and_associativity() {
        let x = [3.0];
        assert_eq!(parse("-x1^2", 1).unwrap().eval(&x).unwrap(), -9.0);
        assert_eq!(parse("2*x1^2", 1).unwrap().eval(&x).unwrap(), 18.0);
        assert_eq!(parse("1 - 2 - 3", 1).unwrap().eval(&x).unwrap(), -4.0);
        assert_eq!(parse("12 / 2 / 3", 1).unwrap().eval(&x).unwrap(), 2.0);
        assert_eq!(parse("1 + 2 * 3", 1).unwrap().eval(&x).unwrap(), 7.0);
        assert_eq!(parse("2^-1", 1).unwrap().eval(&x).unwrap(), 0.5);
        assert_eq!(parse("x1^(1+1)", 1).unwrap().eval(&x).unwrap(), 9.0);
        assert_eq!(parse("1.5e1 + .5", 1).unwrap().eval(&x).unwrap(), 15.5);
        assert_eq!(parse("--x1", 1).unwrap().eval(&x).unwrap(), 3.0);
    }

    #[test]
    fn eval_basics() {
        assert_eq!(parse("sin(x1)", 1).unwrap().eval(&[0.0]).unwrap(), 0.0);
        assert_eq!(parse("sgn(x1)", 1).unwrap().eval(&[0.0]).unwrap(), 0.0);
        assert_eq!(parse("sgn(x1)", 1).unwrap().eval(&[-2.0]).unwrap(), -1.0);
        assert_eq!(parse("normx", 2).unwrap().eval(&[3.0, 4.0]).unwrap(), 5.0);
        assert_eq!(parse("abs(x1)*exp(0)", 1).unwrap().eval(&[-2.0]).unwrap(), 2.0);
        assert_eq!(parse("(-8)^3", 1).unwrap().eval(&[0.0]).unwrap(), -512.0);
    }

    #[test]
    fn eval_domain_errors() {
        assert_eq!(parse("x1/x2", 2).unwrap().eval(&[1.0, 0.0]), Err(EvalError::DivisionByZero));
        assert_eq!(parse("sqrt(x1)", 1).unwrap().eval(&[-1.0]), Err(EvalError::SqrtOfNegative));
        assert_eq!(parse("x1^0.5", 1).unwrap().eval(&[-1.0]), Err(EvalError::NegativeBaseFractionalPower));
        assert_eq!(parse("x1^-1", 1).unwrap().eval(&[0.0]), Err(EvalError::DivisionByZero));
    }

    #[test]
    fn siso_builtin_values() {
        let f = builtin_siso();
        assert_eq!(f.p(), 1);
        assert_eq!(f.n(), 1);
        assert_eq!(f.eval_f(&[0.0]).unwrap(), vec![0.0]);
        // (sin 1 + cos 1)/2, computed independently.
        let v = f.eval_f(&[1.0]).unwrap()[0];
        assert!((v - 0.690_886_645_338_018).abs() < 1e-14);
    }

    #[test]
    fn mimo_builtin_values() {
        let f = builtin_mimo();
        assert_eq!((f.n(), f.p()), (2, 1));
        assert_eq!(f.norm_bounds(), &[1.0]);
        let v = f.eval_f(&[1.0, 1.0]).unwrap()[0];
        // Term-by-term sum of h1..h8 at (1, 1), scaled by √2/2.5.
        assert!((v - 0.429_686_813_474_501).abs() < 1e-13);
        assert_eq!(
            f.eval_f(&[1.0, 0.0]),
            Err(FunctionError::Eval { component: 0, source: EvalError::DivisionByZero })
        );
        assert!(f.eval_f(&[0.0, 1.0]).is_err());
    }

    #[test]
    fn mimo_amplitude_sum_is_one() {
        let amplitudes = [1.0, 0.1, 0.4, 0.3, 0.3, 0.2, 0.1, 0.1];
        let sum: f64 = amplitudes.iter().sum();
        assert!((sum / 2.5 - 1.0).abs() < 1e-15);
    }

    #[test]
    fn identity_function() {
        let f = FunctionSpec::parse(2, &["x1", "x2"], vec![1.0, 1.0], vec![[-1.0, 1.0]; 2]).unwrap();
        assert_eq!(f.eval_f(&[3.0, 4.0]).unwrap(), vec![3.0, 4.0]);
        assert_eq!(f.eval_f(&[3.0]), Err(FunctionError::DimensionMismatch { expected: 2, got: 1 }));
    }

    #[test]
    fn spec_validation() {
        let bx = vec![[-1.0, 1.0]];
        assert_eq!(
            FunctionSpec::parse(1, &["x1 + 1"], vec![2.0], bx.clone()),
            Err(SpecError::NonZeroAtOrigin { component: 0, value: 1.0 })
        );
        assert!(matches!(
            FunctionSpec::parse(1, &["x1"], vec![1.0, 1.0], bx.clone()),
            Err(SpecError::LengthMismatch { .. })
        ));
        assert!(matches!(
            FunctionSpec::parse(1, &["x1"], vec![-1.0], bx.clone()),
            Err(SpecError::InvalidBound { component: 0, .. })
        ));
        assert!(matches!(
            FunctionSpec::parse(1, &["x1"], vec![1.0], vec![[1.0, 1.0]]),
            Err(SpecError::InvalidInterval { .. })
        ));
        assert!(matches!(FunctionSpec::parse(1, &["x2"], vec![1.0], bx.clone()), Err(SpecError::Parse { .. })));
        assert_eq!(FunctionSpec::parse(0, &[], vec![], vec![]), Err(SpecError::EmptyDimension));
        let raw = FunctionSpecRaw {
            n: 1,
            p: 2,
            components: vec!["x1".into()],
            norm_bounds: vec![1.0],
            domain_box: bx,
        };
        assert!(matches!(FunctionSpec::from_raw(&raw), Err(SpecError::LengthMismatch { what: "components", .. })));
    }

    #[test]
    fn builtins_respect_declared_envelope() {
        let f = builtin_siso();
        for k in 0..=4000 {
            let x = -20.0 + 40.0 * k as f64 / 4000.0;
            let fx = f.eval_f(&[x]).unwrap()[0];
            assert!(fx.abs() <= x.abs() * (1.0 + 1e-15), "x = {x}");
        }
        let g = builtin_mimo();
        for i in 0..=100 {
            for j in 0..=100 {
                let x = [-10.0 + 0.2 * i as f64, -10.0 + 0.2 * j as f64];
                if let Ok(v) = g.eval_f(&x) {
                    assert!(v[0].abs() <= norm2(&x) * (1.0 + 1e-12));
                }
            }
        }
    }

    fn arb_expr() -> impl Strategy<Value = Expr> {
        let leaf = prop_oneof![
            (0.0f64..1e6).prop_map(Expr::Const),
            (0usize..3).prop_map(Expr::Var),
            Just(Expr::NormX),
        ];
        leaf.prop_recursive(5, 48, 2, |inner| {
            let unary = prop_oneof![
                Just(UnaryOp::Neg),
                Just(UnaryOp::Sin),
                Just(UnaryOp::Cos),
                Just(UnaryOp::Exp),
                Just(UnaryOp::Abs),
                Just(UnaryOp::Sqrt),
                Just(UnaryOp::Sgn),
            ];
            let binary = prop_oneof![
                Just(BinaryOp::Add),
                Just(BinaryOp::Sub),
                Just(BinaryOp::Mul),
                Just(BinaryOp::Div),
                Just(BinaryOp::Pow),
            ];
            prop_oneof![
                (unary, inner.clone()).prop_map(|(op, a)| Expr::Unary(op, Box::new(a))),
                (binary, inner.clone(), inner).prop_map(|(op, a, b)| Expr::Binary(op, Box::new(a), Box::new(b))),
            ]
        })
    }

    proptest! {
        #[test]
        fn print_parse_round_trip(e in arb_expr()) {
            let printed = e.to_string();
            prop_assert_eq!(parse(&printed, 3).unwrap(), e);
        }

        #[test]
        fn eval_is_deterministic(e in arb_expr(), x in proptest::collection::vec(-5.0f64..5.0, 3)) {
            let a = e.eval(&x).map(f64::to_bits);
            let b = e.eval(&x).map(f64::to_bits);
            prop_assert_eq!(a, b);
        }
    }
}
