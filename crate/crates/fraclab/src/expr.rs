//! Expression language for test functions u: R^n -> R.
//!
//! ```text
//! expr    := term (("+" | "-") term)*
//! term    := unary (("*" | "/") unary)*
//! unary   := "-" unary | power
//! power   := primary ("^" unary)?
//! primary := number | ident | ident "(" expr ")" | "(" expr ")"
//! ```
//!
//! `^` is right-associative and binds tighter than unary minus, so `-x^2`
//! is `-(x^2)` and `2^-x` is `2^(-x)`.

use std::fmt;

use thiserror::Error;

const MAX_DEPTH: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

impl BinOp {
    fn symbol(self) -> &'static str {
        match self {
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Mul => "*",
            BinOp::Div => "/",
            BinOp::Pow => "^",
        }
    }

    fn precedence(self) -> u8 {
        match self {
            BinOp::Add | BinOp::Sub => 1,
            BinOp::Mul | BinOp::Div => 2,
            BinOp::Pow => 4,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Exp,
    Sin,
    Cos,
    Abs,
    Bump,
}

impl Func {
    fn from_name(name: &str) -> Option<Self> {
        Some(match name {
            "exp" => Func::Exp,
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            "abs" => Func::Abs,
            "bump" => Func::Bump,
            _ => return None,
        })
    }

    fn name(self) -> &'static str {
        match self {
            Func::Exp => "exp",
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Abs => "abs",
            Func::Bump => "bump",
        }
    }

    fn apply(self, t: f64) -> f64 {
        match self {
            Func::Exp => t.exp(),
            Func::Sin => t.sin(),
            Func::Cos => t.cos(),
            Func::Abs => t.abs(),
            Func::Bump => bump(t),
        }
    }
}

/// exp(-1/(1-t^2)) on |t| < 1, zero elsewhere.
pub fn bump(t: f64) -> f64 {
    if t.abs() < 1.0 {
        (-1.0 / (1.0 - t * t)).exp()
    } else {
        0.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Node {
    Num(f64),
    /// Coordinate index: 0 for `x` or `x1`, 1 for `x2`.
    Var(usize),
    Neg(Box<Node>),
    Bin(BinOp, Box<Node>, Box<Node>),
    Call(Func, Box<Node>),
}

/// A parsed expression for a fixed dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct ExprAst {
    root: Node,
    dim: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ParseErrorKind {
    UnexpectedChar(char),
    UnexpectedEnd,
    UnexpectedToken(String),
    BadNumber(String),
    UnknownIdentifier(String),
    /// A function name used without `(arg)`, or called with the wrong number of arguments.
    Arity(String),
    /// A variable that belongs to a different dimension, e.g. `x` when n = 2.
    DimensionMismatch(String),
    UnsupportedDimension(usize),
    TooDeep,
}

impl fmt::Display for ParseErrorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ParseErrorKind::UnexpectedChar(c) => write!(f, "unexpected character '{c}'"),
            ParseErrorKind::UnexpectedEnd => write!(f, "unexpected end of input"),
            ParseErrorKind::UnexpectedToken(t) => write!(f, "unexpected token '{t}'"),
            ParseErrorKind::BadNumber(t) => write!(f, "malformed number '{t}'"),
            ParseErrorKind::UnknownIdentifier(t) => write!(f, "unknown identifier '{t}'"),
            ParseErrorKind::Arity(t) => write!(f, "function '{t}' takes exactly one argument"),
            ParseErrorKind::DimensionMismatch(t) => {
                write!(f, "variable '{t}' does not match the declared dimension")
            }
            ParseErrorKind::UnsupportedDimension(n) => write!(f, "dimension {n} is not supported"),
            ParseErrorKind::TooDeep => write!(f, "expression nested too deeply"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("parse error at byte {position}: {kind}")]
pub struct ParseError {
    pub position: usize,
    pub kind: ParseErrorKind,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("point has {got} coordinates, expression expects {expected}")]
    PointDimension { expected: usize, got: usize },
    #[error("division by zero")]
    DivisionByZero,
    #[error("non-finite result {value} in '{context}'")]
    NonFinite { value: f64, context: String },
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Plus,
    Minus,
    Star,
    Slash,
    Caret,
    LParen,
    RParen,
    Comma,
}

impl Tok {
    fn text(&self) -> String {
        match self {
            Tok::Num(v) => format!("{v:?}"),
            Tok::Ident(s) => s.clone(),
            Tok::Plus => "+".into(),
            Tok::Minus => "-".into(),
            Tok::Star => "*".into(),
            Tok::Slash => "/".into(),
            Tok::Caret => "^".into(),
            Tok::LParen => "(".into(),
            Tok::RParen => ")".into(),
            Tok::Comma => ",".into(),
        }
    }
}

fn err(position: usize, kind: ParseErrorKind) -> ParseError {
    ParseError { position, kind }
}

fn tokenize(src: &str) -> Result<Vec<(usize, Tok)>, ParseError> {
    let bytes = src.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < src.len() {
        let c = src[i..].chars().next().unwrap_or('\0');
        let start = i;
        if c.is_whitespace() {
            i += c.len_utf8();
            continue;
        }
        if c.is_ascii_digit() || c == '.' {
            while i < src.len() && (bytes[i].is_ascii_digit() || bytes[i] == b'.') {
                i += 1;
            }
            if i < src.len() && (bytes[i] == b'e' || bytes[i] == b'E') {
                let mut j = i + 1;
                if j < src.len() && (bytes[j] == b'+' || bytes[j] == b'-') {
                    j += 1;
                }
                if j < src.len() && bytes[j].is_ascii_digit() {
                    while j < src.len() && bytes[j].is_ascii_digit() {
                        j += 1;
                    }
                    i = j;
                }
            }
            let text = &src[start..i];
            let valid = text.chars().filter(|&ch| ch == '.').count() <= 1
                && text.chars().take_while(|ch| *ch != 'e' && *ch != 'E').any(|ch| ch.is_ascii_digit());
            let value = text.parse::<f64>().ok().filter(|v| valid && v.is_finite());
            match value {
                Some(v) => out.push((start, Tok::Num(v))),
                None => return Err(err(start, ParseErrorKind::BadNumber(text.to_string()))),
            }
            continue;
        }
        if c.is_ascii_alphabetic() || c == '_' {
            while i < src.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                i += 1;
            }
            out.push((start, Tok::Ident(src[start..i].to_string())));
            continue;
        }
        let tok = match c {
            '+' => Tok::Plus,
            '-' | '\u{2212}' => Tok::Minus,
            '*' => Tok::Star,
            '/' => Tok::Slash,
            '^' => Tok::Caret,
            '(' => Tok::LParen,
            ')' => Tok::RParen,
            ',' => Tok::Comma,
            other => return Err(err(start, ParseErrorKind::UnexpectedChar(other))),
        };
        i += c.len_utf8();
        out.push((start, tok));
    }
    Ok(out)
}

struct Parser {
    toks: Vec<(usize, Tok)>,
    pos: usize,
    end: usize,
    dim: usize,
    depth: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|(_, t)| t)
    }

    fn here(&self) -> usize {
        self.toks.get(self.pos).map(|(p, _)| *p).unwrap_or(self.end)
    }

    fn bump_tok(&mut self) -> Option<Tok> {
        let t = self.toks.get(self.pos).map(|(_, t)| t.clone());
        self.pos += 1;
        t
    }

    fn enter(&mut self) -> Result<(), ParseError> {
        self.depth += 1;
        if self.depth > MAX_DEPTH {
            return Err(err(self.here(), ParseErrorKind::TooDeep));
        }
        Ok(())
    }

    fn expr(&mut self) -> Result<Node, ParseError> {
        self.enter()?;
        let mut lhs = self.term()?;
        loop {
            let op = match self.peek() {
                Some(Tok::Plus) => BinOp::Add,
                Some(Tok::Minus) => BinOp::Sub,
                _ => break,
            };
            self.pos += 1;
            let rhs = self.term()?;
            lhs = Node::Bin(op, Box::new(lhs), Box::new(rhs));
        }
        self.depth -= 1;
        Ok(lhs)
    }

    fn term(&mut self) -> Result<Node, ParseError> {
        let mut lhs = self.unary()?;
        loop {
            let op = match self.peek() {
                Some(Tok::Star) => BinOp::Mul,
                Some(Tok::Slash) => BinOp::Div,
                _ => break,
            };
            self.pos += 1;
            let rhs = self.unary()?;
            lhs = Node::Bin(op, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Node, ParseError> {
        self.enter()?;
        let node = if self.peek() == Some(&Tok::Minus) {
            self.pos += 1;
            Node::Neg(Box::new(self.unary()?))
        } else {
            self.power()?
        };
        self.depth -= 1;
        Ok(node)
    }

    fn power(&mut self) -> Result<Node, ParseError> {
        let base = self.primary()?;
        if self.peek() == Some(&Tok::Caret) {
            self.pos += 1;
            let exponent = self.unary()?;
            return Ok(Node::Bin(BinOp::Pow, Box::new(base), Box::new(exponent)));
        }
        Ok(base)
    }

    fn variable(&self, name: &str, at: usize) -> Result<Node, ParseError> {
        let index = match (name, self.dim) {
            ("x", 1) => 0,
            ("x1", 2) => 0,
            ("x2", 2) => 1,
            ("x", 2) | ("x1", 1) | ("x2", 1) => {
                return Err(err(at, ParseErrorKind::DimensionMismatch(name.to_string())))
            }
            _ => return Err(err(at, ParseErrorKind::UnknownIdentifier(name.to_string()))),
        };
        Ok(Node::Var(index))
    }

    fn primary(&mut self) -> Result<Node, ParseError> {
        let at = self.here();
        match self.bump_tok() {
            Some(Tok::Num(v)) => Ok(Node::Num(v)),
            Some(Tok::LParen) => {
                let inner = self.expr()?;
                self.expect_rparen()?;
                Ok(inner)
            }
            Some(Tok::Ident(name)) => {
                if let Some(func) = Func::from_name(&name) {
                    if self.peek() != Some(&Tok::LParen) {
                        return Err(err(at, ParseErrorKind::Arity(name)));
                    }
                    self.pos += 1;
                    if self.peek() == Some(&Tok::RParen) {
                        return Err(err(at, ParseErrorKind::Arity(name)));
                    }
                    let arg = self.expr()?;
                    if self.peek() == Some(&Tok::Comma) {
                        return Err(err(at, ParseErrorKind::Arity(name)));
                    }
                    self.expect_rparen()?;
                    return Ok(Node::Call(func, Box::new(arg)));
                }
                if self.peek() == Some(&Tok::LParen) {
                    return Err(err(at, ParseErrorKind::UnknownIdentifier(name)));
                }
                self.variable(&name, at)
            }
            Some(tok) => Err(err(at, ParseErrorKind::UnexpectedToken(tok.text()))),
            None => Err(err(at, ParseErrorKind::UnexpectedEnd)),
        }
    }

    fn expect_rparen(&mut self) -> Result<(), ParseError> {
        let at = self.here();
        match self.bump_tok() {
            Some(Tok::RParen) => Ok(()),
            Some(tok) => Err(err(at, ParseErrorKind::UnexpectedToken(tok.text()))),
            None => Err(err(at, ParseErrorKind::UnexpectedEnd)),
        }
    }
}

/// Parses `source` as a function of `n` variables (`x` for n = 1, `x1`, `x2` for n = 2).
pub fn parse(source: &str, n: usize) -> Result<ExprAst, ParseError> {
    if n != 1 && n != 2 {
        return Err(err(0, ParseErrorKind::UnsupportedDimension(n)));
    }
    let toks = tokenize(source)?;
    let mut p = Parser { toks, pos: 0, end: source.len(), dim: n, depth: 0 };
    let root = p.expr()?;
    if let Some(tok) = p.peek().cloned() {
        return Err(err(p.here(), ParseErrorKind::UnexpectedToken(tok.text())));
    }
    Ok(ExprAst { root, dim: n })
}

fn check(value: f64, node: &Node) -> Result<f64, EvalError> {
    if value.is_finite() {
        Ok(value)
    } else {
        Err(EvalError::NonFinite { value, context: Printer(node, 0).to_string() })
    }
}

fn eval_node(node: &Node, point: &[f64]) -> Result<f64, EvalError> {
    let value = match node {
        Node::Num(v) => *v,
        Node::Var(i) => point[*i],
        Node::Neg(a) => -eval_node(a, point)?,
        Node::Call(f, a) => f.apply(eval_node(a, point)?),
        Node::Bin(op, a, b) => {
            let x = eval_node(a, point)?;
            let y = eval_node(b, point)?;
            match op {
                BinOp::Add => x + y,
                BinOp::Sub => x - y,
                BinOp::Mul => x * y,
                BinOp::Div => {
                    if y == 0.0 {
                        return Err(EvalError::DivisionByZero);
                    }
                    x / y
                }
                BinOp::Pow => pow(x, y),
            }
        }
    };
    check(value, node)
}

fn pow(x: f64, y: f64) -> f64 {
    if y == y.trunc() && y.abs() <= 64.0 {
        x.powi(y as i32)
    } else {
        x.powf(y)
    }
}

impl ExprAst {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn root(&self) -> &Node {
        &self.root
    }

    pub fn eval(&self, point: &[f64]) -> Result<f64, EvalError> {
        if point.len() != self.dim {
            return Err(EvalError::PointDimension { expected: self.dim, got: point.len() });
        }
        eval_node(&self.root, point)
    }
}

/// Free-function form of [`ExprAst::eval`].
pub fn eval(ast: &ExprAst, point: &[f64]) -> Result<f64, EvalError> {
    ast.eval(point)
}

struct Printer<'a>(&'a Node, usize);

impl Printer<'_> {
    fn var_name(&self, i: usize) -> String {
        match self.1 {
            2 => format!("x{}", i + 1),
            _ => "x".to_string(),
        }
    }
}

fn write_node(f: &mut fmt::Formatter<'_>, node: &Node, dim: usize, parent: u8) -> fmt::Result {
    match node {
        Node::Num(v) => {
            // exponent form keeps the literal inside the grammar
            let text = format!("{v:?}");
            if parent > 0 && text.starts_with('-') {
                write!(f, "({text})")
            } else {
                write!(f, "{text}")
            }
        }
        Node::Var(i) => write!(f, "{}", Printer(node, dim).var_name(*i)),
        Node::Call(func, a) => {
            write!(f, "{}(", func.name())?;
            write_node(f, a, dim, 0)?;
            write!(f, ")")
        }
        Node::Neg(a) => {
            let wrap = parent >= 5;
            if wrap {
                write!(f, "(")?;
            }
            write!(f, "-")?;
            write_node(f, a, dim, 3)?;
            if wrap {
                write!(f, ")")?;
            }
            Ok(())
        }
        Node::Bin(op, a, b) => {
            let prec = op.precedence();
            let wrap = prec < parent;
            if wrap {
                write!(f, "(")?;
            }
            let (left_ctx, right_ctx) = match op {
                BinOp::Pow => (5, 3),
                BinOp::Add | BinOp::Mul => (prec, prec),
                BinOp::Sub | BinOp::Div => (prec, prec + 1),
            };
            write_node(f, a, dim, left_ctx)?;
            write!(f, "{}", op.symbol())?;
            write_node(f, b, dim, right_ctx)?;
            if wrap {
                write!(f, ")")?;
            }
            Ok(())
        }
    }
}

impl fmt::Display for Printer<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write_node(f, self.0, self.1, 0)
    }
}

impl fmt::Display for ExprAst {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write_node(f, &self.root, self.dim, 0)
    }
}
