//! Symbolic scalar functions of the patch coordinates.
//!
//! A [`ScalarExpr`] is an immutable, reference-counted expression tree.
//! Constructors fold constants and drop additive/multiplicative identities,
//! but nothing more: two expressions that agree as functions can differ as
//! trees. Semantic zero is always decided by sampling (see [`crate::verify`]).

use std::collections::HashMap;
use std::fmt;
use std::ops;
use std::sync::Arc;

use thiserror::Error;

use crate::error::{Error, Result};

const FUNCTION_NAMES: [&str; 5] = ["sin", "cos", "exp", "ln", "sqrt"];

/// Named coordinates of a patch `x_0, ..., x_{m-1}`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct CoordinateSystem {
    names: Vec<String>,
}

impl CoordinateSystem {
    pub fn new<I, S>(names: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let names: Vec<String> = names.into_iter().map(Into::into).collect();
        if names.is_empty() {
            return Err(Error::InvalidCoordinates("at least one coordinate is required".into()));
        }
        for (i, name) in names.iter().enumerate() {
            if !is_identifier(name) {
                return Err(Error::InvalidCoordinates(format!("`{name}` is not an identifier")));
            }
            if FUNCTION_NAMES.contains(&name.as_str()) {
                return Err(Error::InvalidCoordinates(format!("`{name}` is a function name")));
            }
            if names[..i].contains(name) {
                return Err(Error::InvalidCoordinates(format!("duplicate coordinate `{name}`")));
            }
        }
        // `dx` and `d_x` are the basis tokens of coordinate `x`.
        for name in &names {
            for other in &names {
                if *name == format!("d{other}") || *name == format!("d_{other}") {
                    return Err(Error::InvalidCoordinates(format!(
                        "`{name}` collides with a basis token of `{other}`"
                    )));
                }
            }
        }
        Ok(Self { names })
    }

    /// Coordinates `x1, ..., xm`.
    pub fn numbered(m: usize) -> Self {
        Self::new((1..=m).map(|i| format!("x{i}"))).expect("numbered coordinates are valid")
    }

    pub fn dim(&self) -> usize {
        self.names.len()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn name(&self, i: usize) -> &str {
        &self.names[i]
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }
}

fn is_identifier(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_alphabetic()) && chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Func {
    Sin,
    Cos,
    Exp,
    Ln,
    Sqrt,
}

impl Func {
    pub fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Exp => "exp",
            Func::Ln => "ln",
            Func::Sqrt => "sqrt",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Some(match name {
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            "exp" => Func::Exp,
            "ln" => Func::Ln,
            "sqrt" => Func::Sqrt,
            _ => return None,
        })
    }

    fn apply_f64(self, v: f64) -> f64 {
        match self {
            Func::Sin => v.sin(),
            Func::Cos => v.cos(),
            Func::Exp => v.exp(),
            Func::Ln => v.ln(),
            Func::Sqrt => v.sqrt(),
        }
    }
}

#[derive(Debug, PartialEq)]
pub enum Node {
    Const(f64),
    Var(usize),
    Neg(ScalarExpr),
    Add(ScalarExpr, ScalarExpr),
    Sub(ScalarExpr, ScalarExpr),
    Mul(ScalarExpr, ScalarExpr),
    Div(ScalarExpr, ScalarExpr),
    Pow(ScalarExpr, f64),
    Call(Func, ScalarExpr),
}

/// Scalar expression tree. Cloning is cheap (shared subtrees).
#[derive(Clone, PartialEq)]
pub struct ScalarExpr(Arc<Node>);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EvalErrorKind {
    DivisionByZero,
    LogOfNonPositive,
    SqrtOfNegative,
    NonFinite,
}

/// Evaluation hit a singular point of the expression.
#[derive(Debug, Clone, Error)]
#[error("{kind:?} while evaluating a subterm")]
pub struct EvalError {
    pub kind: EvalErrorKind,
    pub subterm: ScalarExpr,
}

impl ScalarExpr {
    fn node(node: Node) -> Self {
        ScalarExpr(Arc::new(node))
    }

    pub fn constant(c: f64) -> Self {
        // normalise -0.0 so printing is stable
        Self::node(Node::Const(if c == 0.0 { 0.0 } else { c }))
    }

    pub fn zero() -> Self {
        Self::constant(0.0)
    }

    pub fn one() -> Self {
        Self::constant(1.0)
    }

    pub fn var(i: usize) -> Self {
        Self::node(Node::Var(i))
    }

    pub fn kind(&self) -> &Node {
        &self.0
    }

    pub fn as_const(&self) -> Option<f64> {
        match *self.0 {
            Node::Const(c) => Some(c),
            _ => None,
        }
    }

    /// Structurally the constant zero (not a semantic test).
    pub fn is_zero(&self) -> bool {
        self.as_const() == Some(0.0)
    }

    pub fn is_one(&self) -> bool {
        self.as_const() == Some(1.0)
    }

    pub fn neg(&self) -> Self {
        match &*self.0 {
            Node::Const(c) => Self::constant(-c),
            Node::Neg(inner) => inner.clone(),
            _ => Self::node(Node::Neg(self.clone())),
        }
    }

    pub fn add(&self, other: &Self) -> Self {
        match (self.as_const(), other.as_const()) {
            (Some(a), Some(b)) => Self::constant(a + b),
            (Some(0.0), _) => other.clone(),
            (_, Some(0.0)) => self.clone(),
            _ => Self::node(Node::Add(self.clone(), other.clone())),
        }
    }

    pub fn sub(&self, other: &Self) -> Self {
        match (self.as_const(), other.as_const()) {
            (Some(a), Some(b)) => Self::constant(a - b),
            (_, Some(0.0)) => self.clone(),
            (Some(0.0), _) => other.neg(),
            _ => Self::node(Node::Sub(self.clone(), other.clone())),
        }
    }

    pub fn mul(&self, other: &Self) -> Self {
        match (self.as_const(), other.as_const()) {
            (Some(a), Some(b)) => Self::constant(a * b),
            (Some(0.0), _) | (_, Some(0.0)) => Self::zero(),
            (Some(1.0), _) => other.clone(),
            (_, Some(1.0)) => self.clone(),
            (Some(-1.0), _) => other.neg(),
            (_, Some(-1.0)) => self.neg(),
            _ => Self::node(Node::Mul(self.clone(), other.clone())),
        }
    }

    pub fn div(&self, other: &Self) -> Self {
        match (self.as_const(), other.as_const()) {
            (Some(a), Some(b)) if b != 0.0 && (a / b).is_finite() => Self::constant(a / b),
            (Some(0.0), _) => Self::zero(),
            (_, Some(1.0)) => self.clone(),
            _ => Self::node(Node::Div(self.clone(), other.clone())),
        }
    }

    pub fn powf(&self, exponent: f64) -> Self {
        if exponent == 0.0 {
            return Self::one();
        }
        if exponent == 1.0 {
            return self.clone();
        }
        if let Some(c) = self.as_const() {
            let v = c.powf(exponent);
            if v.is_finite() {
                return Self::constant(v);
            }
        }
        Self::node(Node::Pow(self.clone(), exponent))
    }

    pub fn apply(&self, func: Func) -> Self {
        if let Some(c) = self.as_const() {
            let v = func.apply_f64(c);
            if v.is_finite() {
                return Self::constant(v);
            }
        }
        Self::node(Node::Call(func, self.clone()))
    }

    pub fn sin(&self) -> Self {
        self.apply(Func::Sin)
    }
    pub fn cos(&self) -> Self {
        self.apply(Func::Cos)
    }
    pub fn exp(&self) -> Self {
        self.apply(Func::Exp)
    }
    pub fn ln(&self) -> Self {
        self.apply(Func::Ln)
    }
    pub fn sqrt(&self) -> Self {
        self.apply(Func::Sqrt)
    }

    /// Largest variable index used, if any.
    pub fn max_var(&self) -> Option<usize> {
        match &*self.0 {
            Node::Const(_) => None,
            Node::Var(i) => Some(*i),
            Node::Neg(a) | Node::Pow(a, _) | Node::Call(_, a) => a.max_var(),
            Node::Add(a, b) | Node::Sub(a, b) | Node::Mul(a, b) | Node::Div(a, b) => a.max_var().max(b.max_var()),
        }
    }

    /// IEEE double evaluation at `point`.
    pub fn eval(&self, point: &[f64]) -> Result<f64, EvalError> {
        let fail = |kind| EvalError {
            kind,
            subterm: self.clone(),
        };
        let v = match &*self.0 {
            Node::Const(c) => *c,
            Node::Var(i) => point[*i],
            Node::Neg(a) => -a.eval(point)?,
            Node::Add(a, b) => a.eval(point)? + b.eval(point)?,
            Node::Sub(a, b) => a.eval(point)? - b.eval(point)?,
            Node::Mul(a, b) => a.eval(point)? * b.eval(point)?,
            Node::Div(a, b) => {
                let num = a.eval(point)?;
                let den = b.eval(point)?;
                if den == 0.0 {
                    return Err(fail(EvalErrorKind::DivisionByZero));
                }
                num / den
            }
            Node::Pow(a, n) => pow_checked(a.eval(point)?, *n).map_err(fail)?,
            Node::Call(func, a) => call_checked(*func, a.eval(point)?).map_err(fail)?,
        };
        if v.is_finite() {
            Ok(v)
        } else {
            Err(fail(EvalErrorKind::NonFinite))
        }
    }

    /// Exact partial derivative with respect to coordinate `i`.
    ///
    /// Shared subtrees are differentiated once, so the result stays
    /// proportional in size to the input DAG.
    pub fn partial(&self, i: usize) -> Self {
        self.partial_memo(i, &mut HashMap::new())
    }

    fn partial_memo(&self, i: usize, memo: &mut HashMap<*const Node, ScalarExpr>) -> Self {
        let key = Arc::as_ptr(&self.0);
        if let Some(d) = memo.get(&key) {
            return d.clone();
        }
        let d = match &*self.0 {
            Node::Const(_) => Self::zero(),
            Node::Var(j) => Self::constant(if *j == i { 1.0 } else { 0.0 }),
            Node::Neg(a) => a.partial_memo(i, memo).neg(),
            Node::Add(a, b) => a.partial_memo(i, memo).add(&b.partial_memo(i, memo)),
            Node::Sub(a, b) => a.partial_memo(i, memo).sub(&b.partial_memo(i, memo)),
            Node::Mul(a, b) => {
                let da = a.partial_memo(i, memo);
                let db = b.partial_memo(i, memo);
                da.mul(b).add(&a.mul(&db))
            }
            Node::Div(a, b) => {
                let da = a.partial_memo(i, memo);
                let db = b.partial_memo(i, memo);
                da.div(b).sub(&a.mul(&db).div(&b.powf(2.0)))
            }
            Node::Pow(a, n) => Self::constant(*n).mul(&a.powf(n - 1.0)).mul(&a.partial_memo(i, memo)),
            Node::Call(func, a) => {
                let da = a.partial_memo(i, memo);
                match func {
                    Func::Sin => a.cos().mul(&da),
                    Func::Cos => a.sin().mul(&da).neg(),
                    Func::Exp => self.mul(&da),
                    Func::Ln => da.div(a),
                    Func::Sqrt => da.div(&Self::constant(2.0).mul(self)),
                }
            }
        };
        memo.insert(key, d.clone());
        d
    }

    /// Top-level summands with their signs (`Add`, `Sub` and `Neg` are flattened).
    pub fn additive_terms(&self) -> Vec<(f64, ScalarExpr)> {
        let mut out = Vec::new();
        self.collect_terms(1.0, &mut out);
        out
    }

    fn collect_terms(&self, sign: f64, out: &mut Vec<(f64, ScalarExpr)>) {
        match &*self.0 {
            Node::Add(a, b) => {
                a.collect_terms(sign, out);
                b.collect_terms(sign, out);
            }
            Node::Sub(a, b) => {
                a.collect_terms(sign, out);
                b.collect_terms(-sign, out);
            }
            Node::Neg(a) => a.collect_terms(-sign, out),
            _ => out.push((sign, self.clone())),
        }
    }

    /// Render with the coordinate names of `coords`.
    pub fn display<'a>(&'a self, coords: &'a CoordinateSystem) -> impl fmt::Display + 'a {
        Printer { expr: self, coords }
    }

    fn precedence(&self) -> u8 {
        match &*self.0 {
            Node::Add(..) | Node::Sub(..) => 1,
            Node::Mul(..) | Node::Div(..) => 2,
            Node::Neg(_) => 3,
            Node::Const(c) if *c < 0.0 => 3,
            Node::Pow(..) => 4,
            _ => 5,
        }
    }
}

impl fmt::Debug for ScalarExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let names: Vec<String> = match self.max_var() {
            Some(m) => (1..=m + 1).map(|i| format!("x{i}")).collect(),
            None => vec!["x1".into()],
        };
        let coords = CoordinateSystem { names };
        let out = write!(f, "{}", self.display(&coords));
        out
    }
}

macro_rules! binop {
    ($trait:ident, $method:ident) => {
        impl ops::$trait<&ScalarExpr> for &ScalarExpr {
            type Output = ScalarExpr;
            fn $method(self, rhs: &ScalarExpr) -> ScalarExpr {
                ScalarExpr::$method(self, rhs)
            }
        }
        impl ops::$trait<ScalarExpr> for ScalarExpr {
            type Output = ScalarExpr;
            fn $method(self, rhs: ScalarExpr) -> ScalarExpr {
                ScalarExpr::$method(&self, &rhs)
            }
        }
        impl ops::$trait<&ScalarExpr> for ScalarExpr {
            type Output = ScalarExpr;
            fn $method(self, rhs: &ScalarExpr) -> ScalarExpr {
                ScalarExpr::$method(&self, rhs)
            }
        }
        impl ops::$trait<ScalarExpr> for &ScalarExpr {
            type Output = ScalarExpr;
            fn $method(self, rhs: ScalarExpr) -> ScalarExpr {
                ScalarExpr::$method(self, &rhs)
            }
        }
    };
}

binop!(Add, add);
binop!(Sub, sub);
binop!(Mul, mul);
binop!(Div, div);

impl ops::Neg for &ScalarExpr {
    type Output = ScalarExpr;
    fn neg(self) -> ScalarExpr {
        ScalarExpr::neg(self)
    }
}

impl ops::Neg for ScalarExpr {
    type Output = ScalarExpr;
    fn neg(self) -> ScalarExpr {
        ScalarExpr::neg(&self)
    }
}

impl From<f64> for ScalarExpr {
    fn from(c: f64) -> Self {
        ScalarExpr::constant(c)
    }
}

struct Printer<'a> {
    expr: &'a ScalarExpr,
    coords: &'a CoordinateSystem,
}

impl Printer<'_> {
    fn child<'b>(&'b self, e: &'b ScalarExpr) -> Printer<'b> {
        Printer {
            expr: e,
            coords: self.coords,
        }
    }

    fn write_operand(&self, f: &mut fmt::Formatter<'_>, e: &ScalarExpr, min_prec: u8) -> fmt::Result {
        if e.precedence() >= min_prec {
            write!(f, "{}", self.child(e))
        } else {
            write!(f, "({})", self.child(e))
        }
    }
}

impl fmt::Display for Printer<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.expr.kind() {
            Node::Const(c) if *c < 0.0 => write!(f, "-{}", -c),
            Node::Const(c) => write!(f, "{c}"),
            Node::Var(i) => match self.coords.names.get(*i) {
                Some(name) => f.write_str(name),
                None => write!(f, "x{i}"),
            },
            Node::Neg(a) => {
                f.write_str("-")?;
                self.write_operand(f, a, 4)
            }
            Node::Add(a, b) | Node::Sub(a, b) => {
                let op = if matches!(self.expr.kind(), Node::Add(..)) {
                    " + "
                } else {
                    " - "
                };
                self.write_operand(f, a, 1)?;
                f.write_str(op)?;
                self.write_operand(f, b, 2)
            }
            Node::Mul(a, b) | Node::Div(a, b) => {
                let op = if matches!(self.expr.kind(), Node::Mul(..)) {
                    "*"
                } else {
                    "/"
                };
                self.write_operand(f, a, 2)?;
                f.write_str(op)?;
                self.write_operand(f, b, 3)
            }
            Node::Pow(a, n) => {
                self.write_operand(f, a, 5)?;
                if *n < 0.0 {
                    write!(f, "**(-{})", -n)
                } else {
                    write!(f, "**{n}")
                }
            }
            Node::Call(func, a) => write!(f, "{}({})", func.name(), self.child(a)),
        }
    }
}

// ---------------------------------------------------------------------------
// Lexer and scalar parser. The geometry DSL in `cli::geometry` shares the lexer.

#[derive(Debug, Clone, PartialEq)]
pub(crate) enum Token {
    Number(f64),
    Ident(String),
    Plus,
    Minus,
    Star,
    StarStar,
    Slash,
    Caret,
    LParen,
    RParen,
    End,
}

impl Token {
    pub(crate) fn describe(&self) -> String {
        match self {
            Token::Number(v) => format!("number {v}"),
            Token::Ident(s) => format!("identifier `{s}`"),
            Token::Plus => "`+`".into(),
            Token::Minus => "`-`".into(),
            Token::Star => "`*`".into(),
            Token::StarStar => "`**`".into(),
            Token::Slash => "`/`".into(),
            Token::Caret => "`^`".into(),
            Token::LParen => "`(`".into(),
            Token::RParen => "`)`".into(),
            Token::End => "end of input".into(),
        }
    }
}

pub(crate) fn tokenize(text: &str) -> Result<Vec<(usize, Token)>> {
    let bytes = text.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        let start = i;
        match c {
            b' ' | b'\t' | b'\n' | b'\r' => {
                i += 1;
                continue;
            }
            b'+' => out.push((start, Token::Plus)),
            b'-' => out.push((start, Token::Minus)),
            b'/' => out.push((start, Token::Slash)),
            b'^' => out.push((start, Token::Caret)),
            b'(' => out.push((start, Token::LParen)),
            b')' => out.push((start, Token::RParen)),
            b'*' => {
                if bytes.get(i + 1) == Some(&b'*') {
                    i += 1;
                    out.push((start, Token::StarStar));
                } else {
                    out.push((start, Token::Star));
                }
            }
            b'0'..=b'9' | b'.' => {
                while i < bytes.len() && (bytes[i].is_ascii_digit() || bytes[i] == b'.') {
                    i += 1;
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
                let lexeme = &text[start..i];
                let value: f64 = lexeme.parse().map_err(|_| Error::Syntax {
                    position: start,
                    expected: "number".into(),
                    found: format!("`{lexeme}`"),
                })?;
                out.push((start, Token::Number(value)));
                continue;
            }
            c if c.is_ascii_alphabetic() => {
                while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                    i += 1;
                }
                out.push((start, Token::Ident(text[start..i].to_string())));
                continue;
            }
            _ => {
                return Err(Error::Syntax {
                    position: start,
                    expected: "expression".into(),
                    found: format!("character `{}`", text[start..].chars().next().unwrap()),
                })
            }
        }
        i += 1;
    }
    out.push((text.len(), Token::End));
    Ok(out)
}

pub(crate) struct TokenCursor {
    tokens: Vec<(usize, Token)>,
    pos: usize,
}

impl TokenCursor {
    pub(crate) fn new(text: &str) -> Result<Self> {
        Ok(Self {
            tokens: tokenize(text)?,
            pos: 0,
        })
    }

    pub(crate) fn peek(&self) -> &Token {
        &self.tokens[self.pos].1
    }

    pub(crate) fn position(&self) -> usize {
        self.tokens[self.pos].0
    }

    pub(crate) fn bump(&mut self) -> Token {
        let t = self.tokens[self.pos].1.clone();
        if self.pos + 1 < self.tokens.len() {
            self.pos += 1;
        }
        t
    }

    pub(crate) fn eat(&mut self, t: &Token) -> bool {
        if self.peek() == t {
            self.bump();
            true
        } else {
            false
        }
    }

    pub(crate) fn error(&self, expected: &str) -> Error {
        Error::Syntax {
            position: self.position(),
            expected: expected.into(),
            found: self.peek().describe(),
        }
    }

    pub(crate) fn expect(&mut self, t: &Token, expected: &str) -> Result<()> {
        if self.eat(t) {
            Ok(())
        } else {
            Err(self.error(expected))
        }
    }
}

/// Parse scalar text over `coords`.
///
/// Grammar: `expr := term (("+"|"-") term)*`, `term := factor (("*"|"/") factor)*`,
/// `factor := "-"? atom ("**" factor)?`, `atom := number | ident | func "(" expr ")" | "(" expr ")"`.
/// The exponent of `**` must reduce to a numeric constant; `-a**b` means `-(a**b)`.
pub fn parse_scalar(text: &str, coords: &CoordinateSystem) -> Result<ScalarExpr> {
    let mut cur = TokenCursor::new(text)?;
    let e = parse_expr(&mut cur, coords)?;
    if *cur.peek() != Token::End {
        return Err(cur.error("operator or end of input"));
    }
    Ok(e)
}

pub(crate) fn parse_expr(cur: &mut TokenCursor, coords: &CoordinateSystem) -> Result<ScalarExpr> {
    let mut acc = parse_term(cur, coords)?;
    loop {
        if cur.eat(&Token::Plus) {
            acc = acc.add(&parse_term(cur, coords)?);
        } else if cur.eat(&Token::Minus) {
            acc = acc.sub(&parse_term(cur, coords)?);
        } else {
            return Ok(acc);
        }
    }
}

fn parse_term(cur: &mut TokenCursor, coords: &CoordinateSystem) -> Result<ScalarExpr> {
    let mut acc = parse_factor(cur, coords)?;
    loop {
        if cur.eat(&Token::Star) {
            acc = acc.mul(&parse_factor(cur, coords)?);
        } else if cur.eat(&Token::Slash) {
            acc = acc.div(&parse_factor(cur, coords)?);
        } else {
            return Ok(acc);
        }
    }
}

fn parse_factor(cur: &mut TokenCursor, coords: &CoordinateSystem) -> Result<ScalarExpr> {
    let negate = cur.eat(&Token::Minus);
    let base = parse_atom(cur, coords)?;
    let value = if cur.eat(&Token::StarStar) {
        let exp_pos = cur.position();
        let exponent = parse_factor(cur, coords)?;
        let n = exponent.as_const().ok_or_else(|| Error::Syntax {
            position: exp_pos,
            expected: "numeric exponent".into(),
            found: "non-constant expression".into(),
        })?;
        base.powf(n)
    } else {
        base
    };
    Ok(if negate { value.neg() } else { value })
}

fn parse_atom(cur: &mut TokenCursor, coords: &CoordinateSystem) -> Result<ScalarExpr> {
    match cur.peek().clone() {
        Token::Number(v) => {
            cur.bump();
            Ok(ScalarExpr::constant(v))
        }
        Token::Ident(name) => {
            cur.bump();
            if let Some(func) = Func::from_name(&name) {
                cur.expect(&Token::LParen, "`(`")?;
                let arg = parse_expr(cur, coords)?;
                cur.expect(&Token::RParen, "`)`")?;
                Ok(arg.apply(func))
            } else if let Some(i) = coords.index_of(&name) {
                Ok(ScalarExpr::var(i))
            } else {
                Err(Error::UnknownIdentifier(name))
            }
        }
        Token::LParen => {
            cur.bump();
            let e = parse_expr(cur, coords)?;
            cur.expect(&Token::RParen, "`)`")?;
            Ok(e)
        }
        _ => Err(cur.error("number, identifier, function or `(`")),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
enum Op {
    Const(u64),
    Var(usize),
    Neg(usize),
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Div(usize, usize),
    Pow(usize, u64),
    Call(Func, usize),
}

/// A batch of expressions flattened into one straight-line program.
///
/// Structurally equal subexpressions are merged, so a node shared by many
/// coefficients (or rebuilt independently by different operators) is
/// evaluated once per point.
#[derive(Debug, Clone)]
pub struct Tape {
    ops: Vec<Op>,
    exprs: Vec<ScalarExpr>,
    roots: Vec<usize>,
}

impl Tape {
    pub fn new(roots: &[ScalarExpr]) -> Self {
        let mut b = TapeBuilder::default();
        let roots = roots.iter().map(|e| b.add(e)).collect();
        Tape {
            ops: b.ops,
            exprs: b.exprs,
            roots,
        }
    }

    pub fn len(&self) -> usize {
        self.ops.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ops.is_empty()
    }

    /// Values of the roots, in the order given to [`Tape::new`].
    pub fn eval(&self, point: &[f64]) -> std::result::Result<Vec<f64>, EvalError> {
        let mut slots: Vec<f64> = Vec::with_capacity(self.ops.len());
        for (k, op) in self.ops.iter().enumerate() {
            let fail = |kind| EvalError {
                kind,
                subterm: self.exprs[k].clone(),
            };
            let v = match *op {
                Op::Const(bits) => f64::from_bits(bits),
                Op::Var(i) => point[i],
                Op::Neg(a) => -slots[a],
                Op::Add(a, b) => slots[a] + slots[b],
                Op::Sub(a, b) => slots[a] - slots[b],
                Op::Mul(a, b) => slots[a] * slots[b],
                Op::Div(a, b) => {
                    if slots[b] == 0.0 {
                        return Err(fail(EvalErrorKind::DivisionByZero));
                    }
                    slots[a] / slots[b]
                }
                Op::Pow(a, bits) => pow_checked(slots[a], f64::from_bits(bits)).map_err(fail)?,
                Op::Call(func, a) => call_checked(func, slots[a]).map_err(fail)?,
            };
            if !v.is_finite() {
                return Err(fail(EvalErrorKind::NonFinite));
            }
            slots.push(v);
        }
        Ok(self.roots.iter().map(|&r| slots[r]).collect())
    }
}

#[derive(Default)]
struct TapeBuilder {
    ops: Vec<Op>,
    exprs: Vec<ScalarExpr>,
    by_op: HashMap<Op, usize>,
    by_ptr: HashMap<*const Node, usize>,
}

impl TapeBuilder {
    fn add(&mut self, e: &ScalarExpr) -> usize {
        let key = Arc::as_ptr(&e.0);
        if let Some(&k) = self.by_ptr.get(&key) {
            return k;
        }
        let op = match &*e.0 {
            Node::Const(c) => Op::Const(c.to_bits()),
            Node::Var(i) => Op::Var(*i),
            Node::Neg(a) => Op::Neg(self.add(a)),
            Node::Add(a, b) => Op::Add(self.add(a), self.add(b)),
            Node::Sub(a, b) => Op::Sub(self.add(a), self.add(b)),
            Node::Mul(a, b) => Op::Mul(self.add(a), self.add(b)),
            Node::Div(a, b) => Op::Div(self.add(a), self.add(b)),
            Node::Pow(a, n) => Op::Pow(self.add(a), n.to_bits()),
            Node::Call(f, a) => Op::Call(*f, self.add(a)),
        };
        let k = *self.by_op.entry(op).or_insert_with(|| {
            self.ops.push(op);
            self.exprs.push(e.clone());
            self.ops.len() - 1
        });
        self.by_ptr.insert(key, k);
        k
    }
}

fn pow_checked(base: f64, n: f64) -> std::result::Result<f64, EvalErrorKind> {
    if base == 0.0 && n < 0.0 {
        return Err(EvalErrorKind::DivisionByZero);
    }
    if n.fract() == 0.0 && n.abs() <= i32::MAX as f64 {
        Ok(base.powi(n as i32))
    } else if base < 0.0 {
        Err(EvalErrorKind::NonFinite)
    } else {
        Ok(base.powf(n))
    }
}

fn call_checked(func: Func, arg: f64) -> std::result::Result<f64, EvalErrorKind> {
    match func {
        Func::Ln if arg <= 0.0 => Err(EvalErrorKind::LogOfNonPositive),
        Func::Sqrt if arg < 0.0 => Err(EvalErrorKind::SqrtOfNegative),
        _ => Ok(func.apply_f64(arg)),
    }
}
