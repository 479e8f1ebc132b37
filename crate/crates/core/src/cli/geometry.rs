//! Text format for forms and multivectors.
//!
//! `dx1` is the differential of coordinate `x1`, `d_x1` the coordinate vector
//! field, `^` the exterior product and `*`, `/` scale by functions. The
//! scalar sublanguage is the one accepted by [`crate::expr::parse_scalar`].
//!
//! ```text
//! gexpr   := gterm (("+" | "-") gterm)*
//! gterm   := gfactor (("*" | "/" | "^") gfactor)*
//! gfactor := "-"? gatom ("**" factor)?
//! gatom   := number | ident | "d" ident | "d_" ident | func "(" expr ")" | "(" gexpr ")"
//! ```

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::expr::{parse_expr, CoordinateSystem, Func, ScalarExpr, Token, TokenCursor};
use crate::exterior::{Form, Multivector};

/// A parsed geometric object.
#[derive(Debug, Clone, PartialEq)]
pub enum Geometry {
    Scalar(ScalarExpr),
    Form(Form),
    Multivector(Multivector),
}

impl Geometry {
    pub fn degree(&self) -> usize {
        match self {
            Geometry::Scalar(_) => 0,
            Geometry::Form(f) => f.degree(),
            Geometry::Multivector(v) => v.degree(),
        }
    }

    /// Covariant view; scalars become 0-forms.
    pub fn into_form(self, coords: &Arc<CoordinateSystem>) -> Option<Form> {
        match self {
            Geometry::Scalar(s) => Some(Form::scalar(coords, s)),
            Geometry::Form(f) => Some(f),
            Geometry::Multivector(_) => None,
        }
    }

    /// Contravariant view; scalars become degree-0 multivectors.
    pub fn into_multivector(self, coords: &Arc<CoordinateSystem>) -> Option<Multivector> {
        match self {
            Geometry::Scalar(s) => Some(Multivector::scalar(coords, s)),
            Geometry::Multivector(v) => Some(v),
            Geometry::Form(_) => None,
        }
    }

    /// Human-readable kind, e.g. `2-form` or `vector`.
    pub fn kind(&self) -> String {
        match self {
            Geometry::Scalar(_) => "function".into(),
            Geometry::Form(f) => format!("{}-form", f.degree()),
            Geometry::Multivector(v) if v.degree() == 1 => "vector".into(),
            Geometry::Multivector(v) => format!("{}-vector", v.degree()),
        }
    }
}

impl fmt::Display for Geometry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Geometry::Scalar(s) => write!(f, "{s:?}"),
            Geometry::Form(x) => write!(f, "{x}"),
            Geometry::Multivector(x) => write!(f, "{x}"),
        }
    }
}

fn mixture(a: &Geometry, b: &Geometry) -> Error {
    Error::DegreeMixture {
        left: a.kind(),
        right: b.kind(),
    }
}

fn add(a: Geometry, b: Geometry, coords: &Arc<CoordinateSystem>) -> Result<Geometry> {
    use Geometry::*;
    Ok(match (a, b) {
        (Scalar(x), Scalar(y)) => Scalar(x.add(&y)),
        (Form(x), Form(y)) if x.degree() == y.degree() => Form(x.plus(&y)),
        (Multivector(x), Multivector(y)) if x.degree() == y.degree() => Multivector(x.plus(&y)),
        (Scalar(s), Form(f)) | (Form(f), Scalar(s)) if f.degree() == 0 => {
            Form(f.plus(&crate::exterior::Form::scalar(coords, s)))
        }
        (Scalar(s), Multivector(v)) | (Multivector(v), Scalar(s)) if v.degree() == 0 => {
            Multivector(v.plus(&crate::exterior::Multivector::scalar(coords, s)))
        }
        (a, b) => return Err(mixture(&a, &b)),
    })
}

fn scale(g: Geometry, s: &ScalarExpr) -> Geometry {
    match g {
        Geometry::Scalar(x) => Geometry::Scalar(x.mul(s)),
        Geometry::Form(f) => Geometry::Form(f.scaled(s)),
        Geometry::Multivector(v) => Geometry::Multivector(v.scaled(s)),
    }
}

fn negate(g: Geometry) -> Geometry {
    match g {
        Geometry::Scalar(x) => Geometry::Scalar(x.neg()),
        Geometry::Form(f) => Geometry::Form(f.negated()),
        Geometry::Multivector(v) => Geometry::Multivector(v.negated()),
    }
}

/// Parse geometry text over `coords`.
pub fn parse_geometry(text: &str, coords: &Arc<CoordinateSystem>) -> Result<Geometry> {
    let mut cur = TokenCursor::new(text)?;
    let g = parse_sum(&mut cur, coords)?;
    if *cur.peek() != Token::End {
        return Err(cur.error("operator or end of input"));
    }
    Ok(g)
}

fn parse_sum(cur: &mut TokenCursor, coords: &Arc<CoordinateSystem>) -> Result<Geometry> {
    let mut acc = parse_product(cur, coords)?;
    loop {
        if cur.eat(&Token::Plus) {
            let rhs = parse_product(cur, coords)?;
            acc = add(acc, rhs, coords)?;
        } else if cur.eat(&Token::Minus) {
            let rhs = parse_product(cur, coords)?;
            acc = add(acc, negate(rhs), coords)?;
        } else {
            return Ok(acc);
        }
    }
}

fn parse_product(cur: &mut TokenCursor, coords: &Arc<CoordinateSystem>) -> Result<Geometry> {
    use Geometry::*;
    let mut acc = parse_unary(cur, coords)?;
    loop {
        let op_pos = cur.position();
        let op = cur.peek().clone();
        if !matches!(op, Token::Star | Token::Slash | Token::Caret) {
            return Ok(acc);
        }
        cur.bump();
        let rhs = parse_unary(cur, coords)?;
        acc = match (op, acc, rhs) {
            (Token::Slash, a, Scalar(s)) => scale(a, &ScalarExpr::one().div(&s)),
            (Token::Slash, _, b) => {
                return Err(Error::Syntax {
                    position: op_pos,
                    expected: "function divisor".into(),
                    found: b.kind(),
                })
            }
            (_, Scalar(s), b) | (_, b, Scalar(s)) => scale(b, &s),
            (Token::Caret, Form(a), Form(b)) => Form(a.wedge(&b)?),
            (Token::Caret, Multivector(a), Multivector(b)) => Multivector(a.wedge(&b)?),
            (Token::Caret, a, b) => return Err(mixture(&a, &b)),
            (_, a, _) => {
                return Err(Error::Syntax {
                    position: op_pos,
                    expected: "`^` between two fields".into(),
                    found: format!("`*` after a {}", a.kind()),
                })
            }
        };
    }
}

fn parse_unary(cur: &mut TokenCursor, coords: &Arc<CoordinateSystem>) -> Result<Geometry> {
    let negated = cur.eat(&Token::Minus);
    let base = parse_atom(cur, coords)?;
    let value = if *cur.peek() == Token::StarStar {
        let pos = cur.position();
        cur.bump();
        let Geometry::Scalar(b) = base else {
            return Err(Error::Syntax {
                position: pos,
                expected: "operator".into(),
                found: "`**` applied to a field".into(),
            });
        };
        let exp_pos = cur.position();
        let exponent = parse_unary(cur, coords)?;
        let n = match exponent {
            Geometry::Scalar(e) => e.as_const(),
            _ => None,
        }
        .ok_or_else(|| Error::Syntax {
            position: exp_pos,
            expected: "numeric exponent".into(),
            found: "non-constant expression".into(),
        })?;
        Geometry::Scalar(b.powf(n))
    } else {
        base
    };
    Ok(if negated { negate(value) } else { value })
}

fn parse_atom(cur: &mut TokenCursor, coords: &Arc<CoordinateSystem>) -> Result<Geometry> {
    match cur.peek().clone() {
        Token::Number(v) => {
            cur.bump();
            Ok(Geometry::Scalar(ScalarExpr::constant(v)))
        }
        Token::Ident(name) => {
            cur.bump();
            if let Some(func) = Func::from_name(&name) {
                cur.expect(&Token::LParen, "`(`")?;
                let arg = parse_expr(cur, coords)?;
                cur.expect(&Token::RParen, "`)`")?;
                return Ok(Geometry::Scalar(arg.apply(func)));
            }
            if let Some(i) = coords.index_of(&name) {
                return Ok(Geometry::Scalar(ScalarExpr::var(i)));
            }
            if let Some(i) = name.strip_prefix("d_").and_then(|n| coords.index_of(n)) {
                return Ok(Geometry::Multivector(Multivector::basis(coords, i)));
            }
            if let Some(i) = name.strip_prefix('d').and_then(|n| coords.index_of(n)) {
                return Ok(Geometry::Form(Form::basis(coords, i)));
            }
            Err(Error::UnknownIdentifier(name))
        }
        Token::LParen => {
            cur.bump();
            let g = parse_sum(cur, coords)?;
            cur.expect(&Token::RParen, "`)`")?;
            Ok(g)
        }
        _ => Err(cur.error("number, identifier, basis element, function or `(`")),
    }
}
