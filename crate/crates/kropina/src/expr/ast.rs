//! Expression trees over chart coordinates.
//!
//! The grammar is deliberately small: real literals, coordinates, the four
//! arithmetic operators, unary negation, integer powers, and the functions
//! `sin`, `cos`, `exp`, `ln`, `sqrt`, `atan`. The set is closed under
//! differentiation, which is what the geometry layers rely on: Christoffel
//! symbols need first metric derivatives, their derivatives need second
//! ones, and the second covariant derivative needs one more on top.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};

/// Unary function heads.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Sin,
    Cos,
    Exp,
    Ln,
    Sqrt,
    Atan,
}

impl Func {
    pub fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Exp => "exp",
            Func::Ln => "ln",
            Func::Sqrt => "sqrt",
            Func::Atan => "atan",
        }
    }

    pub fn from_name(name: &str) -> Option<Func> {
        match name {
            "sin" => Some(Func::Sin),
            "cos" => Some(Func::Cos),
            "exp" => Some(Func::Exp),
            "ln" => Some(Func::Ln),
            "sqrt" => Some(Func::Sqrt),
            "atan" => Some(Func::Atan),
            _ => None,
        }
    }

    /// Applies the function where it is defined. `None` marks a domain
    /// violation; the caller knows which subexpression to blame.
    fn apply(self, v: f64) -> Option<f64> {
        match self {
            Func::Sin => Some(v.sin()),
            Func::Cos => Some(v.cos()),
            Func::Exp => Some(v.exp()),
            Func::Ln => (v > 0.0).then(|| v.ln()),
            Func::Sqrt => (v >= 0.0).then(|| v.sqrt()),
            Func::Atan => Some(v.atan()),
        }
    }

    fn domain_message(self) -> &'static str {
        match self {
            Func::Ln => "logarithm of a non-positive value",
            Func::Sqrt => "square root of a negative value",
            _ => "argument outside function domain",
        }
    }
}

/// Immutable expression tree. Children are shared through `Arc`, so clones
/// are cheap and evaluation is safe from any number of threads.
#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Const(f64),
    /// Zero-based coordinate index into the owning chart.
    Coord(usize),
    Neg(Arc<Expr>),
    Add(Arc<Expr>, Arc<Expr>),
    Sub(Arc<Expr>, Arc<Expr>),
    Mul(Arc<Expr>, Arc<Expr>),
    Div(Arc<Expr>, Arc<Expr>),
    /// Power with a fixed integer exponent.
    Pow(Arc<Expr>, i32),
    Call(Func, Arc<Expr>),
}

impl Expr {
    pub fn zero() -> Expr {
        Expr::Const(0.0)
    }

    pub fn one() -> Expr {
        Expr::Const(1.0)
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, Expr::Const(c) if *c == 0.0)
    }

    pub fn is_one(&self) -> bool {
        matches!(self, Expr::Const(c) if *c == 1.0)
    }

    /// Largest coordinate index used anywhere in the tree, if any.
    pub fn max_coord(&self) -> Option<usize> {
        match self {
            Expr::Const(_) => None,
            Expr::Coord(i) => Some(*i),
            Expr::Neg(e) | Expr::Pow(e, _) | Expr::Call(_, e) => e.max_coord(),
            Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) | Expr::Div(a, b) => {
                match (a.max_coord(), b.max_coord()) {
                    (Some(x), Some(y)) => Some(x.max(y)),
                    (Some(x), None) | (None, Some(x)) => Some(x),
                    (None, None) => None,
                }
            }
        }
    }

    /// Evaluates at a point. Deterministic: identical inputs give
    /// bit-identical outputs. Any division by zero, function-domain
    /// violation, or non-finite intermediate is reported together with the
    /// offending subexpression.
    pub fn eval(&self, x: &[f64]) -> Result<f64> {
        let v = match self {
            Expr::Const(c) => *c,
            Expr::Coord(i) => *x.get(*i).ok_or_else(|| {
                Error::Chart(format!(
                    "coordinate index {} out of range for a point of dimension {}",
                    i + 1,
                    x.len()
                ))
            })?,
            Expr::Neg(e) => -e.eval(x)?,
            Expr::Add(a, b) => a.eval(x)? + b.eval(x)?,
            Expr::Sub(a, b) => a.eval(x)? - b.eval(x)?,
            Expr::Mul(a, b) => a.eval(x)? * b.eval(x)?,
            Expr::Div(a, b) => {
                let den = b.eval(x)?;
                if den == 0.0 {
                    return Err(self.domain_error("division by zero"));
                }
                a.eval(x)? / den
            }
            Expr::Pow(e, k) => {
                let base = e.eval(x)?;
                if base == 0.0 && *k < 0 {
                    return Err(self.domain_error("zero raised to a negative power"));
                }
                base.powi(*k)
            }
            Expr::Call(f, e) => {
                let arg = e.eval(x)?;
                f.apply(arg)
                    .ok_or_else(|| self.domain_error(f.domain_message()))?
            }
        };
        if v.is_finite() {
            Ok(v)
        } else {
            Err(self.domain_error("non-finite result"))
        }
    }

    fn domain_error(&self, reason: &str) -> Error {
        Error::Domain {
            subexpression: self.to_string(),
            reason: reason.to_string(),
        }
    }

    /// Exact partial derivative with respect to coordinate `k`. The result
    /// stays inside the grammar, so it can be differentiated again.
    pub fn differentiate(&self, k: usize) -> Expr {
        match self {
            Expr::Const(_) => Expr::zero(),
            Expr::Coord(i) => {
                if *i == k {
                    Expr::one()
                } else {
                    Expr::zero()
                }
            }
            Expr::Neg(e) => neg(e.differentiate(k)),
            Expr::Add(a, b) => add(a.differentiate(k), b.differentiate(k)),
            Expr::Sub(a, b) => sub(a.differentiate(k), b.differentiate(k)),
            Expr::Mul(a, b) => add(
                mul(a.differentiate(k), b.as_ref().clone()),
                mul(a.as_ref().clone(), b.differentiate(k)),
            ),
            Expr::Div(a, b) => div(
                sub(
                    mul(a.differentiate(k), b.as_ref().clone()),
                    mul(a.as_ref().clone(), b.differentiate(k)),
                ),
                pow(b.as_ref().clone(), 2),
            ),
            Expr::Pow(e, n) => {
                if *n == 0 {
                    Expr::zero()
                } else {
                    mul(
                        mul(Expr::Const(f64::from(*n)), pow(e.as_ref().clone(), n - 1)),
                        e.differentiate(k),
                    )
                }
            }
            Expr::Call(f, e) => {
                let du = e.differentiate(k);
                let u = e.as_ref().clone();
                match f {
                    Func::Sin => mul(call(Func::Cos, u), du),
                    Func::Cos => neg(mul(call(Func::Sin, u), du)),
                    Func::Exp => mul(call(Func::Exp, u), du),
                    Func::Ln => div(du, u),
                    Func::Sqrt => div(du, mul(Expr::Const(2.0), call(Func::Sqrt, u))),
                    Func::Atan => div(du, add(Expr::one(), mul(u.clone(), u))),
                }
            }
        }
    }
}

fn arc(e: Expr) -> Arc<Expr> {
    Arc::new(e)
}

// Smart constructors: constant folding plus the 0/1 identities. They bound
// the growth of derivative trees without attempting canonicalization;
// downstream correctness is checked pointwise, not structurally.

pub(crate) fn add(a: Expr, b: Expr) -> Expr {
    match (&a, &b) {
        (Expr::Const(x), Expr::Const(y)) if (x + y).is_finite() => Expr::Const(x + y),
        _ if a.is_zero() => b,
        _ if b.is_zero() => a,
        _ => Expr::Add(arc(a), arc(b)),
    }
}

pub(crate) fn sub(a: Expr, b: Expr) -> Expr {
    match (&a, &b) {
        (Expr::Const(x), Expr::Const(y)) if (x - y).is_finite() => Expr::Const(x - y),
        _ if b.is_zero() => a,
        _ if a.is_zero() => neg(b),
        _ => Expr::Sub(arc(a), arc(b)),
    }
}

pub(crate) fn mul(a: Expr, b: Expr) -> Expr {
    match (&a, &b) {
        (Expr::Const(x), Expr::Const(y)) if (x * y).is_finite() => Expr::Const(x * y),
        _ if a.is_zero() || b.is_zero() => Expr::zero(),
        _ if a.is_one() => b,
        _ if b.is_one() => a,
        _ => Expr::Mul(arc(a), arc(b)),
    }
}

pub(crate) fn div(a: Expr, b: Expr) -> Expr {
    match (&a, &b) {
        (Expr::Const(x), Expr::Const(y)) if *y != 0.0 && (x / y).is_finite() => {
            Expr::Const(x / y)
        }
        _ if a.is_zero() => Expr::zero(),
        _ if b.is_one() => a,
        _ => Expr::Div(arc(a), arc(b)),
    }
}

pub(crate) fn neg(a: Expr) -> Expr {
    match a {
        Expr::Const(c) => Expr::Const(-c),
        Expr::Neg(inner) => inner.as_ref().clone(),
        _ => Expr::Neg(arc(a)),
    }
}

pub(crate) fn pow(e: Expr, k: i32) -> Expr {
    match (&e, k) {
        (_, 0) => Expr::one(),
        (_, 1) => e,
        (Expr::Const(c), _) if c.powi(k).is_finite() && !(*c == 0.0 && k < 0) => {
            Expr::Const(c.powi(k))
        }
        (Expr::Pow(inner, m), _) => match m.checked_mul(k) {
            Some(mk) => pow(inner.as_ref().clone(), mk),
            None => Expr::Pow(arc(e), k),
        },
        _ => Expr::Pow(arc(e), k),
    }
}

pub(crate) fn call(f: Func, e: Expr) -> Expr {
    if let Expr::Const(c) = e {
        if let Some(v) = f.apply(c) {
            if v.is_finite() {
                return Expr::Const(v);
            }
        }
    }
    Expr::Call(f, arc(e))
}

// Precedence levels for display: addition 1, multiplication 2, unary
// negation 3, power 4, atoms 5. Matches the parser, so `to_string`
// round-trips through `parse`.
fn precedence(e: &Expr) -> u8 {
    match e {
        Expr::Add(..) | Expr::Sub(..) => 1,
        Expr::Mul(..) | Expr::Div(..) => 2,
        Expr::Neg(..) => 3,
        Expr::Pow(..) => 4,
        Expr::Const(c) if *c < 0.0 => 3,
        _ => 5,
    }
}

struct Paren<'a> {
    e: &'a Expr,
    /// Children below this precedence get wrapped in parentheses.
    min: u8,
}

impl fmt::Display for Paren<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if precedence(self.e) < self.min {
            write!(f, "({})", self.e)
        } else {
            write!(f, "{}", self.e)
        }
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Const(c) => write!(f, "{}", c),
            Expr::Coord(i) => write!(f, "x{}", i + 1),
            Expr::Neg(e) => write!(f, "-{}", Paren { e, min: 3 }),
            Expr::Add(a, b) => {
                write!(f, "{} + {}", Paren { e: a, min: 1 }, Paren { e: b, min: 2 })
            }
            Expr::Sub(a, b) => {
                write!(f, "{} - {}", Paren { e: a, min: 1 }, Paren { e: b, min: 2 })
            }
            Expr::Mul(a, b) => {
                write!(f, "{}*{}", Paren { e: a, min: 2 }, Paren { e: b, min: 3 })
            }
            Expr::Div(a, b) => {
                write!(f, "{}/{}", Paren { e: a, min: 2 }, Paren { e: b, min: 3 })
            }
            Expr::Pow(e, k) => {
                if *k < 0 {
                    write!(f, "{}^-{}", Paren { e, min: 5 }, k.unsigned_abs())
                } else {
                    write!(f, "{}^{}", Paren { e, min: 5 }, k)
                }
            }
            Expr::Call(func, e) => write!(f, "{}({})", func.name(), e),
        }
    }
}
