//! Closed-form scalar expressions in named variables.
//!
//! Every metric entry, warping function and immersion component in the
//! crate is a [`ScalarExpr`]. Expressions are immutable trees shared through
//! `Arc`, so cloning is cheap and evaluation is safe from any thread.

mod diff;
mod fd;
mod parse;

pub use diff::diff;
pub use fd::{fd_diff, DEFAULT_FD_STEP, DEFAULT_FD_TOLERANCE};
pub use parse::parse;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};

/// Elementary functions accepted by the grammar.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Func {
    Exp,
    Log,
    Sin,
    Cos,
    Sinh,
    Cosh,
    Sqrt,
}

impl Func {
    pub fn from_name(name: &str) -> Option<Func> {
        Some(match name {
            "exp" => Func::Exp,
            "log" => Func::Log,
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            "sinh" => Func::Sinh,
            "cosh" => Func::Cosh,
            "sqrt" => Func::Sqrt,
            _ => return None,
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            Func::Exp => "exp",
            Func::Log => "log",
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Sinh => "sinh",
            Func::Cosh => "cosh",
            Func::Sqrt => "sqrt",
        }
    }

    fn apply(self, x: f64) -> Result<f64> {
        match self {
            Func::Exp => Ok(x.exp()),
            Func::Log if x > 0.0 => Ok(x.ln()),
            Func::Log => Err(Error::Domain(format!("log of non-positive value {x}"))),
            Func::Sin => Ok(x.sin()),
            Func::Cos => Ok(x.cos()),
            Func::Sinh => Ok(x.sinh()),
            Func::Cosh => Ok(x.cosh()),
            Func::Sqrt if x >= 0.0 => Ok(x.sqrt()),
            Func::Sqrt => Err(Error::Domain(format!("sqrt of negative value {x}"))),
        }
    }
}

/// Reduced fraction with a positive denominator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Rational {
    num: i64,
    den: i64,
}

fn gcd(a: i64, b: i64) -> i64 {
    let (mut a, mut b) = (a.abs(), b.abs());
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

impl Rational {
    pub fn new(num: i64, den: i64) -> Rational {
        assert!(den != 0, "zero denominator");
        let g = gcd(num, den).max(1);
        let s = if den < 0 { -1 } else { 1 };
        Rational { num: s * num / g, den: s * den / g }
    }

    pub fn integer(n: i64) -> Rational {
        Rational { num: n, den: 1 }
    }

    pub fn num(self) -> i64 {
        self.num
    }

    pub fn den(self) -> i64 {
        self.den
    }

    pub fn is_integer(self) -> bool {
        self.den == 1
    }

    pub fn to_f64(self) -> f64 {
        self.num as f64 / self.den as f64
    }

    pub fn minus_one(self) -> Rational {
        Rational::new(self.num - self.den, self.den)
    }
}

impl fmt::Display for Rational {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match (self.den, self.num < 0) {
            (1, false) => write!(f, "{}", self.num),
            (1, true) => write!(f, "({})", self.num),
            _ => write!(f, "({}/{})", self.num, self.den),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Node {
    Const(f64),
    Var(Arc<str>),
    Add(ScalarExpr, ScalarExpr),
    Sub(ScalarExpr, ScalarExpr),
    Mul(ScalarExpr, ScalarExpr),
    Div(ScalarExpr, ScalarExpr),
    Neg(ScalarExpr),
    Pow(ScalarExpr, Rational),
    Call(Func, ScalarExpr),
}

/// Immutable expression tree.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarExpr(Arc<Node>);

/// Values bound to variable names for one evaluation.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct VarAssignment {
    values: BTreeMap<String, f64>,
}

impl VarAssignment {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_pairs<S: AsRef<str>>(names: &[S], values: &[f64]) -> Self {
        let mut a = Self::new();
        for (n, v) in names.iter().zip(values) {
            a.set(n.as_ref(), *v);
        }
        a
    }

    pub fn set(&mut self, name: &str, value: f64) {
        self.values.insert(name.to_string(), value);
    }

    pub fn with(mut self, name: &str, value: f64) -> Self {
        self.set(name, value);
        self
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        self.values.get(name).copied()
    }
}

impl<S: Into<String>> FromIterator<(S, f64)> for VarAssignment {
    fn from_iter<I: IntoIterator<Item = (S, f64)>>(iter: I) -> Self {
        VarAssignment { values: iter.into_iter().map(|(k, v)| (k.into(), v)).collect() }
    }
}

impl ScalarExpr {
    pub fn node(&self) -> &Node {
        &self.0
    }

    fn wrap(node: Node) -> Self {
        ScalarExpr(Arc::new(node))
    }

    pub fn constant(c: f64) -> Self {
        Self::wrap(Node::Const(c))
    }

    pub fn var(name: &str) -> Self {
        Self::wrap(Node::Var(Arc::from(name)))
    }

    pub fn as_const(&self) -> Option<f64> {
        match self.node() {
            Node::Const(c) => Some(*c),
            _ => None,
        }
    }

    pub fn is_zero(&self) -> bool {
        self.as_const() == Some(0.0)
    }

    pub fn is_one(&self) -> bool {
        self.as_const() == Some(1.0)
    }

    // Smart constructors fold constants and drop 0/1 identities; nothing more.

    pub fn add(a: &ScalarExpr, b: &ScalarExpr) -> Self {
        match (a.as_const(), b.as_const()) {
            (Some(x), Some(y)) => Self::constant(x + y),
            (Some(0.0), _) => b.clone(),
            (_, Some(0.0)) => a.clone(),
            _ => Self::wrap(Node::Add(a.clone(), b.clone())),
        }
    }

    pub fn sub(a: &ScalarExpr, b: &ScalarExpr) -> Self {
        match (a.as_const(), b.as_const()) {
            (Some(x), Some(y)) => Self::constant(x - y),
            (Some(0.0), _) => Self::neg(b),
            (_, Some(0.0)) => a.clone(),
            _ => Self::wrap(Node::Sub(a.clone(), b.clone())),
        }
    }

    pub fn mul(a: &ScalarExpr, b: &ScalarExpr) -> Self {
        match (a.as_const(), b.as_const()) {
            (Some(x), Some(y)) => Self::constant(x * y),
            (Some(x), _) | (_, Some(x)) if x == 0.0 => Self::constant(0.0),
            (Some(1.0), _) => b.clone(),
            (_, Some(1.0)) => a.clone(),
            _ => Self::wrap(Node::Mul(a.clone(), b.clone())),
        }
    }

    pub fn div(a: &ScalarExpr, b: &ScalarExpr) -> Self {
        match (a.as_const(), b.as_const()) {
            (Some(x), Some(y)) if y != 0.0 => Self::constant(x / y),
            (Some(0.0), _) => Self::constant(0.0),
            (_, Some(1.0)) => a.clone(),
            _ => Self::wrap(Node::Div(a.clone(), b.clone())),
        }
    }

    pub fn neg(a: &ScalarExpr) -> Self {
        match a.node() {
            Node::Const(c) => Self::constant(-c),
            Node::Neg(inner) => inner.clone(),
            _ => Self::wrap(Node::Neg(a.clone())),
        }
    }

    pub fn pow(a: &ScalarExpr, q: Rational) -> Self {
        if q == Rational::integer(0) {
            return Self::constant(1.0);
        }
        if q == Rational::integer(1) {
            return a.clone();
        }
        match a.as_const() {
            Some(c) if q.is_integer() => Self::constant(c.powi(q.num() as i32)),
            _ => Self::wrap(Node::Pow(a.clone(), q)),
        }
    }

    pub fn call(f: Func, a: &ScalarExpr) -> Self {
        Self::wrap(Node::Call(f, a.clone()))
    }

    /// Evaluates at `a`; every free variable must be bound and the result finite.
    pub fn eval(&self, a: &VarAssignment) -> Result<f64> {
        let v = match self.node() {
            Node::Const(c) => *c,
            Node::Var(name) => a.get(name).ok_or_else(|| Error::UnboundVariable(name.to_string()))?,
            Node::Add(l, r) => l.eval(a)? + r.eval(a)?,
            Node::Sub(l, r) => l.eval(a)? - r.eval(a)?,
            Node::Mul(l, r) => l.eval(a)? * r.eval(a)?,
            Node::Div(l, r) => {
                let den = r.eval(a)?;
                if den == 0.0 {
                    return Err(Error::Domain("division by zero".into()));
                }
                l.eval(a)? / den
            }
            Node::Neg(x) => -x.eval(a)?,
            Node::Pow(base, q) => eval_pow(base.eval(a)?, *q)?,
            Node::Call(f, x) => f.apply(x.eval(a)?)?,
        };
        if v.is_finite() {
            Ok(v)
        } else {
            Err(Error::Domain(format!("non-finite value while evaluating {self}")))
        }
    }

    pub fn free_vars(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        self.collect_vars(&mut out);
        out
    }

    fn collect_vars(&self, out: &mut BTreeSet<String>) {
        match self.node() {
            Node::Const(_) => {}
            Node::Var(n) => {
                out.insert(n.to_string());
            }
            Node::Add(l, r) | Node::Sub(l, r) | Node::Mul(l, r) | Node::Div(l, r) => {
                l.collect_vars(out);
                r.collect_vars(out);
            }
            Node::Neg(x) | Node::Pow(x, _) | Node::Call(_, x) => x.collect_vars(out),
        }
    }

    /// Replaces variables by expressions (used to compose warping functions with immersions).
    pub fn substitute(&self, map: &BTreeMap<String, ScalarExpr>) -> ScalarExpr {
        match self.node() {
            Node::Const(_) => self.clone(),
            Node::Var(n) => map.get(&**n).cloned().unwrap_or_else(|| self.clone()),
            Node::Add(l, r) => Self::add(&l.substitute(map), &r.substitute(map)),
            Node::Sub(l, r) => Self::sub(&l.substitute(map), &r.substitute(map)),
            Node::Mul(l, r) => Self::mul(&l.substitute(map), &r.substitute(map)),
            Node::Div(l, r) => Self::div(&l.substitute(map), &r.substitute(map)),
            Node::Neg(x) => Self::neg(&x.substitute(map)),
            Node::Pow(x, q) => Self::pow(&x.substitute(map), *q),
            Node::Call(f, x) => Self::call(*f, &x.substitute(map)),
        }
    }

    fn precedence(&self) -> u8 {
        match self.node() {
            Node::Add(..) | Node::Sub(..) => 1,
            Node::Mul(..) | Node::Div(..) => 2,
            Node::Neg(..) => 3,
            Node::Pow(..) => 4,
            Node::Const(c) if *c < 0.0 || c.is_sign_negative() => 3,
            _ => 5,
        }
    }
}

fn eval_pow(base: f64, q: Rational) -> Result<f64> {
    if q.is_integer() {
        if base == 0.0 && q.num() < 0 {
            return Err(Error::Domain("zero raised to a negative power".into()));
        }
        return Ok(base.powi(q.num() as i32));
    }
    if base < 0.0 {
        if q.den() % 2 == 0 {
            return Err(Error::Domain(format!("even root of negative value {base}")));
        }
        let magnitude = (-base).powf(q.to_f64());
        return Ok(if q.num() % 2 == 0 { magnitude } else { -magnitude });
    }
    if base == 0.0 && q.num() < 0 {
        return Err(Error::Domain("zero raised to a negative power".into()));
    }
    Ok(base.powf(q.to_f64()))
}

impl From<f64> for ScalarExpr {
    fn from(c: f64) -> Self {
        ScalarExpr::constant(c)
    }
}

fn write_child(f: &mut fmt::Formatter<'_>, e: &ScalarExpr, min_prec: u8) -> fmt::Result {
    if e.precedence() < min_prec {
        write!(f, "({e})")
    } else {
        write!(f, "{e}")
    }
}

impl fmt::Display for ScalarExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.node() {
            Node::Const(c) => {
                if c.is_sign_negative() {
                    write!(f, "-{:?}", -c)
                } else {
                    write!(f, "{c:?}")
                }
            }
            Node::Var(n) => write!(f, "{n}"),
            Node::Add(l, r) => {
                write_child(f, l, 1)?;
                f.write_str(" + ")?;
                write_child(f, r, 2)
            }
            Node::Sub(l, r) => {
                write_child(f, l, 1)?;
                f.write_str(" - ")?;
                write_child(f, r, 2)
            }
            Node::Mul(l, r) => {
                write_child(f, l, 2)?;
                f.write_str("*")?;
                write_child(f, r, 3)
            }
            Node::Div(l, r) => {
                write_child(f, l, 2)?;
                f.write_str("/")?;
                write_child(f, r, 3)
            }
            Node::Neg(x) => {
                f.write_str("-")?;
                write_child(f, x, 3)
            }
            Node::Pow(x, q) => {
                write_child(f, x, 5)?;
                write!(f, "^{q}")
            }
            Node::Call(func, x) => write!(f, "{}({x})", func.name()),
        }
    }
}
