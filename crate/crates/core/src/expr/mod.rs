//! Immutable symbolic expressions over `t`, variable derivatives, parameters
//! and elementary functions.

mod calculus;
mod eval;
mod print;
mod simplify;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::ops;
use std::sync::Arc;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};

pub use eval::{Bindings, PointBindings, Tracked};
pub use print::{format_rational, Style};

/// Exact rational constant.
pub type Rational = BigRational;

/// Interned-by-`Arc` identifier.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Symbol(Arc<str>);

impl Symbol {
    pub fn new(s: &str) -> Self {
        Symbol(Arc::from(s))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl From<&str> for Symbol {
    fn from(s: &str) -> Self {
        Symbol::new(s)
    }
}

impl From<String> for Symbol {
    fn from(s: String) -> Self {
        Symbol(Arc::from(s))
    }
}

impl fmt::Display for Symbol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl fmt::Debug for Symbol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}", &*self.0)
    }
}

/// A variable coordinate `name^(order)`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct VarKey {
    pub name: Symbol,
    pub order: u32,
}

impl VarKey {
    pub fn new(name: impl Into<Symbol>, order: u32) -> Self {
        VarKey { name: name.into(), order }
    }
}

impl fmt::Display for VarKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.name)?;
        for _ in 0..self.order {
            f.write_str("'")?;
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Func {
    Sin,
    Cos,
    Tan,
    Exp,
    Log,
    Tanh,
    Sqrt,
}

impl Func {
    pub const ALL: [Func; 7] = [
        Func::Sin,
        Func::Cos,
        Func::Tan,
        Func::Exp,
        Func::Log,
        Func::Tanh,
        Func::Sqrt,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Tan => "tan",
            Func::Exp => "exp",
            Func::Log => "log",
            Func::Tanh => "tanh",
            Func::Sqrt => "sqrt",
        }
    }

    pub fn from_name(s: &str) -> Option<Func> {
        Func::ALL.into_iter().find(|f| f.name() == s)
    }
}

/// Tree node. Auxiliary variables introduced by augmentation are ordinary
/// `Var` nodes; the owning system records which names are auxiliary.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Node {
    Const(Rational),
    Pi,
    Time,
    Param(Symbol),
    Var(Symbol, u32),
    Neg(Expr),
    Sum(Vec<Expr>),
    Product(Vec<Expr>),
    Quotient(Expr, Expr),
    Pow(Expr, Rational),
    Apply(Func, Expr),
}

#[derive(Clone)]
pub struct Expr(Arc<Node>);

impl std::hash::Hash for Expr {
    fn hash<H: std::hash::Hasher>(&self, state: &mut H) {
        self.0.hash(state);
    }
}

impl PartialEq for Expr {
    fn eq(&self, other: &Self) -> bool {
        Arc::ptr_eq(&self.0, &other.0) || *self.0 == *other.0
    }
}

impl Eq for Expr {}

impl PartialOrd for Expr {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Expr {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        if Arc::ptr_eq(&self.0, &other.0) {
            std::cmp::Ordering::Equal
        } else {
            self.0.cmp(&other.0)
        }
    }
}

impl fmt::Debug for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self)
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_text(Style::Primes))
    }
}

/// Simultaneous replacement map keyed by variable coordinate.
pub type Substitution = BTreeMap<VarKey, Expr>;

impl Expr {
    fn from_node(n: Node) -> Self {
        Expr(Arc::new(n))
    }

    pub fn node(&self) -> &Node {
        &self.0
    }

    pub fn constant(c: Rational) -> Self {
        Expr::from_node(Node::Const(c))
    }

    pub fn int(i: i64) -> Self {
        Expr::constant(Rational::from_integer(BigInt::from(i)))
    }

    pub fn ratio(n: i64, d: i64) -> Self {
        Expr::constant(Rational::new(BigInt::from(n), BigInt::from(d)))
    }

    /// Exact value of the shortest decimal representation of `v`.
    pub fn float(v: f64) -> Self {
        Expr::constant(rational_from_f64(v))
    }

    pub fn zero() -> Self {
        Expr::int(0)
    }

    pub fn one() -> Self {
        Expr::int(1)
    }

    pub fn pi() -> Self {
        Expr::from_node(Node::Pi)
    }

    pub fn time() -> Self {
        Expr::from_node(Node::Time)
    }

    pub fn param(name: impl Into<Symbol>) -> Self {
        Expr::from_node(Node::Param(name.into()))
    }

    pub fn var(name: impl Into<Symbol>, order: u32) -> Self {
        Expr::from_node(Node::Var(name.into(), order))
    }

    pub fn key(k: &VarKey) -> Self {
        Expr::var(k.name.clone(), k.order)
    }

    pub fn as_const(&self) -> Option<&Rational> {
        match self.node() {
            Node::Const(c) => Some(c),
            _ => None,
        }
    }

    pub fn is_zero_literal(&self) -> bool {
        self.as_const().is_some_and(|c| c.is_zero())
    }

    pub fn is_one_literal(&self) -> bool {
        self.as_const().is_some_and(|c| c.is_one())
    }

    /// Flattening sum with constant folding.
    pub fn add_all(terms: impl IntoIterator<Item = Expr>) -> Expr {
        let mut out = Vec::new();
        let mut c = Rational::zero();
        for t in terms {
            match t.node() {
                Node::Const(v) => c += v,
                Node::Sum(ts) => {
                    for s in ts {
                        match s.node() {
                            Node::Const(v) => c += v,
                            _ => out.push(s.clone()),
                        }
                    }
                }
                _ => out.push(t),
            }
        }
        if !c.is_zero() {
            out.push(Expr::constant(c));
        }
        match out.len() {
            0 => Expr::zero(),
            1 => out.pop().unwrap(),
            _ => Expr::from_node(Node::Sum(out)),
        }
    }

    /// Flattening product with constant folding and zero absorption.
    pub fn mul_all(factors: impl IntoIterator<Item = Expr>) -> Expr {
        let mut out = Vec::new();
        let mut c = Rational::one();
        for f in factors {
            match f.node() {
                Node::Const(v) => c *= v,
                Node::Product(fs) => {
                    for s in fs {
                        match s.node() {
                            Node::Const(v) => c *= v,
                            _ => out.push(s.clone()),
                        }
                    }
                }
                _ => out.push(f),
            }
        }
        if c.is_zero() {
            return Expr::zero();
        }
        if !c.is_one() {
            out.insert(0, Expr::constant(c));
        }
        match out.len() {
            0 => Expr::one(),
            1 => out.pop().unwrap(),
            _ => Expr::from_node(Node::Product(out)),
        }
    }

    pub fn neg(&self) -> Expr {
        match self.node() {
            Node::Const(c) => Expr::constant(-c),
            Node::Neg(x) => x.clone(),
            _ => Expr::from_node(Node::Neg(self.clone())),
        }
    }

    /// Quotient; folds constant operands.
    ///
    /// # Panics
    /// When the denominator is the literal zero.
    pub fn div(&self, den: &Expr) -> Expr {
        if den.is_zero_literal() {
            panic!("division by the literal zero");
        }
        if self.is_zero_literal() {
            return Expr::zero();
        }
        if den.is_one_literal() {
            return self.clone();
        }
        if let (Some(a), Some(b)) = (self.as_const(), den.as_const()) {
            return Expr::constant(a / b);
        }
        Expr::from_node(Node::Quotient(self.clone(), den.clone()))
    }

    /// Power with a constant exponent.
    ///
    /// # Panics
    /// When a literal zero is raised to a negative power.
    pub fn pow(&self, k: Rational) -> Expr {
        if k.is_zero() {
            return Expr::one();
        }
        if k.is_one() {
            return self.clone();
        }
        if let (Some(b), true) = (self.as_const(), k.is_integer()) {
            if b.is_zero() && k.is_negative() {
                panic!("zero raised to a negative power");
            }
            if let Some(e) = k.to_integer().to_i32() {
                return Expr::constant(num_traits::pow::Pow::pow(b, e));
            }
        }
        Expr::from_node(Node::Pow(self.clone(), k))
    }

    pub fn powi(&self, k: i64) -> Expr {
        self.pow(Rational::from_integer(BigInt::from(k)))
    }

    pub fn apply(f: Func, arg: Expr) -> Expr {
        if let Some(c) = arg.as_const() {
            if c.is_zero() {
                match f {
                    Func::Sin | Func::Tan | Func::Tanh | Func::Sqrt => return Expr::zero(),
                    Func::Cos | Func::Exp => return Expr::one(),
                    Func::Log => {}
                }
            } else if c.is_one() {
                match f {
                    Func::Log => return Expr::zero(),
                    Func::Sqrt => return Expr::one(),
                    _ => {}
                }
            }
        }
        Expr::from_node(Node::Apply(f, arg))
    }

    pub fn sin(&self) -> Expr {
        Expr::apply(Func::Sin, self.clone())
    }
    pub fn cos(&self) -> Expr {
        Expr::apply(Func::Cos, self.clone())
    }
    pub fn tan(&self) -> Expr {
        Expr::apply(Func::Tan, self.clone())
    }
    pub fn exp(&self) -> Expr {
        Expr::apply(Func::Exp, self.clone())
    }
    pub fn log(&self) -> Expr {
        Expr::apply(Func::Log, self.clone())
    }
    pub fn tanh(&self) -> Expr {
        Expr::apply(Func::Tanh, self.clone())
    }
    pub fn sqrt(&self) -> Expr {
        Expr::apply(Func::Sqrt, self.clone())
    }

    pub fn children(&self) -> Vec<&Expr> {
        match self.node() {
            Node::Const(_) | Node::Pi | Node::Time | Node::Param(_) | Node::Var(..) => vec![],
            Node::Neg(x) | Node::Pow(x, _) | Node::Apply(_, x) => vec![x],
            Node::Sum(xs) | Node::Product(xs) => xs.iter().collect(),
            Node::Quotient(a, b) => vec![a, b],
        }
    }

    pub fn node_count(&self) -> usize {
        1 + self.children().into_iter().map(Expr::node_count).sum::<usize>()
    }

    fn visit(&self, f: &mut impl FnMut(&Expr)) {
        f(self);
        for c in self.children() {
            c.visit(f);
        }
    }

    /// Every variable coordinate occurring syntactically.
    pub fn var_keys(&self) -> BTreeSet<VarKey> {
        let mut out = BTreeSet::new();
        self.visit(&mut |e| {
            if let Node::Var(n, k) = e.node() {
                out.insert(VarKey::new(n.clone(), *k));
            }
        });
        out
    }

    pub fn params(&self) -> BTreeSet<Symbol> {
        let mut out = BTreeSet::new();
        self.visit(&mut |e| {
            if let Node::Param(n) = e.node() {
                out.insert(n.clone());
            }
        });
        out
    }

    pub fn mentions_time(&self) -> bool {
        let mut hit = false;
        self.visit(&mut |e| hit |= matches!(e.node(), Node::Time));
        hit
    }

    /// Largest order of `name` occurring syntactically.
    pub fn max_order_of(&self, name: &Symbol) -> Option<u32> {
        let mut best = None;
        self.visit(&mut |e| {
            if let Node::Var(n, k) = e.node() {
                if n == name {
                    best = best.max(Some(*k));
                }
            }
        });
        best
    }

    pub fn max_order(&self) -> Option<u32> {
        let mut best = None;
        self.visit(&mut |e| {
            if let Node::Var(_, k) = e.node() {
                best = best.max(Some(*k));
            }
        });
        best
    }

    /// Simultaneous replacement of variable coordinates.
    pub fn substitute(&self, map: &Substitution) -> Expr {
        if map.is_empty() {
            return self.clone();
        }
        self.rebuild(&mut |e| match e.node() {
            Node::Var(n, k) => map.get(&VarKey::new(n.clone(), *k)).cloned(),
            _ => None,
        })
    }

    /// Replaces parameters by their values.
    pub fn bind_params(&self, values: &BTreeMap<Symbol, Rational>) -> Expr {
        self.rebuild(&mut |e| match e.node() {
            Node::Param(n) => values.get(n).map(|v| Expr::constant(v.clone())),
            _ => None,
        })
    }

    /// Bottom-up rebuild where `leaf` may replace any node before recursion.
    fn rebuild(&self, leaf: &mut impl FnMut(&Expr) -> Option<Expr>) -> Expr {
        if let Some(r) = leaf(self) {
            return r;
        }
        match self.node() {
            Node::Const(_) | Node::Pi | Node::Time | Node::Param(_) | Node::Var(..) => self.clone(),
            Node::Neg(x) => x.rebuild(leaf).neg(),
            Node::Sum(xs) => Expr::add_all(xs.iter().map(|x| x.rebuild(leaf)).collect::<Vec<_>>()),
            Node::Product(xs) => {
                Expr::mul_all(xs.iter().map(|x| x.rebuild(leaf)).collect::<Vec<_>>())
            }
            Node::Quotient(a, b) => {
                let (a, b) = (a.rebuild(leaf), b.rebuild(leaf));
                if b.is_zero_literal() {
                    Expr::from_node(Node::Quotient(a, b))
                } else {
                    a.div(&b)
                }
            }
            Node::Pow(b, k) => {
                let b = b.rebuild(leaf);
                if b.is_zero_literal() && k.is_negative() {
                    Expr::from_node(Node::Pow(b, k.clone()))
                } else {
                    b.pow(k.clone())
                }
            }
            Node::Apply(f, x) => Expr::apply(*f, x.rebuild(leaf)),
        }
    }
}

/// Exact rational equal to the shortest round-trip decimal form of `v`.
pub fn rational_from_f64(v: f64) -> Rational {
    assert!(v.is_finite(), "non-finite constant");
    let s = format!("{:e}", v);
    parse_decimal(&s).expect("formatted float parses")
}

/// Parses `[-]digits[.digits][e[+-]digits]` exactly.
pub fn parse_decimal(s: &str) -> Option<Rational> {
    let (neg, body) = match s.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, s.strip_prefix('+').unwrap_or(s)),
    };
    let (mant, exp) = match body.find(['e', 'E']) {
        Some(i) => (&body[..i], body[i + 1..].parse::<i64>().ok()?),
        None => (body, 0),
    };
    let (int_part, frac_part) = match mant.find('.') {
        Some(i) => (&mant[..i], &mant[i + 1..]),
        None => (mant, ""),
    };
    if int_part.is_empty() && frac_part.is_empty() {
        return None;
    }
    if !int_part.chars().chain(frac_part.chars()).all(|c| c.is_ascii_digit()) {
        return None;
    }
    let digits = format!("{}{}", int_part, frac_part);
    let n: BigInt = if digits.is_empty() { BigInt::zero() } else { digits.parse().ok()? };
    let scale = exp - frac_part.len() as i64;
    let ten = BigInt::from(10);
    let mut r = if scale >= 0 {
        Rational::from_integer(n * num_traits::pow(ten, scale as usize))
    } else {
        Rational::new(n, num_traits::pow(ten, (-scale) as usize))
    };
    if neg {
        r = -r;
    }
    Some(r)
}

macro_rules! binop {
    ($tr:ident, $m:ident, $body:expr) => {
        impl ops::$tr<Expr> for Expr {
            type Output = Expr;
            fn $m(self, rhs: Expr) -> Expr {
                let f: fn(&Expr, &Expr) -> Expr = $body;
                f(&self, &rhs)
            }
        }
        impl ops::$tr<&Expr> for &Expr {
            type Output = Expr;
            fn $m(self, rhs: &Expr) -> Expr {
                let f: fn(&Expr, &Expr) -> Expr = $body;
                f(self, rhs)
            }
        }
        impl ops::$tr<&Expr> for Expr {
            type Output = Expr;
            fn $m(self, rhs: &Expr) -> Expr {
                let f: fn(&Expr, &Expr) -> Expr = $body;
                f(&self, rhs)
            }
        }
        impl ops::$tr<Expr> for &Expr {
            type Output = Expr;
            fn $m(self, rhs: Expr) -> Expr {
                let f: fn(&Expr, &Expr) -> Expr = $body;
                f(self, &rhs)
            }
        }
    };
}

binop!(Add, add, |a, b| Expr::add_all([a.clone(), b.clone()]));
binop!(Sub, sub, |a, b| Expr::add_all([a.clone(), b.neg()]));
binop!(Mul, mul, |a, b| Expr::mul_all([a.clone(), b.clone()]));
binop!(Div, div, |a, b| Expr::div(a, b));

impl ops::Neg for Expr {
    type Output = Expr;
    fn neg(self) -> Expr {
        Expr::neg(&self)
    }
}

impl ops::Neg for &Expr {
    type Output = Expr;
    fn neg(self) -> Expr {
        Expr::neg(self)
    }
}

impl Zero for Expr {
    fn zero() -> Self {
        Expr::zero()
    }
    fn is_zero(&self) -> bool {
        self.is_zero_literal()
    }
}

impl One for Expr {
    fn one() -> Self {
        Expr::one()
    }
}

impl From<i64> for Expr {
    fn from(i: i64) -> Self {
        Expr::int(i)
    }
}
