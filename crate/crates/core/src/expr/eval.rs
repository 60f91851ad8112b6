use std::collections::BTreeMap;
use std::ops;

use num_traits::{Float, FloatConst, FromPrimitive, One, Signed, ToPrimitive, Zero};

use super::{Expr, Func, Node, Rational, Symbol};
use crate::error::{Error, Result};
use crate::point::Point;

/// Source of coordinate values during evaluation.
pub trait Bindings<T> {
    fn time(&self) -> Option<T>;
    fn var(&self, name: &Symbol, order: u32) -> Option<T>;
    fn param(&self, name: &Symbol) -> Option<T>;
}

/// Bindings backed by a [`Point`] and a parameter table.
pub struct PointBindings<'a, T = f64> {
    pub point: &'a Point<T>,
    pub params: &'a BTreeMap<Symbol, f64>,
}

impl<'a, T> PointBindings<'a, T> {
    pub fn new(point: &'a Point<T>, params: &'a BTreeMap<Symbol, f64>) -> Self {
        PointBindings { point, params }
    }
}

impl<T: Float + FromPrimitive> Bindings<T> for PointBindings<'_, T> {
    fn time(&self) -> Option<T> {
        Some(self.point.t)
    }
    fn var(&self, name: &Symbol, order: u32) -> Option<T> {
        self.point.get_parts(name, order)
    }
    fn param(&self, name: &Symbol) -> Option<T> {
        self.params.get(name).and_then(|v| T::from_f64(*v))
    }
}

/// Scalar types expressions can be evaluated in.
pub trait EvalScalar: Clone {
    fn lit(v: f64) -> Self;
    fn value(&self) -> f64;
    fn plus(&self, o: &Self) -> Self;
    fn times(&self, o: &Self) -> Self;
    fn negate(&self) -> Self;
    fn over(&self, o: &Self) -> Option<Self>;
    fn power(&self, k: &Rational) -> Option<Self>;
    fn func(&self, f: Func) -> Option<Self>;
}

impl<T: Float + FloatConst + FromPrimitive> EvalScalar for T {
    fn lit(v: f64) -> Self {
        T::from_f64(v).unwrap_or_else(T::nan)
    }
    fn value(&self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
    fn plus(&self, o: &Self) -> Self {
        *self + *o
    }
    fn times(&self, o: &Self) -> Self {
        *self * *o
    }
    fn negate(&self) -> Self {
        -*self
    }
    fn over(&self, o: &Self) -> Option<Self> {
        if o.is_zero() {
            None
        } else {
            finite(*self / *o)
        }
    }
    fn power(&self, k: &Rational) -> Option<Self> {
        if k.is_integer() {
            let e = k.to_integer().to_i32()?;
            if e < 0 && self.is_zero() {
                return None;
            }
            finite(self.powi(e))
        } else {
            if *self < T::zero() || (self.is_zero() && k.is_negative()) {
                return None;
            }
            finite(self.powf(T::from_f64(k.to_f64()?)?))
        }
    }
    fn func(&self, f: Func) -> Option<Self> {
        let x = *self;
        let y = match f {
            Func::Sin => x.sin(),
            Func::Cos => x.cos(),
            Func::Tan => x.tan(),
            Func::Exp => x.exp(),
            Func::Log if x > T::zero() => x.ln(),
            Func::Tanh => x.tanh(),
            Func::Sqrt if x >= T::zero() => x.sqrt(),
            _ => return None,
        };
        finite(y)
    }
}

fn finite<T: Float>(v: T) -> Option<T> {
    v.is_finite().then_some(v)
}

/// A floating value paired with a magnitude bound on the rounding error
/// accumulated while computing it, in units of machine epsilon.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Tracked {
    pub value: f64,
    pub scale: f64,
}

impl Tracked {
    pub fn exact(v: f64) -> Self {
        Tracked { value: v, scale: v.abs() }
    }

    /// True when the value cannot be told apart from zero at relative tolerance `tol`.
    pub fn negligible(&self, tol: f64) -> bool {
        self.value.abs() <= tol * self.scale
    }

    /// How clearly the value differs from zero, in `[0, 1]`.
    pub fn certainty(&self) -> f64 {
        if self.scale == 0.0 {
            0.0
        } else {
            (self.value.abs() / self.scale).min(1.0)
        }
    }

    fn checked(self) -> Option<Self> {
        (self.value.is_finite() && self.scale.is_finite()).then_some(self)
    }
}

impl EvalScalar for Tracked {
    fn lit(v: f64) -> Self {
        Tracked::exact(v)
    }
    fn value(&self) -> f64 {
        self.value
    }
    fn plus(&self, o: &Self) -> Self {
        *self + *o
    }
    fn times(&self, o: &Self) -> Self {
        *self * *o
    }
    fn negate(&self) -> Self {
        -*self
    }
    fn over(&self, o: &Self) -> Option<Self> {
        if o.value == 0.0 {
            return None;
        }
        (*self / *o).checked()
    }
    fn power(&self, k: &Rational) -> Option<Self> {
        let v = self.value.power(k)?;
        let kf = k.to_f64()?;
        let scale = if k.is_integer() && kf > 0.0 {
            self.scale.powi(kf as i32)
        } else {
            v.abs() * (1.0 + kf.abs() * self.scale / self.value.abs())
        };
        Tracked { value: v, scale }.checked()
    }
    fn func(&self, f: Func) -> Option<Self> {
        let x = self.value;
        let v = x.func(f)?;
        let slope = match f {
            Func::Sin => x.cos().abs(),
            Func::Cos => x.sin().abs(),
            Func::Tan => 1.0 + v * v,
            Func::Exp => v,
            Func::Log => 1.0 / x.abs(),
            Func::Tanh => 1.0 - v * v,
            Func::Sqrt => {
                if v == 0.0 {
                    return Tracked { value: 0.0, scale: self.scale.sqrt() }.checked();
                }
                0.5 / v
            }
        };
        Tracked { value: v, scale: v.abs() + slope * self.scale }.checked()
    }
}

impl ops::Add for Tracked {
    type Output = Tracked;
    fn add(self, o: Tracked) -> Tracked {
        Tracked { value: self.value + o.value, scale: self.scale + o.scale }
    }
}

impl ops::Sub for Tracked {
    type Output = Tracked;
    fn sub(self, o: Tracked) -> Tracked {
        Tracked { value: self.value - o.value, scale: self.scale + o.scale }
    }
}

impl ops::Mul for Tracked {
    type Output = Tracked;
    fn mul(self, o: Tracked) -> Tracked {
        Tracked { value: self.value * o.value, scale: self.scale * o.scale }
    }
}

impl ops::Div for Tracked {
    type Output = Tracked;
    fn div(self, o: Tracked) -> Tracked {
        let d = o.value.abs();
        Tracked {
            value: self.value / o.value,
            scale: self.scale / d + self.value.abs() * o.scale / (d * d),
        }
    }
}

impl ops::Neg for Tracked {
    type Output = Tracked;
    fn neg(self) -> Tracked {
        Tracked { value: -self.value, scale: self.scale }
    }
}

impl Zero for Tracked {
    fn zero() -> Self {
        Tracked { value: 0.0, scale: 0.0 }
    }
    fn is_zero(&self) -> bool {
        self.value == 0.0
    }
}

impl One for Tracked {
    fn one() -> Self {
        Tracked::exact(1.0)
    }
}

/// Lifts plain `f64` bindings into [`Tracked`] leaves.
pub struct Lift<'a, B: ?Sized>(pub &'a B);

impl<B: Bindings<f64> + ?Sized> Bindings<Tracked> for Lift<'_, B> {
    fn time(&self) -> Option<Tracked> {
        self.0.time().map(Tracked::exact)
    }
    fn var(&self, name: &Symbol, order: u32) -> Option<Tracked> {
        self.0.var(name, order).map(Tracked::exact)
    }
    fn param(&self, name: &Symbol) -> Option<Tracked> {
        self.0.param(name).map(Tracked::exact)
    }
}

impl Expr {
    /// Evaluates in any [`EvalScalar`]; undefined operations are errors.
    pub fn eval<T: EvalScalar>(&self, b: &(impl Bindings<T> + ?Sized)) -> Result<T> {
        eval_node(self, b)
    }

    /// Evaluates with a rounding-error magnitude attached.
    pub fn eval_tracked(&self, b: &(impl Bindings<f64> + ?Sized)) -> Result<Tracked> {
        eval_node(self, &Lift(b))
    }
}

fn eval_node<T: EvalScalar>(e: &Expr, b: &(impl Bindings<T> + ?Sized)) -> Result<T> {
    let undefined = || Error::Undefined(e.to_string());
    Ok(match e.node() {
        Node::Const(c) => T::lit(c.to_f64().ok_or_else(undefined)?),
        Node::Pi => T::lit(std::f64::consts::PI),
        Node::Time => b.time().ok_or_else(|| Error::Unbound("t".into()))?,
        Node::Param(n) => b.param(n).ok_or_else(|| Error::Unbound(n.to_string()))?,
        Node::Var(n, k) => b
            .var(n, *k)
            .ok_or_else(|| Error::Unbound(super::VarKey::new(n.clone(), *k).to_string()))?,
        Node::Neg(x) => eval_node(x, b)?.negate(),
        Node::Sum(xs) => {
            let mut acc = eval_node(&xs[0], b)?;
            for x in &xs[1..] {
                acc = acc.plus(&eval_node(x, b)?);
            }
            acc
        }
        Node::Product(xs) => {
            let mut acc = eval_node(&xs[0], b)?;
            for x in &xs[1..] {
                acc = acc.times(&eval_node(x, b)?);
            }
            acc
        }
        Node::Quotient(n, d) => eval_node(n, b)?.over(&eval_node(d, b)?).ok_or_else(undefined)?,
        Node::Pow(x, k) => eval_node(x, b)?.power(k).ok_or_else(undefined)?,
        Node::Apply(f, x) => eval_node(x, b)?.func(*f).ok_or_else(undefined)?,
    })
}
