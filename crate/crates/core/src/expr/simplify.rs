//! Bounded rewriting: constant folding, 0/1 absorption, like-term and
//! like-base collection, and the `sin² + cos²` identity.

use std::collections::BTreeMap;

use num_bigint::BigInt;
use num_traits::{One, Signed, ToPrimitive, Zero};

use super::{Expr, Func, Node, Rational};

impl Expr {
    /// Idempotent rewrite to a smaller, value-preserving form.
    pub fn simplify(&self) -> Expr {
        match self.node() {
            Node::Const(_) | Node::Pi | Node::Time | Node::Param(_) | Node::Var(..) => self.clone(),
            Node::Neg(x) => scale(&x.simplify(), &(-Rational::one())),
            Node::Sum(xs) => collect_sum(xs.iter().map(Expr::simplify).collect()),
            Node::Product(xs) => collect_product(xs.iter().map(Expr::simplify).collect()),
            Node::Quotient(a, b) => {
                let (a, b) = (a.simplify(), b.simplify());
                if b.is_zero_literal() {
                    return Expr::from_node(Node::Quotient(a, b));
                }
                collect_product(vec![a, simplify_pow(&b, &(-Rational::one()))])
            }
            Node::Pow(b, k) => simplify_pow(&b.simplify(), k),
            Node::Apply(f, u) => simplify_apply(*f, u.simplify()),
        }
    }
}

fn int(i: i64) -> Rational {
    Rational::from_integer(BigInt::from(i))
}

/// Splits a canonical term into its rational coefficient and monomial.
fn split(e: &Expr) -> (Rational, Option<Expr>) {
    match e.node() {
        Node::Const(c) => (c.clone(), None),
        Node::Neg(x) => {
            let (c, m) = split(x);
            (-c, m)
        }
        Node::Product(fs) => match fs[0].node() {
            Node::Const(c) => {
                let rest = &fs[1..];
                let m = if rest.len() == 1 {
                    rest[0].clone()
                } else {
                    Expr::from_node(Node::Product(rest.to_vec()))
                };
                (c.clone(), Some(m))
            }
            _ => (Rational::one(), Some(e.clone())),
        },
        _ => (Rational::one(), Some(e.clone())),
    }
}

fn build_term(c: Rational, m: Option<Expr>) -> Expr {
    let Some(m) = m else { return Expr::constant(c) };
    if c.is_zero() {
        return Expr::zero();
    }
    if c.is_one() {
        return m;
    }
    if let Node::Sum(ts) = m.node() {
        return collect_sum(ts.iter().map(|t| scale(t, &c)).collect());
    }
    if c == -Rational::one() {
        return Expr::from_node(Node::Neg(m));
    }
    if c.is_negative() {
        return Expr::from_node(Node::Neg(Expr::mul_all([Expr::constant(-c), m])));
    }
    Expr::mul_all([Expr::constant(c), m])
}

fn scale(e: &Expr, c: &Rational) -> Expr {
    if let Node::Sum(ts) = e.node() {
        return collect_sum(ts.iter().map(|t| scale(t, c)).collect());
    }
    let (c0, m) = split(e);
    build_term(c0 * c, m)
}

fn factors_of(m: &Expr) -> Vec<Expr> {
    match m.node() {
        Node::Product(fs) => fs.clone(),
        _ => vec![m.clone()],
    }
}

fn collect_sum(terms: Vec<Expr>) -> Expr {
    let mut acc: BTreeMap<Expr, Rational> = BTreeMap::new();
    let mut konst = Rational::zero();
    fn push(t: &Expr, acc: &mut BTreeMap<Expr, Rational>, konst: &mut Rational) {
        if let Node::Sum(ts) = t.node() {
            for s in ts {
                push(s, acc, konst);
            }
            return;
        }
        match split(t) {
            (c, None) => *konst += c,
            (c, Some(m)) => *acc.entry(m).or_insert_with(Rational::zero) += c,
        }
    }
    for t in &terms {
        push(t, &mut acc, &mut konst);
    }
    acc.retain(|_, c| !c.is_zero());
    pythagoras(&mut acc, &mut konst);

    let mut out: Vec<Expr> = acc.into_iter().map(|(m, c)| build_term(c, Some(m))).collect();
    if !konst.is_zero() {
        out.push(Expr::constant(konst));
    }
    match out.len() {
        0 => Expr::zero(),
        1 => out.pop().unwrap(),
        _ => Expr::from_node(Node::Sum(out)),
    }
}

/// Folds `a·sin(u)²·X + a·cos(u)²·X` into `a·X`.
fn pythagoras(acc: &mut BTreeMap<Expr, Rational>, konst: &mut Rational) {
    let two = int(2);
    loop {
        let mut hit = None;
        'search: for (m, a) in acc.iter() {
            let fs = factors_of(m);
            for (i, f) in fs.iter().enumerate() {
                let Node::Pow(b, k) = f.node() else { continue };
                let Node::Apply(Func::Sin, u) = b.node() else { continue };
                if *k != two {
                    continue;
                }
                let mut partner = fs.clone();
                partner[i] = Expr::from_node(Node::Pow(u.cos(), two.clone()));
                let (pc, pm) = split(&collect_product(partner));
                let Some(pm) = pm else { continue };
                if acc.get(&pm).is_some_and(|b| *b == a * &pc) {
                    let mut rest = fs.clone();
                    rest.remove(i);
                    hit = Some((m.clone(), pm, a.clone(), collect_product(rest)));
                    break 'search;
                }
            }
        }
        let Some((m, pm, a, rest)) = hit else { return };
        acc.remove(&m);
        acc.remove(&pm);
        match split(&rest) {
            (c, None) => *konst += a * c,
            (c, Some(r)) => {
                let slot = acc.entry(r.clone()).or_insert_with(Rational::zero);
                *slot += a * c;
                if slot.is_zero() {
                    acc.remove(&r);
                }
            }
        }
    }
}

fn collect_product(factors: Vec<Expr>) -> Expr {
    let mut coef = Rational::one();
    let mut bases: BTreeMap<Expr, Rational> = BTreeMap::new();
    fn push(f: &Expr, coef: &mut Rational, bases: &mut BTreeMap<Expr, Rational>) {
        match f.node() {
            Node::Const(c) => *coef *= c,
            Node::Product(fs) => fs.iter().for_each(|g| push(g, coef, bases)),
            Node::Neg(x) => {
                *coef = -coef.clone();
                push(x, coef, bases);
            }
            Node::Pow(b, k) => *bases.entry(b.clone()).or_insert_with(Rational::zero) += k,
            _ => *bases.entry(f.clone()).or_insert_with(Rational::zero) += Rational::one(),
        }
    }
    for f in &factors {
        push(f, &mut coef, &mut bases);
    }
    if coef.is_zero() {
        return Expr::zero();
    }

    let mut out = Vec::new();
    let mut again = false;
    for (b, k) in bases {
        if k.is_zero() {
            continue;
        }
        let f = simplify_pow(&b, &k);
        match f.node() {
            Node::Const(_) | Node::Product(_) | Node::Neg(_) => again = true,
            Node::Pow(fb, _) if *fb != b => again = true,
            Node::Pow(..) => {}
            _ if k.is_one() && f == b => {}
            _ => again = true,
        }
        out.push(f);
    }
    if again {
        out.insert(0, Expr::constant(coef));
        return collect_product(out);
    }
    let m = match out.len() {
        0 => None,
        1 => out.pop(),
        _ => Some(Expr::from_node(Node::Product(out))),
    };
    build_term(coef, m)
}

fn simplify_pow(b: &Expr, k: &Rational) -> Expr {
    if k.is_zero() {
        return Expr::one();
    }
    if k.is_one() {
        return b.clone();
    }
    let raw = || Expr::from_node(Node::Pow(b.clone(), k.clone()));
    match b.node() {
        Node::Const(c) => {
            if c.is_one() {
                Expr::one()
            } else if c.is_zero() {
                if k.is_positive() {
                    Expr::zero()
                } else {
                    raw()
                }
            } else if k.is_integer() {
                match k.to_integer().to_i32() {
                    Some(e) => Expr::constant(num_traits::pow::Pow::pow(c, e)),
                    None => raw(),
                }
            } else {
                raw()
            }
        }
        Node::Pow(b2, k2) if k.is_integer() => simplify_pow(b2, &(k2 * k)),
        Node::Product(fs) if k.is_integer() => {
            collect_product(fs.iter().map(|f| simplify_pow(f, k)).collect())
        }
        Node::Neg(x) if k.is_integer() => {
            let sign = if k.to_integer() % BigInt::from(2) == BigInt::zero() { 1 } else { -1 };
            collect_product(vec![Expr::int(sign), simplify_pow(x, k)])
        }
        Node::Apply(Func::Sqrt, u) if k.is_integer() && (k.to_integer() % BigInt::from(2)).is_zero() => {
            simplify_pow(u, &(k / int(2)))
        }
        _ => raw(),
    }
}

fn simplify_apply(f: Func, u: Expr) -> Expr {
    match (f, u.node()) {
        (Func::Log, Node::Apply(Func::Exp, v)) => v.clone(),
        (Func::Exp, Node::Apply(Func::Log, v)) => v.clone(),
        _ => Expr::apply(f, u),
    }
}
