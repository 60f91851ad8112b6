use num_traits::One;

use super::{Expr, Func, Node, Rational, Symbol};

impl Expr {
    /// `times`-fold total derivative with respect to `t`.
    pub fn total_derivative(&self, times: u32) -> Expr {
        let mut e = self.clone();
        for _ in 0..times {
            e = e.derive(&|n| match n {
                Leaf::Time => Expr::one(),
                Leaf::Var(name, k) => Expr::var(name.clone(), k + 1),
            });
        }
        e
    }

    /// Partial derivative treating each `name^(order)` as an independent coordinate.
    pub fn partial(&self, name: &Symbol, order: u32) -> Expr {
        if self.max_order_of(name).is_none_or(|m| m < order) {
            return Expr::zero();
        }
        self.derive(&|n| match n {
            Leaf::Var(v, k) if v == name && k == order => Expr::one(),
            _ => Expr::zero(),
        })
    }

    /// Partial derivative with respect to the explicit time argument.
    pub fn partial_time(&self) -> Expr {
        self.derive(&|n| match n {
            Leaf::Time => Expr::one(),
            Leaf::Var(..) => Expr::zero(),
        })
    }

    fn derive(&self, leaf: &dyn Fn(Leaf<'_>) -> Expr) -> Expr {
        match self.node() {
            Node::Const(_) | Node::Pi | Node::Param(_) => Expr::zero(),
            Node::Time => leaf(Leaf::Time),
            Node::Var(n, k) => leaf(Leaf::Var(n, *k)),
            Node::Neg(x) => x.derive(leaf).neg(),
            Node::Sum(xs) => Expr::add_all(xs.iter().map(|x| x.derive(leaf)).collect::<Vec<_>>()),
            Node::Product(xs) => {
                let mut terms = Vec::new();
                for (i, x) in xs.iter().enumerate() {
                    let dx = x.derive(leaf);
                    if dx.is_zero_literal() {
                        continue;
                    }
                    let mut fs: Vec<Expr> = xs
                        .iter()
                        .enumerate()
                        .filter(|(j, _)| *j != i)
                        .map(|(_, y)| y.clone())
                        .collect();
                    fs.push(dx);
                    terms.push(Expr::mul_all(fs));
                }
                Expr::add_all(terms)
            }
            Node::Quotient(a, b) => {
                let da = a.derive(leaf);
                let db = b.derive(leaf);
                let first = if da.is_zero_literal() { Expr::zero() } else { da.div(b) };
                let second = if db.is_zero_literal() {
                    Expr::zero()
                } else {
                    Expr::mul_all([a.clone(), db]).div(&b.powi(2))
                };
                &first - &second
            }
            Node::Pow(b, k) => {
                let db = b.derive(leaf);
                if db.is_zero_literal() {
                    return Expr::zero();
                }
                let km1 = k - Rational::one();
                Expr::mul_all([Expr::constant(k.clone()), b.pow(km1), db])
            }
            Node::Apply(f, u) => {
                let du = u.derive(leaf);
                if du.is_zero_literal() {
                    return Expr::zero();
                }
                Expr::mul_all([func_derivative(*f, u), du])
            }
        }
    }
}

enum Leaf<'a> {
    Time,
    Var(&'a Symbol, u32),
}

/// `f'(u)` for an elementary function.
fn func_derivative(f: Func, u: &Expr) -> Expr {
    match f {
        Func::Sin => u.cos(),
        Func::Cos => u.sin().neg(),
        Func::Tan => Expr::one() + u.tan().powi(2),
        Func::Exp => u.exp(),
        Func::Log => u.powi(-1),
        Func::Tanh => Expr::one() - u.tanh().powi(2),
        Func::Sqrt => Expr::mul_all([Expr::ratio(1, 2), u.sqrt().powi(-1)]),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::PointBindings;
    use crate::point::Point;
    use std::collections::BTreeMap;

    fn x(n: &str, k: u32) -> Expr {
        Expr::var(n, k)
    }

    fn eval_at(e: &Expr, p: &Point) -> f64 {
        let params = BTreeMap::new();
        e.eval::<f64>(&PointBindings::new(p, &params)).unwrap()
    }

    #[test]
    fn constant_derivative_vanishes() {
        assert_eq!(Expr::int(7).total_derivative(1), Expr::zero());
        assert_eq!(Expr::param("c").total_derivative(3), Expr::zero());
    }

    #[test]
    fn chain_rule_on_sum() {
        let e = x("x2", 0) + x("x3", 1);
        assert_eq!(e.total_derivative(1), x("x2", 1) + x("x3", 2));
    }

    #[test]
    fn partial_of_product() {
        let e = x("x1", 1) * x("x2", 1);
        assert_eq!(e.partial(&"x1".into(), 1).simplify(), x("x2", 1));
        assert_eq!(e.partial(&"x1".into(), 0), Expr::zero());
    }

    #[test]
    fn partial_of_tanh_matches_formula() {
        let arg = x("x1", 1) - x("x4", 0);
        let e = Expr::int(2) * x("x1", 0) * x("x2", 1) + arg.tanh();
        let d = e.partial(&"x1".into(), 1).simplify();
        let expect = (Expr::one() - arg.tanh().powi(2)).simplify();
        let mut p = Point::new(0.3);
        p.set(key("x1", 1), 0.7);
        p.set(key("x4", 0), -0.2);
        p.set(key("x1", 0), 1.1);
        p.set(key("x2", 1), 0.4);
        assert!((eval_at(&d, &p) - eval_at(&expect, &p)).abs() < 1e-14);
    }

    fn key(n: &str, k: u32) -> crate::expr::VarKey {
        crate::expr::VarKey::new(n, k)
    }

    #[test]
    fn total_derivative_of_lc_equation() {
        // d/dt (x1' x2' - 2 cos(t)^2) = x1'' x2' + x1' x2'' + 4 cos t sin t
        let e = x("x1", 1) * x("x2", 1) - Expr::int(2) * Expr::time().cos().powi(2);
        let d = e.total_derivative(1);
        let expect = x("x1", 2) * x("x2", 1)
            + x("x1", 1) * x("x2", 2)
            + Expr::int(4) * Expr::time().cos() * Expr::time().sin();
        let mut p = Point::new(0.9);
        for (k, v) in [(("x1", 1), 0.3), (("x2", 1), -1.2), (("x1", 2), 2.0), (("x2", 2), 0.5)] {
            p.set(key(k.0, k.1), v);
        }
        assert!((eval_at(&d, &p) - eval_at(&expect, &p)).abs() < 1e-13);
    }
}
