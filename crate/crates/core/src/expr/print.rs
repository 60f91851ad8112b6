use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::{One, Signed, Zero};

use super::{Expr, Node, Rational};

/// How derivatives are written.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Style {
    /// `x1''`
    Primes,
    /// `der(x1, 2)`
    Canonical,
}

impl Expr {
    /// Text that the DAE-file parser reads back to the same tree.
    pub fn to_text(&self, style: Style) -> String {
        let mut s = String::new();
        write_expr(self, style, &mut s);
        s
    }
}

/// Exact decimal when the denominator divides a power of ten, `p/q` otherwise.
pub fn format_rational(r: &Rational) -> String {
    let neg = r.is_negative();
    let r = r.abs();
    let (n, d) = (r.numer().clone(), r.denom().clone());
    let body = if d.is_one() {
        n.to_string()
    } else {
        let (mut twos, mut fives, mut rest) = (0usize, 0usize, d.clone());
        let (two, five) = (BigInt::from(2), BigInt::from(5));
        while rest.is_even() {
            rest /= &two;
            twos += 1;
        }
        while (&rest % &five).is_zero() {
            rest /= &five;
            fives += 1;
        }
        if rest.is_one() {
            let k = twos.max(fives);
            let scaled = n * num_traits::pow(BigInt::from(10), k) / d;
            let digits = format!("{:0>width$}", scaled.to_string(), width = k + 1);
            let (ip, fp) = digits.split_at(digits.len() - k);
            format!("{}.{}", ip, fp)
        } else {
            format!("{}/{}", n, d)
        }
    };
    if neg {
        format!("-{}", body)
    } else {
        body
    }
}

fn is_fraction(r: &Rational) -> bool {
    format_rational(r).contains('/')
}

fn write_const(c: &Rational, out: &mut String) {
    let s = format_rational(c);
    if c.is_negative() || s.contains('/') {
        out.push('(');
        out.push_str(&s);
        out.push(')');
    } else {
        out.push_str(&s);
    }
}

fn write_wrapped(e: &Expr, style: Style, out: &mut String) {
    out.push('(');
    write_expr(e, style, out);
    out.push(')');
}

fn write_expr(e: &Expr, style: Style, out: &mut String) {
    match e.node() {
        Node::Const(c) => write_const(c, out),
        Node::Pi => out.push_str("pi"),
        Node::Time => out.push('t'),
        Node::Param(n) => out.push_str(n.as_str()),
        Node::Var(n, k) => match (style, *k) {
            (_, 0) => out.push_str(n.as_str()),
            (Style::Primes, k) => {
                out.push_str(n.as_str());
                (0..k).for_each(|_| out.push('\''));
            }
            (Style::Canonical, k) => out.push_str(&format!("der({}, {})", n, k)),
        },
        Node::Neg(x) => {
            out.push('-');
            match x.node() {
                Node::Sum(_) | Node::Product(_) | Node::Quotient(..) => write_wrapped(x, style, out),
                _ => write_expr(x, style, out),
            }
        }
        Node::Sum(ts) => {
            for (i, t) in ts.iter().enumerate() {
                if i == 0 {
                    match t.node() {
                        Node::Sum(_) => write_wrapped(t, style, out),
                        _ => write_expr(t, style, out),
                    }
                    continue;
                }
                match t.node() {
                    Node::Neg(x) => {
                        out.push_str(" - ");
                        match x.node() {
                            Node::Sum(_) => write_wrapped(x, style, out),
                            _ => write_expr(x, style, out),
                        }
                    }
                    Node::Const(c) if c.is_negative() => {
                        out.push_str(" - ");
                        write_const(&-c, out);
                    }
                    Node::Sum(_) => {
                        out.push_str(" + ");
                        write_wrapped(t, style, out);
                    }
                    _ => {
                        out.push_str(" + ");
                        write_expr(t, style, out);
                    }
                }
            }
        }
        Node::Product(fs) => {
            for (i, f) in fs.iter().enumerate() {
                if i > 0 {
                    out.push_str(" * ");
                }
                match f.node() {
                    Node::Sum(_) | Node::Neg(_) | Node::Quotient(..) | Node::Product(_) => {
                        write_wrapped(f, style, out)
                    }
                    _ => write_expr(f, style, out),
                }
            }
        }
        Node::Quotient(a, b) => {
            match a.node() {
                Node::Sum(_) | Node::Neg(_) => write_wrapped(a, style, out),
                _ => write_expr(a, style, out),
            }
            out.push_str(" / ");
            match b.node() {
                Node::Sum(_) | Node::Neg(_) | Node::Product(_) | Node::Quotient(..) => {
                    write_wrapped(b, style, out)
                }
                _ => write_expr(b, style, out),
            }
        }
        Node::Pow(b, k) => {
            match b.node() {
                Node::Var(..) | Node::Param(_) | Node::Time | Node::Pi | Node::Apply(..) => {
                    write_expr(b, style, out)
                }
                Node::Const(c) if !c.is_negative() && !is_fraction(c) && c.is_integer() => {
                    write_expr(b, style, out)
                }
                _ => write_wrapped(b, style, out),
            }
            out.push('^');
            if k.is_integer() && !k.is_negative() {
                out.push_str(&k.to_string());
            } else {
                out.push('(');
                out.push_str(&format!("{}", k));
                out.push(')');
            }
        }
        Node::Apply(f, x) => {
            out.push_str(f.name());
            write_wrapped(x, style, out);
        }
    }
}
