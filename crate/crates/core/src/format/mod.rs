//! Text formats for systems and trajectory fixtures.
//!
//! ```text
//! param g = 9.8;
//! var x1, x2;
//! point { t = 0; x1 = 1; x1' = 0; }
//! eq x1' - x2 = 0;
//! eq der(x2, 1) + g * sin(x1) = 0;
//! ```

mod lexer;

use std::collections::{BTreeMap, BTreeSet};

use num_traits::ToPrimitive;
use thiserror::Error;

use crate::dae::{DaeSystem, TrajectoryFixture};
use crate::error::{Error, Result};
use crate::expr::{format_rational, parse_decimal, Expr, Func, Rational, Style, Symbol, VarKey};
use crate::point::Point;
use lexer::{lex, Tok, Token};

#[derive(Debug, Clone, PartialEq, Error)]
#[error("line {line}, column {col}: {msg}")]
pub struct ParseError {
    pub line: usize,
    pub col: usize,
    pub msg: String,
}

const KEYWORDS: [&str; 8] = ["param", "var", "aux", "point", "eq", "trajectory", "grid", "der"];

fn reserved(name: &str) -> bool {
    KEYWORDS.contains(&name) || name == "t" || name == "pi" || Func::from_name(name).is_some()
}

/// What identifiers may mean inside an expression.
struct Scope<'a> {
    vars: &'a BTreeSet<Symbol>,
    params: &'a BTreeSet<Symbol>,
    /// Whether variable coordinates are allowed at all.
    allow_vars: bool,
}

struct Parser<'a> {
    toks: Vec<Token>,
    pos: usize,
    scope: Option<Scope<'a>>,
}

impl<'a> Parser<'a> {
    fn new(src: &str) -> Result<Self> {
        Ok(Parser { toks: lex(src)?, pos: 0, scope: None })
    }

    fn peek(&self) -> &Token {
        &self.toks[self.pos]
    }

    fn next(&mut self) -> Token {
        let t = self.toks[self.pos].clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn err<T>(&self, t: &Token, msg: impl Into<String>) -> Result<T> {
        Err(Error::Syntax(ParseError { line: t.line, col: t.col, msg: msg.into() }))
    }

    fn is_sym(&self, c: char) -> bool {
        self.peek().tok == Tok::Sym(c)
    }

    fn eat(&mut self, c: char) -> bool {
        if self.is_sym(c) {
            self.next();
            true
        } else {
            false
        }
    }

    fn expect(&mut self, c: char) -> Result<()> {
        let t = self.next();
        if t.tok == Tok::Sym(c) {
            Ok(())
        } else {
            self.err(&t, format!("expected `{}`", c))
        }
    }

    fn ident(&mut self) -> Result<(String, Token)> {
        let t = self.next();
        match &t.tok {
            Tok::Ident(s) => Ok((s.clone(), t.clone())),
            _ => self.err(&t, "expected an identifier"),
        }
    }

    fn expr(&mut self) -> Result<Expr> {
        let mut terms = vec![self.term()?];
        loop {
            if self.eat('+') {
                terms.push(self.term()?);
            } else if self.eat('-') {
                terms.push(self.term()?.neg());
            } else {
                break;
            }
            // Fold left to right so printed sums read back identically.
            let folded = Expr::add_all(std::mem::take(&mut terms));
            terms.push(folded);
        }
        Ok(terms.pop().expect("one term"))
    }

    fn term(&mut self) -> Result<Expr> {
        let mut acc = self.unary()?;
        loop {
            if self.eat('*') {
                acc = Expr::mul_all([acc, self.unary()?]);
            } else if self.is_sym('/') {
                let t = self.next();
                let d = self.unary()?;
                if d.is_zero_literal() {
                    return self.err(&t, "division by zero");
                }
                acc = acc.div(&d);
            } else {
                return Ok(acc);
            }
        }
    }

    fn unary(&mut self) -> Result<Expr> {
        if self.eat('-') {
            return Ok(self.unary()?.neg());
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expr> {
        let base = self.postfix()?;
        if !self.is_sym('^') {
            return Ok(base);
        }
        let t = self.next();
        let k = match self.peek().tok.clone() {
            Tok::Number(s) => {
                let nt = self.next();
                parse_decimal(&s).ok_or(()).or_else(|_| self.err(&nt, "bad number"))?
            }
            Tok::Sym('(') => {
                self.next();
                let e = self.expr()?;
                self.expect(')')?;
                match e.simplify().as_const() {
                    Some(c) => c.clone(),
                    None => return self.err(&t, "exponent must be constant"),
                }
            }
            Tok::Sym('-') => {
                self.next();
                let nt = self.next();
                match &nt.tok {
                    Tok::Number(s) => -parse_decimal(s).ok_or(()).or_else(|_| self.err(&nt, "bad number"))?,
                    _ => return self.err(&nt, "expected a number"),
                }
            }
            _ => return self.err(&t, "expected a constant exponent"),
        };
        if base.is_zero_literal() && k < Rational::from_integer(0.into()) {
            return self.err(&t, "zero raised to a negative power");
        }
        Ok(base.pow(k))
    }

    fn postfix(&mut self) -> Result<Expr> {
        let start = self.peek().clone();
        let e = self.primary()?;
        let mut primes = 0;
        while self.eat('\'') {
            primes += 1;
        }
        if primes == 0 {
            return Ok(e);
        }
        match e.node() {
            crate::expr::Node::Var(n, k) => Ok(Expr::var(n.clone(), k + primes)),
            _ => self.err(&start, "primes apply only to variables"),
        }
    }

    fn variable(&self, name: &str, order: u32, at: &Token) -> Result<Expr> {
        match &self.scope {
            Some(s) if s.allow_vars && s.vars.contains(&Symbol::from(name)) => Ok(Expr::var(name, order)),
            Some(_) => Err(Error::UnknownSymbol(format!("{} at line {}, column {}", name, at.line, at.col))),
            None => Ok(Expr::var(name, order)),
        }
    }

    fn primary(&mut self) -> Result<Expr> {
        let t = self.next();
        match &t.tok {
            Tok::Number(s) => match parse_decimal(s) {
                Some(r) => Ok(Expr::constant(r)),
                None => self.err(&t, format!("bad number `{}`", s)),
            },
            Tok::Sym('(') => {
                let e = self.expr()?;
                self.expect(')')?;
                Ok(e)
            }
            Tok::Ident(name) => {
                let name = name.clone();
                if name == "t" {
                    return Ok(Expr::time());
                }
                if name == "pi" {
                    return Ok(Expr::pi());
                }
                if name == "der" {
                    self.expect('(')?;
                    let (v, vt) = self.ident()?;
                    self.expect(',')?;
                    let kt = self.next();
                    let k = match &kt.tok {
                        Tok::Number(s) => s.parse::<u32>().ok(),
                        _ => None,
                    };
                    let Some(k) = k else { return self.err(&kt, "expected a derivative order") };
                    self.expect(')')?;
                    return self.variable(&v, k, &vt);
                }
                if let Some(f) = Func::from_name(&name) {
                    self.expect('(')?;
                    let a = self.expr()?;
                    self.expect(')')?;
                    return Ok(Expr::apply(f, a));
                }
                if reserved(&name) {
                    return self.err(&t, format!("`{}` cannot appear here", name));
                }
                if let Some(s) = &self.scope {
                    if s.params.contains(&Symbol::from(name.as_str())) {
                        return Ok(Expr::param(name));
                    }
                }
                self.variable(&name, 0, &t)
            }
            Tok::Eof => self.err(&t, "unexpected end of input"),
            Tok::Sym(c) => self.err(&t, format!("unexpected `{}`", c)),
        }
    }

    /// A constant expression, possibly using parameters already bound.
    fn constant(&mut self, params: &BTreeMap<Symbol, Rational>) -> Result<Rational> {
        let at = self.peek().clone();
        let e = self.expr()?;
        match e.bind_params(params).simplify().as_const() {
            Some(c) => Ok(c.clone()),
            None => self.err(&at, "expected a constant"),
        }
    }

    fn numeric(&mut self, params: &BTreeMap<Symbol, Rational>) -> Result<f64> {
        let at = self.peek().clone();
        let e = self.expr()?;
        let vals: BTreeMap<Symbol, f64> = params.iter().map(|(k, v)| (k.clone(), v.to_f64().unwrap_or(f64::NAN))).collect();
        let p = Point::new(0.0);
        match e.bind_params(params).eval::<f64>(&crate::expr::PointBindings::new(&p, &vals)) {
            Ok(v) if !e.mentions_time() && e.var_keys().is_empty() => Ok(v),
            _ => self.err(&at, "expected a numeric constant"),
        }
    }

    fn declare(&self, seen: &mut BTreeSet<String>, name: &str, at: &Token) -> Result<()> {
        if reserved(name) {
            return self.err(at, format!("`{}` is reserved", name));
        }
        if !seen.insert(name.to_string()) {
            return self.err(at, format!("`{}` declared twice", name));
        }
        Ok(())
    }
}

/// Parses a system. Non-square systems are accepted; analysis rejects them.
pub fn parse_dae(src: &str) -> Result<DaeSystem> {
    let mut p = Parser::new(src)?;
    let mut params = BTreeMap::new();
    let mut vars = Vec::new();
    let mut aux = Vec::new();
    let mut seen = BTreeSet::new();
    let mut point_src = None;
    let mut eq_src = Vec::new();

    loop {
        let t = p.next();
        match &t.tok {
            Tok::Eof => break,
            Tok::Ident(k) if k == "param" => {
                let (name, nt) = p.ident()?;
                p.declare(&mut seen, &name, &nt)?;
                p.expect('=')?;
                p.scope = None;
                let v = p.constant(&params)?;
                p.expect(';')?;
                params.insert(Symbol::from(name), v);
            }
            Tok::Ident(k) if k == "var" || k == "aux" => {
                let is_aux = k == "aux";
                loop {
                    let (name, nt) = p.ident()?;
                    p.declare(&mut seen, &name, &nt)?;
                    if is_aux {
                        aux.push(Symbol::from(name));
                    } else {
                        vars.push(Symbol::from(name));
                    }
                    if !p.eat(',') {
                        break;
                    }
                }
                p.expect(';')?;
            }
            Tok::Ident(k) if k == "point" => {
                if point_src.is_some() {
                    return p.err(&t, "only one point block is allowed");
                }
                p.expect('{')?;
                point_src = Some(p.pos);
                let mut depth = 1;
                while depth > 0 {
                    let u = p.next();
                    match u.tok {
                        Tok::Sym('{') => depth += 1,
                        Tok::Sym('}') => depth -= 1,
                        Tok::Eof => return p.err(&u, "unterminated point block"),
                        _ => {}
                    }
                }
            }
            Tok::Ident(k) if k == "eq" => {
                eq_src.push(p.pos);
                loop {
                    let u = p.next();
                    match u.tok {
                        Tok::Sym(';') => break,
                        Tok::Eof => return p.err(&u, "missing `;` after equation"),
                        _ => {}
                    }
                }
            }
            _ => return p.err(&t, "expected `param`, `var`, `aux`, `point` or `eq`"),
        }
    }

    let var_set: BTreeSet<Symbol> = vars.iter().chain(&aux).cloned().collect();
    let param_set: BTreeSet<Symbol> = params.keys().cloned().collect();
    p.scope = Some(Scope { vars: &var_set, params: &param_set, allow_vars: true });

    let mut eqs = Vec::new();
    for start in eq_src {
        p.pos = start;
        let lhs = p.expr()?;
        p.expect('=')?;
        let rhs = p.expr()?;
        p.expect(';')?;
        eqs.push(if rhs.is_zero_literal() { lhs } else { lhs - rhs });
    }

    let point = match point_src {
        None => None,
        Some(start) => {
            p.pos = start;
            let mut pt = Point::new(0.0);
            while !p.eat('}') {
                let at = p.peek().clone();
                let key = if p.peek().tok == Tok::Ident("t".into()) {
                    p.next();
                    None
                } else {
                    match p.postfix()?.node() {
                        crate::expr::Node::Var(n, k) => Some(VarKey::new(n.clone(), *k)),
                        _ => return p.err(&at, "expected `t` or a variable coordinate"),
                    }
                };
                p.expect('=')?;
                let v = p.numeric(&params)?;
                p.expect(';')?;
                match key {
                    None => pt.t = v,
                    Some(k) => pt.set(k, v),
                }
            }
            Some(pt)
        }
    };

    Ok(DaeSystem::new(Vec::new(), vars, params)?.with_aux(aux)?.with_equations(eqs)?.with_base_point(point))
}

fn fmt_f64(v: f64) -> String {
    let s = format!("{:?}", v);
    if s.contains('e') || s.contains('E') {
        format_rational(&crate::expr::rational_from_f64(v))
    } else {
        s.strip_suffix(".0").map(str::to_string).unwrap_or(s)
    }
}

/// Canonical text; `parse_dae` reads it back to an equal system.
pub fn serialize_dae(sys: &DaeSystem) -> String {
    let mut out = String::new();
    for (k, v) in sys.params() {
        out.push_str(&format!("param {} = {};\n", k, format_rational(v)));
    }
    let names = |v: &[Symbol]| v.iter().map(Symbol::as_str).collect::<Vec<_>>().join(", ");
    if !sys.variables().is_empty() {
        out.push_str(&format!("var {};\n", names(sys.variables())));
    }
    if !sys.aux().is_empty() {
        out.push_str(&format!("aux {};\n", names(sys.aux())));
    }
    if let Some(p) = sys.base_point() {
        out.push_str("point {\n");
        out.push_str(&format!("  t = {};\n", fmt_f64(p.t)));
        for (k, v) in &p.values {
            let key = Expr::key(k).to_text(Style::Canonical);
            out.push_str(&format!("  {} = {};\n", key, fmt_f64(*v)));
        }
        out.push_str("}\n");
    }
    for e in sys.equations() {
        out.push_str(&format!("eq {} = 0;\n", e.to_text(Style::Canonical)));
    }
    out
}

/// Parses one coordinate written as `x`, `x''` or `der(x, 2)`.
pub fn parse_coordinate(src: &str) -> Result<VarKey> {
    let s = src.trim();
    let bad = || Error::Syntax(ParseError { line: 1, col: 1, msg: format!("`{}` is not a variable coordinate", src) });
    let valid = |n: &str| {
        n.chars().next().is_some_and(|c| c.is_ascii_alphabetic() || c == '_')
            && n.chars().all(|c| c.is_ascii_alphanumeric() || c == '_')
            && !reserved(n)
    };
    if let Some(inner) = s.strip_prefix("der(").and_then(|r| r.strip_suffix(')')) {
        let (n, k) = inner.split_once(',').ok_or_else(bad)?;
        let k: u32 = k.trim().parse().map_err(|_| bad())?;
        let n = n.trim();
        return if valid(n) { Ok(VarKey::new(n, k)) } else { Err(bad()) };
    }
    let n = s.trim_end_matches('\'');
    if valid(n) {
        Ok(VarKey::new(n, (s.len() - n.len()) as u32))
    } else {
        Err(bad())
    }
}

/// Parses `trajectory { x1 = sin(t) + 1; …; grid = 0:0.1:1; }`.
///
/// Closed forms may use `t`, `pi` and the given parameters.
pub fn parse_fixture(src: &str, params: &BTreeMap<Symbol, Rational>) -> Result<TrajectoryFixture> {
    let mut p = Parser::new(src)?;
    let empty = BTreeSet::new();
    let param_set: BTreeSet<Symbol> = params.keys().cloned().collect();
    let t = p.next();
    if t.tok != Tok::Ident("trajectory".into()) {
        return p.err(&t, "expected `trajectory`");
    }
    p.expect('{')?;
    let mut closed = BTreeMap::new();
    let mut grid = None;
    while !p.eat('}') {
        let (name, nt) = p.ident()?;
        p.expect('=')?;
        if name == "grid" {
            p.scope = None;
            let a = p.numeric(params)?;
            if p.eat(':') {
                let h = p.numeric(params)?;
                p.expect(':')?;
                let b = p.numeric(params)?;
                if h <= 0.0 || b < a {
                    return p.err(&nt, "grid needs a positive step and b ≥ a");
                }
                grid = Some(TrajectoryFixture::uniform_grid(a, h, b));
            } else {
                let mut g = vec![a];
                while p.eat(',') {
                    g.push(p.numeric(params)?);
                }
                grid = Some(g);
            }
        } else {
            if reserved(&name) {
                return p.err(&nt, format!("`{}` is reserved", name));
            }
            p.scope = Some(Scope { vars: &empty, params: &param_set, allow_vars: false });
            let e = p.expr()?.bind_params(params);
            p.scope = None;
            if closed.insert(Symbol::from(name.as_str()), e).is_some() {
                return p.err(&nt, format!("`{}` given twice", name));
            }
        }
        p.expect(';')?;
    }
    let end = p.next();
    if end.tok != Tok::Eof {
        return p.err(&end, "trailing input after trajectory block");
    }
    let grid = grid.ok_or_else(|| Error::Syntax(ParseError { line: t.line, col: t.col, msg: "missing grid".into() }))?;
    Ok(TrajectoryFixture::new(closed, grid))
}
