//! Test-side oracles that do not go through the library's own algorithms.
#![allow(dead_code)]

pub mod props;

use std::collections::BTreeMap;

use daerelax::dae::DaeSystem;
use daerelax::relax::PivotOverride;
use daerelax::expr::PointBindings;
use daerelax::{Expr, Point, Symbol, VarKey};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn instance(name: &str) -> DaeSystem {
    daerelax::benchmarks::by_name(name).expect("known instance").system().expect("instance parses")
}

/// Random point covering every coordinate of `exprs`; coordinates found in
/// `center` are perturbed by at most `spread`, others drawn from [-1, 1].
pub fn random_point(exprs: &[&Expr], center: Option<&Point>, spread: f64, r: &mut ChaCha8Rng) -> Point {
    let t0 = center.map_or(0.0, |c| c.t);
    let mut p = Point::new(t0 + r.gen_range(0.0..spread.min(1.0)));
    for e in exprs {
        for k in e.var_keys() {
            if p.get(&k).is_some() {
                continue;
            }
            let v = match center.and_then(|c| c.get(&k)) {
                Some(c) => c + r.gen_range(-spread..spread) * c.abs().max(1.0),
                None => r.gen_range(-1.0..1.0),
            };
            p.set(k, v);
        }
    }
    p
}

pub fn eval(e: &Expr, p: &Point, params: &BTreeMap<Symbol, f64>) -> f64 {
    e.eval::<f64>(&PointBindings::new(p, params)).expect("defined at sample")
}

pub fn rel_diff(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-300)
}

/// Largest relative discrepancy between `a` and `b` over `n` random points;
/// differences below `abs_floor` count as agreement.
pub fn max_rel_discrepancy(
    a: &Expr,
    b: &Expr,
    params: &BTreeMap<Symbol, f64>,
    center: Option<&Point>,
    spread: f64,
    n: usize,
    seed: u64,
) -> f64 {
    let mut r = rng(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..n {
        let p = random_point(&[a, b], center, spread, &mut r);
        let (va, vb) = (eval(a, &p, params), eval(b, &p, params));
        if (va - vb).abs() > 1e-300 {
            worst = worst.max(rel_diff(va, vb));
        }
    }
    worst
}

/// Highest syntactic order of `name` in `e`; an upper bound on σ.
pub fn syntactic_order(e: &Expr, name: &Symbol) -> Option<u32> {
    e.var_keys().into_iter().filter(|k| &k.name == name).map(|k| k.order).max()
}

pub fn contains(e: &Expr, name: &Symbol, order: i64) -> bool {
    order >= 0 && e.var_keys().contains(&VarKey::new(name.clone(), order as u32))
}

/// Maximum-weight perfect matching by enumerating permutations.
pub fn brute_force_assignment(sig: &[Vec<Option<u32>>]) -> Option<i64> {
    let n = sig.len();
    let mut perm: Vec<usize> = (0..n).collect();
    let mut best = None;
    permute(&mut perm, 0, &mut |p| {
        let w: Option<i64> = (0..n).map(|i| sig[i][p[i]].map(i64::from)).sum();
        if let Some(w) = w {
            best = Some(best.map_or(w, |b: i64| b.max(w)));
        }
    });
    best
}

pub fn all_perfect_matchings(sig: &[Vec<Option<u32>>]) -> Vec<Vec<usize>> {
    let n = sig.len();
    let mut perm: Vec<usize> = (0..n).collect();
    let mut out = Vec::new();
    permute(&mut perm, 0, &mut |p| {
        if (0..n).all(|i| sig[i][p[i]].is_some()) {
            out.push(p.to_vec());
        }
    });
    out
}

fn permute(a: &mut Vec<usize>, k: usize, f: &mut impl FnMut(&[usize])) {
    if k == a.len() {
        f(a);
        return;
    }
    for i in k..a.len() {
        a.swap(k, i);
        permute(a, k + 1, f);
        a.swap(k, i);
    }
}

/// Maximum bipartite matching size by augmenting paths.
pub fn term_rank(pattern: &[Vec<bool>]) -> usize {
    let ncols = pattern.first().map_or(0, Vec::len);
    let mut owner: Vec<Option<usize>> = vec![None; ncols];
    fn augment(i: usize, pat: &[Vec<bool>], seen: &mut [bool], owner: &mut [Option<usize>]) -> bool {
        for j in 0..seen.len() {
            if pat[i][j] && !seen[j] {
                seen[j] = true;
                if owner[j].is_none_or(|o| augment(o, pat, seen, owner)) {
                    owner[j] = Some(i);
                    return true;
                }
            }
        }
        false
    }
    (0..pattern.len()).filter(|&i| augment(i, pattern, &mut vec![false; ncols], &mut owner)).count()
}

/// Numerical rank from singular values relative to the largest one.
pub fn svd_rank(rows: &[Vec<f64>], rel_tol: f64) -> usize {
    if rows.is_empty() || rows[0].is_empty() {
        return 0;
    }
    let m = nalgebra::DMatrix::from_fn(rows.len(), rows[0].len(), |i, j| rows[i][j]);
    let sv = m.singular_values();
    let top = sv.iter().cloned().fold(0.0, f64::max);
    sv.iter().filter(|&&s| s > rel_tol * top).count()
}

/// Evaluates the entries of a symbolic matrix at `p`.
pub fn eval_rows(m: &daerelax::SymbolicMatrix, p: &Point, params: &BTreeMap<Symbol, f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| (0..m.ncols()).map(|j| eval(m.get(i, j), p, params)).collect()).collect()
}

/// The instance with its equations replaced by the hand-derived rewritten ones.
pub fn transistor_rewrite() -> DaeSystem {
    let head: String = daerelax::benchmarks::TRANSISTOR.text.lines().filter(|l| !l.starts_with("eq ")).map(|l| format!("{}\n", l)).collect();
    let g = |u: &str| format!("beta*(exp(({})/UF) - 1)", u);
    let eqs = [
        format!("-Ub/R2 + x2*(1/R1 + 1/R2) - (alpha - 1)*{} + (x1 - 0.1*sin(200*pi*t))/R0", g("x2 - x3")),
        format!("-C1*(x1' - x2') - Ub/R2 + x2*(1/R1 + 1/R2) - (alpha - 1)*{}", g("x2 - x3")),
        format!("C2*x3' + x3/R3 - {}", g("x2 - x3")),
        format!(
            "-Ub/R6 + x5*(1/R5 + 1/R6) - (alpha - 1)*{} + (x4 - Ub)/R4 + alpha*{}",
            g("x5 - x6"),
            g("x2 - x3")
        ),
        format!("-C3*(x4' - x5') - Ub/R6 + x5*(1/R5 + 1/R6) - (alpha - 1)*{}", g("x5 - x6")),
        format!("C4*x6' + x6/R7 - {}", g("x5 - x6")),
        format!("x8/R9 + (x7 - Ub)/R8 + alpha*{}", g("x5 - x6")),
        "-C5*(x7' - x8') + x8/R9".to_string(),
    ];
    let body: String = eqs.iter().map(|e| format!("eq {} = 0;\n", e)).collect();
    daerelax::format::parse_dae(&format!("{}{}", head, body)).unwrap()
}

fn zero_based(v: &[usize]) -> Vec<usize> {
    v.iter().map(|k| k - 1).collect()
}

/// `p = 0`, `q = (1,1,0,0,0,0,1,…,1)`, `r = 5`, `I = {3,4,6}`, `J = {3,4,5}`.
pub fn ring_bad() -> PivotOverride {
    let mut q = vec![1; 15];
    q[2..6].fill(0);
    PivotOverride { p: Some(vec![0; 15]), q: Some(q), r: Some(4), rows: zero_based(&[3, 4, 6]), cols: zero_based(&[3, 4, 5]) }
}

/// `p = (0,0,1,1,1,1,0,…,0)`, `q = 1`, `r = 11`, `I = {3,4,5,6,10,12,13}`, `J = {3,5,6,10,11,12,13}`.
pub fn ring_good() -> PivotOverride {
    let mut p = vec![0; 15];
    p[2..6].fill(1);
    PivotOverride {
        p: Some(p),
        q: Some(vec![1; 15]),
        r: Some(10),
        rows: zero_based(&[3, 4, 5, 6, 10, 12, 13]),
        cols: zero_based(&[3, 5, 6, 10, 11, 12, 13]),
    }
}
