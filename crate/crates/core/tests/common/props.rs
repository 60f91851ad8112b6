//! Property bodies shared by the proptest suite and the acceptance harness.
#![allow(dead_code)]

use std::collections::BTreeMap;

use daerelax::assignment::{signature, solve_assignment, DualSolution, SignatureMatrix};
use daerelax::dae::DaeSystem;
use daerelax::jacobian::system_jacobian;
use daerelax::pivot::find_pivot;
use daerelax::relax::{relax, FinalStatus, Method, ModificationReport, RelaxationOptions, Step};
use daerelax::zero_test::{sigma_order, ZeroTestConfig};
use daerelax::{Expr, Point, Symbol, VarKey};
use proptest::prelude::*;
use proptest::test_runner::{Config, RngSeed, TestRunner};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::*;

pub const CASES: u32 = 128;

pub fn config(seed: u64) -> Config {
    Config { cases: CASES, rng_seed: RngSeed::Fixed(seed), failure_persistence: None, ..Config::default() }
}

pub fn nonzero(r: &mut ChaCha8Rng, lo: i64, hi: i64) -> i64 {
    loop {
        let v = r.gen_range(lo..=hi);
        if v != 0 {
            return v;
        }
    }
}

/// Random smooth expression over `vars` with derivatives up to `max_order`.
pub fn random_expr(r: &mut ChaCha8Rng, depth: u32, vars: &[&str], max_order: u32) -> Expr {
    if depth == 0 || r.gen_bool(0.25) {
        return match r.gen_range(0..5) {
            0 => Expr::int(nonzero(r, -3, 3)),
            1 => Expr::time(),
            _ => Expr::var(*vars.choose(r).unwrap(), r.gen_range(0..=max_order)),
        };
    }
    let sub = |r: &mut ChaCha8Rng| random_expr(r, depth - 1, vars, max_order);
    match r.gen_range(0..8) {
        0 | 1 => sub(r) + sub(r),
        2 | 3 => sub(r) * sub(r),
        4 => sub(r).sin(),
        5 => sub(r).cos(),
        6 => sub(r).tanh(),
        _ => {
            let d = sub(r);
            sub(r) / (Expr::int(2) + d.powi(2))
        }
    }
}

pub fn params() -> BTreeMap<Symbol, f64> {
    BTreeMap::new()
}



pub fn random_signature(r: &mut ChaCha8Rng, n: usize, max: u32) -> Vec<Vec<Option<u32>>> {
    (0..n).map(|_| (0..n).map(|_| if r.gen_bool(0.3) { None } else { Some(r.gen_range(0..=max)) }).collect()).collect()
}



/// `F_i = Σ_j c_ij x_j^(σ_ij)` with independent nonzero coefficients, so the
/// Jacobian pattern is exactly the set of tight edges.
pub fn linear_system(entries: &[Vec<Option<u32>>], r: &mut ChaCha8Rng) -> DaeSystem {
    let n = entries.len();
    let vars: Vec<Symbol> = (1..=n).map(|j| Symbol::new(&format!("x{}", j))).collect();
    let eqs = entries
        .iter()
        .map(|row| {
            Expr::add_all(row.iter().enumerate().filter_map(|(j, s)| {
                s.map(|o| Expr::int(nonzero(r, -4, 4)) * Expr::var(vars[j].clone(), o))
            }))
        })
        .collect();
    DaeSystem::new(eqs, vars, BTreeMap::new()).unwrap()
}



/// Exact rank of a small integer matrix by fraction-free elimination.
pub fn int_rank(rows: &[Vec<i64>]) -> usize {
    let mut a: Vec<Vec<i128>> = rows.iter().map(|r| r.iter().map(|&v| v as i128).collect()).collect();
    let (m, n) = (a.len(), a.first().map_or(0, Vec::len));
    let mut rank = 0;
    for c in 0..n {
        let Some(piv) = (rank..m).find(|&i| a[i][c] != 0) else { continue };
        a.swap(rank, piv);
        for i in 0..m {
            if i != rank && a[i][c] != 0 {
                let (f, g) = (a[i][c], a[rank][c]);
                for k in 0..n {
                    a[i][k] = a[i][k] * g - a[rank][k] * f;
                }
                let gcd = a[i].iter().fold(0i128, |acc, &v| num_integer::Integer::gcd(&acc, &v));
                if gcd > 1 {
                    a[i].iter_mut().for_each(|v| *v /= gcd);
                }
            }
        }
        rank += 1;
    }
    rank
}

/// A random system whose leading coefficient matrix is `diag(s) · A` with
/// `A` rank-deficient, plus lower-order terms.
pub struct Singular {
    pub sys: DaeSystem,
    pub a: Vec<Vec<i64>>,
}

pub fn singular_system(seed: u64, n: usize, nonlinear_leading: bool, second_order: bool) -> Option<Singular> {
    let mut r = rng(seed);
    let base = if n >= 3 && r.gen_bool(0.3) { n - 2 } else { n - 1 };
    let mut a: Vec<Vec<i64>> = (0..base)
        .map(|i| (0..n).map(|j| if i == j { nonzero(&mut r, -2, 2) } else { r.gen_range(-2..=2) }).collect())
        .collect();
    while a.len() < n {
        let lambda: Vec<i64> = (0..base).map(|_| r.gen_range(-1..=1)).collect();
        a.push((0..n).map(|j| (0..base).map(|i| lambda[i] * a[i][j]).sum()).collect());
    }
    a.shuffle(&mut r);
    let pattern: Vec<Vec<bool>> = a.iter().map(|row| row.iter().map(|&v| v != 0).collect()).collect();
    if term_rank(&pattern) < n {
        return None;
    }
    let names: Vec<String> = (1..=n).map(|j| format!("x{}", j)).collect();
    let order: Vec<u32> = (0..n).map(|_| if second_order && r.gen_bool(0.3) { 2 } else { 1 }).collect();
    let x = |j: usize, k: u32| Expr::var(names[j].as_str(), k);
    let mut eqs = Vec::new();
    for row in &a {
        let lead = Expr::add_all(row.iter().enumerate().filter(|(_, v)| **v != 0).map(|(j, &v)| Expr::int(v) * x(j, order[j])));
        let u = r.gen_range(0..n);
        let scale = match r.gen_range(0..3) {
            0 => Expr::one(),
            1 => Expr::int(2) + x(u, 0).sin(),
            _ => Expr::one() + x(u, 0).powi(2),
        };
        let mut f = scale * lead.clone();
        if nonlinear_leading && r.gen_bool(0.3) {
            f = f + Expr::int(nonzero(&mut r, -2, 2)) * lead.powi(3);
        }
        for _ in 0..r.gen_range(1..=3) {
            let j = r.gen_range(0..n);
            let k = r.gen_range(0..order[j]);
            let c = Expr::int(nonzero(&mut r, -3, 3));
            let term = match r.gen_range(0..4) {
                0 => x(j, k),
                1 => x(j, k).sin(),
                2 => x(j, k) * x(r.gen_range(0..n), 0),
                _ => Expr::time().cos(),
            };
            f = f + c * term;
        }
        eqs.push(f);
    }
    let vars = names.iter().map(|s| Symbol::new(s)).collect();
    Some(Singular { sys: DaeSystem::new(eqs, vars, BTreeMap::new()).ok()?, a })
}



/// Whether `e` depends on coordinate `k` near `p`, by central differences.
pub fn depends_on(e: &Expr, k: &VarKey, p: &Point) -> bool {
    if !e.var_keys().contains(k) {
        return false;
    }
    let h = 1e-5;
    let base = p.get(k).unwrap_or(0.0);
    let mut up = p.clone();
    up.set(k.clone(), base + h);
    let mut down = p.clone();
    down.set(k.clone(), base - h);
    let (fu, fd, f0) = (eval(e, &up, &params()), eval(e, &down, &params()), eval(e, p, &params()));
    ((fu - fd) / (2.0 * h)).abs() > 1e-6 * f0.abs().max(1.0)
}

/// Structural guarantees of every iteration in `rep`.
pub fn check_steps(rep: &ModificationReport, r: &mut ChaCha8Rng) -> Result<(), TestCaseError> {
    for it in &rep.iterations {
        let before = it.dual.delta_hat.unwrap();
        prop_assert_eq!(brute_force_assignment(&it.signature.entries), Some(before));
        let after = it.step.delta_after();
        prop_assert!(after.is_none_or(|a| a < before), "{} -> {:?}", before, after);
        let sys = it.step.new_system();
        let piv = it.step.pivot();
        let pr = it.dual.p[piv.r];
        match &it.step {
            Step::Substitution(s) | Step::Lc(s) => {
                for _ in 0..3 {
                    let p = random_point(&[&s.new_fr], None, 1.0, r);
                    for (j, c) in it.columns.iter().enumerate() {
                        let k = it.dual.q[j] - pr;
                        if k >= 0 {
                            prop_assert!(!depends_on(&s.new_fr, &VarKey::new(c.clone(), k as u32), &p), "{}", s.new_fr);
                        }
                    }
                }
            }
            Step::Augmentation(a) => {
                let n = it.columns.len();
                let m = piv.m();
                prop_assert_eq!(sys.size(), n + m);
                let cols = sys.unknowns();
                let (pb, qb) = (&a.dual_update.p, &a.dual_update.q);
                let mut changed = vec![piv.r];
                changed.extend(n..n + m);
                // Strict order inequality on the rewritten and copied rows.
                for &i in &changed {
                    for (j, c) in it.columns.iter().enumerate() {
                        let bound = it.dual.q[j] - pr;
                        if let Some(o) = syntactic_order(sys.equation(i), c) {
                            prop_assert!((o as i64) < bound, "row {} column {}", i, j);
                        }
                    }
                }
                // Pattern of D̄ from syntactic occurrence, a superset of its nonzeros.
                let pattern: Vec<Vec<bool>> = (0..n + m)
                    .map(|i| (0..n + m).map(|j| contains(sys.equation(i), &cols[j], qb[j] - pb[i])).collect())
                    .collect();
                let s_rows: Vec<usize> = piv.s_rows(n);
                for j in n..n + m {
                    for &i in piv.rows.iter().chain(&s_rows) {
                        prop_assert!(!pattern[i][j]);
                    }
                }
                for &i in &changed {
                    for j in 0..n {
                        prop_assert!(!pattern[i][j]);
                    }
                }
                prop_assert!(term_rank(&pattern) < n + m);
            }
        }
    }
    Ok(())
}

type Outcome = Result<(), TestCaseError>;

/// `∂f/∂x^(c) = ∂f^(d)/∂x^(c+d)` once `c` reaches the order of `x` in `f`.
pub fn griewank((seed, d, extra): (u64, u32, u32)) -> Outcome {
    let mut r = rng(seed);
    let f = random_expr(&mut r, 4, &["x1", "x2"], 2);
    let x = Symbol::new(["x1", "x2"][r.gen_range(0..2)]);
    let c = syntactic_order(&f, &x).map_or(0, |o| o + extra);
    let lhs = f.partial(&x, c);
    let rhs = f.total_derivative(d).partial(&x, c + d);
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let p = random_point(&[&lhs, &rhs, &f], None, 1.0, &mut r);
        let (a, b) = (eval(&lhs, &p, &params()), eval(&rhs, &p, &params()));
        if (a - b).abs() > 1e-12 {
            worst = worst.max(rel_diff(a, b));
        }
    }
    prop_assert!(worst < 1e-9, "{} vs {}: {:e}", lhs, rhs, worst);
    Ok(())
}

pub fn order_growth((seed, d): (u64, u32)) -> Outcome {
    let mut r = rng(seed);
    let f = random_expr(&mut r, 4, &["x1", "x2"], 2);
    let cfg = ZeroTestConfig::default();
    for name in ["x1", "x2"] {
        let x = Symbol::new(name);
        let before = sigma_order(&f, &x, &cfg).unwrap();
        let after = sigma_order(&f.total_derivative(d), &x, &cfg).unwrap();
        prop_assert_eq!(after, before.map(|o| o + d), "{}", f);
    }
    Ok(())
}

/// Weak and strong duality against exhaustive enumeration, plus `0 ≤ p, q ≤ n·l`.
pub fn duality((seed, n, max): (u64, usize, u32)) -> Outcome {
    let mut r = rng(seed);
    let entries = random_signature(&mut r, n, max);
    let sig = SignatureMatrix { entries: entries.clone() };
    let dual = solve_assignment(&sig);
    let best = brute_force_assignment(&entries);
    prop_assert_eq!(dual.delta_hat, best);
    let Some(best) = best else { return Ok(()) };
    prop_assert!(dual.is_feasible(&sig));
    prop_assert_eq!(dual.objective(), best);
    for m in all_perfect_matchings(&entries) {
        let w: i64 = (0..n).map(|i| i64::from(entries[i][m[i]].unwrap())).sum();
        prop_assert!(w <= dual.objective());
    }
    let l = entries.iter().flatten().flatten().copied().max().unwrap_or(0) as i64;
    let bound = n as i64 * l;
    prop_assert!(dual.p.iter().chain(&dual.q).all(|&v| (0..=bound).contains(&v)), "{:?} {:?}", dual.p, dual.q);
    Ok(())
}

/// A feasible dual is optimal exactly when `D` has full term rank.
pub fn term_rank_optimality((seed, n, bumps): (u64, usize, Vec<i64>)) -> Outcome {
    let mut r = rng(seed);
    let entries = random_signature(&mut r, n, 2);
    prop_assume!(brute_force_assignment(&entries).is_some());
    let sys = linear_system(&entries, &mut r);
    let cfg = ZeroTestConfig::default();
    let sig = signature(&sys, &cfg).unwrap();
    prop_assert_eq!(&sig.entries, &entries);
    let opt = solve_assignment(&sig);
    prop_assert!(opt.optimal);
    // Raising q_j or lowering p_i keeps feasibility.
    let p: Vec<i64> = (0..n).map(|i| opt.p[i] + 1 - bumps[i]).collect();
    let q: Vec<i64> = (0..n).map(|j| opt.q[j] + 1 + bumps[4 + j]).collect();
    let cand = DualSolution { p, q, matching: None, delta_hat: None, optimal: false };
    prop_assert!(cand.is_feasible(&sig));
    let is_optimal = Some(cand.objective()) == brute_force_assignment(&entries);
    let jac = system_jacobian(&sys, &cand, &cfg).unwrap();
    prop_assert_eq!(jac.term_rank() == n, is_optimal);
    prop_assert_eq!(term_rank(&jac.pattern) == n, is_optimal);
    prop_assert_eq!(system_jacobian(&sys, &opt, &cfg).unwrap().term_rank(), n);
    Ok(())
}

/// `D[Z, C]` loses exactly one rank and every proper subset of `Z` keeps
/// full row rank; `D[I, J]` is nonsingular.
pub fn dependent_set((seed, n): (u64, usize)) -> Outcome {
    let Some(s) = singular_system(seed, n, false, false) else { return Ok(()) };
    let cfg = ZeroTestConfig::default();
    let dual = solve_assignment(&signature(&s.sys, &cfg).unwrap());
    prop_assume!(dual.p.iter().all(|&v| v == 0) && dual.q.iter().all(|&v| v == 1));
    let jac = system_jacobian(&s.sys, &dual, &cfg).unwrap();
    let piv = find_pivot(&jac).unwrap();
    let mut z = piv.rows.clone();
    z.push(piv.r);
    z.sort_unstable();
    let pick = |rows: &[usize]| rows.iter().map(|&i| s.a[i].clone()).collect::<Vec<_>>();
    prop_assert_eq!(int_rank(&pick(&z)), z.len() - 1);
    for drop in &z {
        let sub: Vec<usize> = z.iter().copied().filter(|i| i != drop).collect();
        prop_assert_eq!(int_rank(&pick(&sub)), sub.len());
    }
    let block: Vec<Vec<i64>> = piv.rows.iter().map(|&i| piv.cols.iter().map(|&j| s.a[i][j]).collect()).collect();
    prop_assert_eq!(int_rank(&block), piv.m());
    Ok(())
}

pub fn substitution_steps((seed, n, second): (u64, usize, bool)) -> Outcome {
    let Some(s) = singular_system(seed, n, false, second) else { return Ok(()) };
    let rep = relax(&s.sys, &RelaxationOptions::with_method(Method::Substitution)).unwrap();
    let violated = matches!(&rep.final_status, FinalStatus::MethodFailure { kind, .. } if kind == "PostconditionViolation");
    prop_assert!(!violated, "{:?}", rep.final_status);
    check_steps(&rep, &mut rng(seed ^ 1))
}

pub fn augmentation_steps((seed, n, second, nl): (u64, usize, bool, bool)) -> Outcome {
    let Some(s) = singular_system(seed, n, nl, second) else { return Ok(()) };
    let rep = relax(&s.sys, &RelaxationOptions::with_method(Method::Augmentation)).unwrap();
    match &rep.final_status {
        FinalStatus::Ok => prop_assert_eq!(rep.final_structural_rank, Some(rep.final_system.size())),
        FinalStatus::MethodFailure { kind, .. } => prop_assert_eq!(kind.as_str(), "XiSingularError"),
        FinalStatus::F1 => prop_assert!(!rep.iterations.is_empty()),
        other => prop_assert!(false, "unexpected {:?}", other),
    }
    check_steps(&rep, &mut rng(seed ^ 2))
}

pub fn lc_steps((seed, n): (u64, usize)) -> Outcome {
    let Some(s) = singular_system(seed, n, false, false) else { return Ok(()) };
    let rep = relax(&s.sys, &RelaxationOptions::with_method(Method::Lc)).unwrap();
    check_steps(&rep, &mut rng(seed ^ 3))
}

fn run<S: Strategy>(seed: u64, strategy: S, test: fn(S::Value) -> Outcome) -> Result<(), String> {
    TestRunner::new(config(seed)).run(&strategy, test).map_err(|e| e.to_string())
}

pub type Suite = (&'static str, fn() -> Result<(), String>);

/// Every property suite with its pinned seed.
pub const SUITES: &[Suite] = &[
    ("griewank equality", || run(11, (any::<u64>(), 1u32..=3, 0u32..=1), griewank)),
    ("order grows with differentiation", || run(12, (any::<u64>(), 1u32..=3), order_growth)),
    ("dual optimality and bounds", || run(13, (any::<u64>(), 1usize..=5, 0u32..=3), duality)),
    ("term rank certifies optimality", || {
        run(14, (any::<u64>(), 1usize..=4, prop::collection::vec(0i64..=1, 8)), term_rank_optimality)
    }),
    ("dependent set is minimal", || run(15, (any::<u64>(), 2usize..=4), dependent_set)),
    ("substitution steps", || run(16, (any::<u64>(), 2usize..=4, any::<bool>()), substitution_steps)),
    ("augmentation steps", || {
        run(17, (any::<u64>(), 2usize..=4, any::<bool>(), any::<bool>()), augmentation_steps)
    }),
    ("linear combination steps", || run(18, (any::<u64>(), 2usize..=4), lc_steps)),
];

pub fn suite(name: &str) -> Result<(), String> {
    (SUITES.iter().find(|s| s.0 == name).expect("known suite").1)()
}
