//! Rewriting one equation by eliminating target derivatives, either by
//! solving the companion equations for them or by a linear combination.

use serde::Serialize;

use crate::assignment::{delta_hat, signature, solve_assignment};
use crate::dae::DaeSystem;
use crate::error::{Error, Result};
use crate::expr::{Expr, Substitution, VarKey};
use crate::jacobian::SystemJacobian;
use crate::matrix::Matrix;
use crate::pivot::{reduced_system, targets, PivotChoice};
use crate::zero_test::{ZeroTestConfig, ZeroTester};

#[derive(Clone, Debug, Serialize)]
pub struct SubstitutionStep {
    pub pivot: PivotChoice,
    #[serde(serialize_with = "crate::report::ser_keys")]
    pub targets: Vec<VarKey>,
    #[serde(serialize_with = "crate::report::ser_exprs")]
    pub reduced: Vec<Expr>,
    /// Empty for the linear-combination variant.
    #[serde(serialize_with = "crate::report::ser_subst")]
    pub explicit_map: Substitution,
    /// Cokernel weights on `I`; empty for the substitution variant.
    #[serde(serialize_with = "crate::report::ser_exprs")]
    pub weights: Vec<Expr>,
    #[serde(serialize_with = "crate::report::ser_expr")]
    pub new_fr: Expr,
    #[serde(skip)]
    pub new_system: DaeSystem,
    pub delta_before: i64,
    pub delta_after: Option<i64>,
}

/// Solves `reduced = 0` for `targets` when it is affine in them.
pub fn solve_targets(reduced: &[Expr], targets: &[VarKey], tester: &ZeroTester) -> Result<Substitution> {
    assert_eq!(reduced.len(), targets.len(), "need one equation per target");
    let m = targets.len();
    let mut a = Vec::with_capacity(m);
    let mut b = Vec::with_capacity(m);
    let zeros: Substitution = targets.iter().map(|t| (t.clone(), Expr::zero())).collect();
    for (i, f) in reduced.iter().enumerate() {
        let mut row = Vec::with_capacity(m);
        for (ja, ta) in targets.iter().enumerate() {
            let d = f.partial(&ta.name, ta.order).simplify();
            for tb in &targets[ja..] {
                if !tester.is_zero(&d.partial(&tb.name, tb.order))? {
                    return Err(Error::NonlinearTargets(format!(
                        "equation {} of the reduced system is not affine in {} and {}",
                        i + 1,
                        ta,
                        tb
                    )));
                }
            }
            row.push(d);
        }
        a.push(row);
        b.push(-f.substitute(&zeros).simplify());
    }
    let a = Matrix::from_rows(a);
    let rhs = Matrix::from_rows(b.into_iter().map(|v| vec![v]).collect());
    let sol = a
        .solve(&rhs, tester)?
        .ok_or_else(|| Error::SingularAtConstruction("coefficient matrix of the targets".into()))?;
    let mut map = Substitution::new();
    for (k, t) in targets.iter().enumerate() {
        let v = sol.get(k, 0).simplify();
        if v.var_keys().iter().any(|vk| targets.contains(vk)) {
            return Err(Error::SingularAtConstruction(format!("solution for {} still contains targets", t)));
        }
        map.insert(t.clone(), v);
    }
    Ok(map)
}

/// Substitutes a value for every variable coordinate whose partial vanishes,
/// so identically cancelled occurrences disappear syntactically.
fn prune(e: Expr, tester: &ZeroTester) -> Result<Expr> {
    let mut e = e;
    for k in e.var_keys() {
        if !e.var_keys().contains(&k) || !tester.is_zero(&e.partial(&k.name, k.order))? {
            continue;
        }
        for fill in [Expr::zero(), Expr::one()] {
            let cand = e.substitute(&[(k.clone(), fill)].into()).simplify();
            if tester.tracked_samples(&cand).is_ok() {
                e = cand;
                break;
            }
        }
    }
    Ok(e)
}

/// Checks that the rewritten row no longer depends on `x_j^(q_j − p_r)`.
fn check_independence(new_fr: &Expr, jac: &SystemJacobian, r: usize, tester: &ZeroTester) -> Result<()> {
    for (j, c) in jac.columns().iter().enumerate() {
        let k = jac.q[j] - jac.p[r];
        if k >= 0 && !tester.is_zero(&new_fr.partial(c, k as u32))? {
            return Err(Error::PostconditionViolation(format!(
                "rewritten equation {} still depends on {}",
                r + 1,
                VarKey::new(c.clone(), k as u32)
            )));
        }
    }
    Ok(())
}

fn finish(
    jac: &SystemJacobian,
    pivot: &PivotChoice,
    new_fr: Expr,
    cfg: &ZeroTestConfig,
) -> Result<(DaeSystem, i64, Option<i64>)> {
    let sys = &jac.system;
    let before = solve_assignment(&signature(sys, cfg)?)
        .delta_hat
        .ok_or_else(|| Error::PostconditionViolation("input has no perfect matching".into()))?;
    let mut eqs = sys.equations().to_vec();
    eqs[pivot.r] = new_fr;
    let new_system = sys.with_equations(eqs)?;
    let after = delta_hat(&new_system, cfg)?;
    if after.is_some_and(|a| a >= before) {
        return Err(Error::PostconditionViolation(format!("δ̂ did not decrease: {} -> {:?}", before, after)));
    }
    Ok((new_system, before, after))
}

pub fn substitute_step(jac: &SystemJacobian, pivot: &PivotChoice, cfg: &ZeroTestConfig) -> Result<SubstitutionStep> {
    let tester = jac.tester();
    let reduced = reduced_system(jac, pivot);
    let ts = targets(jac, pivot.r, &pivot.cols);
    let phi = solve_targets(&reduced, &ts, tester)?;
    let fr = jac.system.equation(pivot.r);
    let new_fr = prune(fr.substitute(&phi).simplify(), tester)?;
    check_independence(&new_fr, jac, pivot.r, tester)?;
    let (new_system, delta_before, delta_after) = finish(jac, pivot, new_fr.clone(), cfg)?;
    Ok(SubstitutionStep {
        pivot: pivot.clone(),
        targets: ts,
        reduced,
        explicit_map: phi,
        weights: Vec::new(),
        new_fr,
        new_system,
        delta_before,
        delta_after,
    })
}

/// Replaces `F_r` by `F_r + Σ u_i F_i^(p_i − p_r)` with `u` a cokernel
/// vector of `D[I ∪ {r}, J]`.
pub fn lc_step(jac: &SystemJacobian, pivot: &PivotChoice, cfg: &ZeroTestConfig) -> Result<SubstitutionStep> {
    let tester = jac.tester();
    let m = pivot.m();
    let dij = jac.entries.select(&pivot.rows, &pivot.cols);
    let drj = jac.entries.select(&[pivot.r], &pivot.cols);
    let rhs = Matrix::from_fn(m, 1, |k, _| -drj.get(0, k).clone());
    let w = dij
        .transpose()
        .solve(&rhs, tester)?
        .ok_or_else(|| Error::SingularAtConstruction("D[I, J] is singular".into()))?;
    let weights = (0..m)
        .map(|k| {
            let u = w.get(k, 0).simplify();
            Ok(tester.constant_value(&u)?.map_or(u, Expr::constant))
        })
        .collect::<Result<Vec<Expr>>>()?;

    for (k, u) in weights.iter().enumerate() {
        for (j, c) in jac.columns().iter().enumerate() {
            let bound = jac.q[j] - jac.p[pivot.r];
            if let Some(o) = tester.sigma_order(u, c)? {
                if i64::from(o) >= bound {
                    return Err(Error::LcCondition(format!(
                        "weight for equation {} depends on {} at order {} (limit {})",
                        pivot.rows[k] + 1,
                        c,
                        o,
                        bound - 1
                    )));
                }
            }
        }
    }

    let reduced = reduced_system(jac, pivot);
    let terms = std::iter::once(jac.system.equation(pivot.r).clone())
        .chain(weights.iter().zip(&reduced).map(|(u, f)| u * f));
    let new_fr = prune(Expr::add_all(terms).simplify(), tester)?;
    check_independence(&new_fr, jac, pivot.r, tester)?;
    let (new_system, delta_before, delta_after) = finish(jac, pivot, new_fr.clone(), cfg)?;
    Ok(SubstitutionStep {
        pivot: pivot.clone(),
        targets: targets(jac, pivot.r, &pivot.cols),
        reduced,
        explicit_map: Substitution::new(),
        weights,
        new_fr,
        new_system,
        delta_before,
        delta_after,
    })
}
