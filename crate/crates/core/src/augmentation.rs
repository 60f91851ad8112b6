//! Enlarging the system with copies of the companion equations in which
//! the target derivatives become fresh algebraic unknowns.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::assignment::{delta_hat, signature, solve_assignment, DualSolution};
use crate::dae::{DaeSystem, TrajectoryFixture};
use crate::error::{Error, Result};
use crate::expr::{Expr, PointBindings, Substitution, Symbol, Tracked, VarKey};
use crate::jacobian::{system_jacobian, SystemJacobian};
use crate::matrix::{Margined, Matrix, Relative};
use crate::pivot::{reduced_system, PivotChoice};
use crate::point::Point;
use crate::substitution::solve_targets;
use crate::zero_test::{defined, ZeroTestConfig, ZeroTester};

#[derive(Clone, Debug, Serialize)]
pub struct AugmentationStep {
    pub pivot: PivotChoice,
    /// Frozen values for the coordinates `x_j^(q_j − p_r)`, `j ∉ J`.
    #[serde(serialize_with = "ser_xi")]
    pub xi: BTreeMap<VarKey, f64>,
    /// Keys of `xi` that had no user or base-point value.
    #[serde(serialize_with = "crate::report::ser_keys")]
    pub xi_defaulted: Vec<VarKey>,
    /// Fresh unknown for each target `x_j^(q_j − p_r)`, `j ∈ J`.
    #[serde(serialize_with = "ser_aux")]
    pub aux: Vec<(Symbol, VarKey)>,
    #[serde(serialize_with = "crate::report::ser_expr")]
    pub new_fr: Expr,
    #[serde(serialize_with = "crate::report::ser_exprs")]
    pub copies: Vec<Expr>,
    #[serde(skip)]
    pub new_system: DaeSystem,
    /// Offsets extended by `p_r` on the new rows and columns.
    pub dual_update: DualSolution,
    pub delta_before: i64,
    pub delta_after: Option<i64>,
}

fn ser_xi<S: serde::Serializer>(m: &BTreeMap<VarKey, f64>, s: S) -> std::result::Result<S::Ok, S::Error> {
    use serde::ser::SerializeMap;
    let mut map = s.serialize_map(Some(m.len()))?;
    for (k, v) in m {
        map.serialize_entry(&k.to_string(), v)?;
    }
    map.end()
}

fn ser_aux<S: serde::Serializer>(a: &[(Symbol, VarKey)], s: S) -> std::result::Result<S::Ok, S::Error> {
    use serde::ser::SerializeMap;
    let mut map = s.serialize_map(Some(a.len()))?;
    for (y, k) in a {
        map.serialize_entry(y.as_str(), &k.to_string())?;
    }
    map.end()
}

impl AugmentationStep {
    pub fn aux_names(&self) -> Vec<Symbol> {
        self.aux.iter().map(|(y, _)| y.clone()).collect()
    }
}

fn fresh_name(sys: &DaeSystem, base: String) -> Symbol {
    let taken = |s: &str| sys.unknowns().iter().any(|u| u.as_str() == s) || sys.params().keys().any(|p| p.as_str() == s);
    let mut name = base;
    while taken(&name) {
        name.push('_');
    }
    Symbol::from(name)
}

/// Rank of an expression matrix, maximized over zero-test samples and
/// confirmed symbolically when deficient.
fn sampled_rank(m: &Matrix<Expr>, tester: &ZeroTester) -> Result<usize> {
    let ranks = tester.for_samples(&|| "pivot block".into(), |s| {
        let mut ok = true;
        let v = m.map(|e| match defined(e.eval_tracked(s)) {
            Ok(Some(v)) => v,
            _ => {
                ok = false;
                Tracked { value: 0.0, scale: 0.0 }
            }
        });
        if !ok {
            return Ok(None);
        }
        let o = Margined::new(tester.cfg.tolerance);
        let r = v.rank(&o)?;
        Ok(Some((o.margin(), r)))
    })?;
    let best = ranks.into_iter().fold((f64::NEG_INFINITY, 0), |a, b| if b > a { b } else { a }).1;
    if best == m.nrows().min(m.ncols()) {
        return Ok(best);
    }
    m.rank(tester)
}

/// Builds the augmented system for `pivot`, taking `Ξ` from `xi`, then the
/// base point, then zero; zero defaults are retried at one when they make
/// the copied pivot block singular.
pub fn augment_step(
    jac: &SystemJacobian,
    pivot: &PivotChoice,
    xi: &BTreeMap<VarKey, f64>,
    iteration: usize,
    cfg: &ZeroTestConfig,
) -> Result<AugmentationStep> {
    let sys = &jac.system;
    let cols = sys.unknowns();
    let pr = jac.p[pivot.r];
    let base = sys.base_point();

    let mut aux = Vec::new();
    let mut frozen = Vec::new();
    for (j, c) in cols.iter().enumerate() {
        let k = jac.q[j] - pr;
        if k < 0 {
            continue;
        }
        let key = VarKey::new(c.clone(), k as u32);
        if pivot.cols.contains(&j) {
            aux.push((fresh_name(sys, format!("y_{}_{}", c, iteration)), key));
        } else {
            frozen.push(key);
        }
    }

    let mut values = BTreeMap::new();
    let mut defaulted = Vec::new();
    for key in &frozen {
        match xi.get(key).copied().or_else(|| base.and_then(|p| p.get(key))) {
            Some(v) => {
                values.insert(key.clone(), v);
            }
            None => {
                values.insert(key.clone(), 0.0);
                defaulted.push(key.clone());
            }
        }
    }

    match build(jac, pivot, &aux, &values, &defaulted, cfg) {
        Err(Error::XiSingular(_)) if !defaulted.is_empty() => {
            for k in &defaulted {
                values.insert(k.clone(), 1.0);
            }
            build(jac, pivot, &aux, &values, &defaulted, cfg)
        }
        r => r,
    }
}

fn build(
    jac: &SystemJacobian,
    pivot: &PivotChoice,
    aux: &[(Symbol, VarKey)],
    xi: &BTreeMap<VarKey, f64>,
    defaulted: &[VarKey],
    cfg: &ZeroTestConfig,
) -> Result<AugmentationStep> {
    let sys = &jac.system;
    let tester = jac.tester();
    let n = sys.size();
    let m = pivot.m();
    let pr = jac.p[pivot.r];

    let mut psi = Substitution::new();
    for (y, key) in aux {
        psi.insert(key.clone(), Expr::var(y.clone(), 0));
    }
    for (key, v) in xi {
        psi.insert(key.clone(), Expr::float(*v));
    }
    let reduced = reduced_system(jac, pivot);
    let copies: Vec<Expr> = reduced.iter().map(|f| f.substitute(&psi).simplify()).collect();
    let new_fr = sys.equation(pivot.r).substitute(&psi).simplify();

    let block = Matrix::from_fn(m, m, |i, j| copies[i].partial(&aux[j].0, 0).simplify());
    let mut eta = sys.base_point().cloned();
    if let Some(p) = eta.as_mut() {
        for (y, key) in aux {
            if let Some(v) = p.get(key) {
                p.set(VarKey::new(y.clone(), 0), v);
            }
        }
    }
    let numeric = eta.as_ref().and_then(|p| {
        let b = PointBindings::new(p, sys.param_values());
        block.try_map(|e| e.eval_tracked(&b)).ok()
    });
    let rank = match numeric {
        Some(v) => v.rank(&Relative(cfg.tolerance))?.max(v.equilibrated_rank(cfg.tolerance, cfg.tolerance.sqrt())),
        None => sampled_rank(&block, tester)?,
    };
    if rank < m {
        let shown: Vec<String> = xi.iter().map(|(k, v)| format!("{}={}", k, v)).collect();
        return Err(Error::XiSingular(format!("rank {} < {} with Ξ = {{{}}}", rank, m, shown.join(", "))));
    }

    let mut eqs = sys.equations().to_vec();
    eqs[pivot.r] = new_fr.clone();
    eqs.extend(copies.iter().cloned());
    let mut aux_names = sys.aux().to_vec();
    aux_names.extend(aux.iter().map(|(y, _)| y.clone()));
    let new_system = sys
        .with_equations(Vec::new())?
        .with_aux(aux_names)?
        .with_equations(eqs)?
        .with_base_point(eta);

    let mut p_bar = jac.p.clone();
    p_bar.extend(std::iter::repeat_n(pr, m));
    let mut q_bar = jac.q.clone();
    q_bar.extend(std::iter::repeat_n(pr, m));
    let dual_update = DualSolution { p: p_bar, q: q_bar, matching: None, delta_hat: None, optimal: false };

    let before = solve_assignment(&signature(sys, cfg)?)
        .delta_hat
        .ok_or_else(|| Error::PostconditionViolation("input has no perfect matching".into()))?;
    let new_sig = signature(&new_system, cfg)?;
    if !dual_update.is_feasible(&new_sig) {
        return Err(Error::PostconditionViolation("extended offsets are infeasible".into()));
    }
    let ncols = sys.unknowns().len();
    let mut changed = vec![pivot.r];
    changed.extend(n..n + m);
    for &i in &changed {
        for j in 0..ncols {
            if let Some(s) = new_sig.get(i, j) {
                if s >= jac.q[j] - pr {
                    return Err(Error::PostconditionViolation(format!(
                        "equation {} keeps order {} in column {}",
                        i + 1,
                        s,
                        j + 1
                    )));
                }
            }
        }
    }
    let dbar = system_jacobian(&new_system, &dual_update, cfg)?;
    let s_rows = pivot.s_rows(n);
    for j in ncols..ncols + m {
        if pivot.rows.iter().chain(&s_rows).any(|&i| dbar.pattern[i][j]) {
            return Err(Error::PostconditionViolation("new columns leak into untouched rows".into()));
        }
    }
    for &i in &changed {
        if (0..ncols).any(|j| dbar.pattern[i][j]) {
            return Err(Error::PostconditionViolation("rewritten rows keep entries in old columns".into()));
        }
    }
    if dbar.term_rank() > n + m - 1 {
        return Err(Error::PostconditionViolation("term rank of the extended Jacobian is full".into()));
    }
    let after = delta_hat(&new_system, cfg)?;
    if after.is_some_and(|a| a >= before) {
        return Err(Error::PostconditionViolation(format!("δ̂ did not decrease: {} -> {:?}", before, after)));
    }

    Ok(AugmentationStep {
        pivot: pivot.clone(),
        xi: xi.clone(),
        xi_defaulted: defaulted.to_vec(),
        aux: aux.to_vec(),
        new_fr,
        copies,
        new_system,
        dual_update,
        delta_before: before,
        delta_after: after,
    })
}

/// Extends a fixture of the pre-augmentation system with values for the
/// new unknowns: closed forms when the copies are affine in them, per-grid
/// Newton solves otherwise.
pub fn recover_aux_trajectory(step: &AugmentationStep, fix: &TrajectoryFixture) -> Result<TrajectoryFixture> {
    let sys = &step.new_system;
    let tester = sys.tester(&ZeroTestConfig::default());
    let keys: Vec<VarKey> = step.aux.iter().map(|(y, _)| VarKey::new(y.clone(), 0)).collect();
    let mut out = fix.clone();
    if let Ok(phi) = solve_targets(&step.copies, &keys, &tester) {
        let closed: Option<Vec<Expr>> = keys.iter().map(|k| fix.plug_into(&phi[k]).ok()).collect();
        if let Some(closed) = closed {
            for (k, e) in keys.iter().zip(closed) {
                out.closed_form.insert(k.name.clone(), e.simplify());
            }
            return Ok(out);
        }
    }
    let names: Vec<Symbol> = keys.iter().map(|k| k.name.clone()).collect();
    let init: Vec<f64> = step
        .aux
        .iter()
        .map(|(y, _)| sys.base_point().and_then(|p| p.get_parts(y, 0)).unwrap_or(1.0))
        .collect();
    let cols = newton_over_grid(&step.copies, &names, fix, sys.param_values(), &init)?;
    for (name, v) in names.into_iter().zip(cols) {
        out.tabulated.insert(name, v);
    }
    Ok(out)
}

/// Least-squares Newton solve for `unknowns` at every grid point, with
/// all other coordinates taken from `fix`.
pub fn newton_over_grid(
    eqs: &[Expr],
    unknowns: &[Symbol],
    fix: &TrajectoryFixture,
    params: &BTreeMap<Symbol, f64>,
    init: &[f64],
) -> Result<Vec<Vec<f64>>> {
    let k = unknowns.len();
    let jac: Vec<Vec<Expr>> =
        eqs.iter().map(|e| unknowns.iter().map(|u| e.partial(u, 0).simplify()).collect()).collect();
    let mut cols = vec![Vec::with_capacity(fix.grid.len()); k];
    let mut y = init.to_vec();
    for g in 0..fix.grid.len() {
        let mut base = Point::new(fix.grid[g]);
        for e in eqs {
            for key in e.var_keys() {
                if !unknowns.contains(&key.name) {
                    base.set(key.clone(), fix.value(&key.name, key.order, g, params)?);
                }
            }
        }
        y = damped_newton(eqs, &jac, unknowns, &base, params, y)?;
        for (c, v) in cols.iter_mut().zip(&y) {
            c.push(*v);
        }
    }
    Ok(cols)
}

fn damped_newton(
    eqs: &[Expr],
    jac: &[Vec<Expr>],
    unknowns: &[Symbol],
    base: &Point,
    params: &BTreeMap<Symbol, f64>,
    mut y: Vec<f64>,
) -> Result<Vec<f64>> {
    let k = unknowns.len();
    let at = |y: &[f64]| {
        let mut p = base.clone();
        for (u, v) in unknowns.iter().zip(y) {
            p.set(VarKey::new(u.clone(), 0), *v);
        }
        p
    };
    let residual = |y: &[f64]| -> Result<Vec<f64>> {
        let p = at(y);
        let b = PointBindings::new(&p, params);
        eqs.iter().map(|e| e.eval::<f64>(&b)).collect()
    };
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let mut r = residual(&y)?;
    for _ in 0..100 {
        if norm(&r) <= 1e-12 {
            return Ok(y);
        }
        let p = at(&y);
        let b = PointBindings::new(&p, params);
        let jm = Matrix::from_rows(
            jac.iter().map(|row| row.iter().map(|e| e.eval::<f64>(&b)).collect::<Result<Vec<_>>>()).collect::<Result<Vec<_>>>()?,
        );
        let jt = jm.transpose();
        let mut normal = jt.mul(&jm);
        let mut lambda = 0.0;
        loop {
            for i in 0..k {
                let d = *normal.get(i, i);
                normal.set(i, i, d * (1.0 + lambda) + lambda * 1e-12);
            }
            let rhs = jt.mul(&Matrix::from_fn(r.len(), 1, |i, _| -r[i]));
            let step = normal.solve(&rhs, &crate::matrix::AbsTol(0.0))?;
            if let Some(step) = step {
                let cand: Vec<f64> = (0..k).map(|i| y[i] + step.get(i, 0)).collect();
                if let Ok(rc) = residual(&cand) {
                    if norm(&rc) < norm(&r) {
                        y = cand;
                        r = rc;
                        break;
                    }
                }
            }
            lambda = if lambda == 0.0 { 1e-6 } else { lambda * 10.0 };
            if lambda > 1e12 {
                return if norm(&r) <= 1e-9 {
                    Ok(y)
                } else {
                    Err(Error::NonlinearTargets(format!("Newton recovery stalled at residual {:e}", norm(&r))))
                };
            }
            normal = jt.mul(&jm);
        }
    }
    if norm(&r) <= 1e-9 {
        Ok(y)
    } else {
        Err(Error::NonlinearTargets(format!("Newton recovery did not converge, residual {:e}", norm(&r))))
    }
}
