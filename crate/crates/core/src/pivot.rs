//! Choosing `(r, I, J)`: a row `r` to rewrite, rows `I` that explain its
//! dependence, and columns `J` that make `D[I, J]` nonsingular.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expr::{Expr, Tracked, VarKey};
use crate::jacobian::SystemJacobian;
use crate::matrix::{AbsTol, Matrix};
use crate::point::Point;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PivotChoice {
    pub r: usize,
    /// Sorted, never contains `r`.
    pub rows: Vec<usize>,
    /// Sorted, same length as `rows`.
    pub cols: Vec<usize>,
    pub kappa: i64,
}

impl PivotChoice {
    pub fn m(&self) -> usize {
        self.rows.len()
    }

    /// Columns outside `J`.
    pub fn t_cols(&self, ncols: usize) -> Vec<usize> {
        (0..ncols).filter(|j| !self.cols.contains(j)).collect()
    }

    /// Rows outside `I ∪ {r}`.
    pub fn s_rows(&self, nrows: usize) -> Vec<usize> {
        (0..nrows).filter(|i| *i != self.r && !self.rows.contains(i)).collect()
    }

    /// One-based rendering `(r, {I}, {J})`.
    pub fn one_based(&self) -> (usize, Vec<usize>, Vec<usize>) {
        (self.r + 1, self.rows.iter().map(|i| i + 1).collect(), self.cols.iter().map(|j| j + 1).collect())
    }
}

fn kappa(p: &[i64], r: usize, rows: &[usize]) -> i64 {
    rows.iter().map(|&i| p[i] - p[r]).max().unwrap_or(0)
}

/// Checks the three pivot conditions against `jac`.
pub fn validate_pivot(jac: &SystemJacobian, r: usize, rows: &[usize], cols: &[usize]) -> Result<PivotChoice> {
    let n = jac.size();
    let nc = jac.entries.ncols();
    let bad = |m: String| Err(Error::InvalidPivot(m));
    if r >= n || rows.iter().any(|&i| i >= n) || cols.iter().any(|&j| j >= nc) {
        return bad("index out of range".into());
    }
    let rs: BTreeSet<usize> = rows.iter().copied().collect();
    let cs: BTreeSet<usize> = cols.iter().copied().collect();
    if rs.len() != rows.len() || cs.len() != cols.len() || rs.contains(&r) {
        return bad("repeated or overlapping indices".into());
    }
    if rows.len() != cols.len() || rows.is_empty() {
        return bad(format!("|I| = {} and |J| = {} must be equal and positive", rows.len(), cols.len()));
    }
    let rows: Vec<usize> = rs.into_iter().collect();
    let cols: Vec<usize> = cs.into_iter().collect();
    let m = rows.len();
    if rows.iter().any(|&i| jac.p[i] < jac.p[r]) {
        return bad("p_r must not exceed p_i on I".into());
    }
    if jac.rank_of(&rows, &cols)? != m {
        return bad("D[I, J] is identically singular".into());
    }
    let mut ir = rows.clone();
    ir.push(r);
    let all: Vec<usize> = (0..nc).collect();
    if jac.rank_of(&ir, &all)? != m {
        return bad("row r is not dependent on the rows I".into());
    }
    Ok(PivotChoice { r, kappa: kappa(&jac.p, r, &rows), rows, cols })
}

/// Target coordinates `x_j^(q_j − p_r)` for the columns `J`.
pub fn targets(jac: &SystemJacobian, r: usize, cols: &[usize]) -> Vec<VarKey> {
    let names = jac.columns();
    cols.iter().map(|&j| VarKey::new(names[j].clone(), (jac.q[j] - jac.p[r]) as u32)).collect()
}

/// True when every differentiated `I`-equation is affine in the targets.
pub fn affine_in_targets(jac: &SystemJacobian, r: usize, rows: &[usize], cols: &[usize]) -> Result<bool> {
    let ts = targets(jac, r, cols);
    let t = jac.tester();
    for &i in rows {
        let f = jac.system.equation(i).total_derivative((jac.p[i] - jac.p[r]) as u32);
        for (a, ta) in ts.iter().enumerate() {
            let d = f.partial(&ta.name, ta.order).simplify();
            for tb in &ts[a..] {
                if !t.is_zero(&d.partial(&tb.name, tb.order))? {
                    return Ok(false);
                }
            }
        }
    }
    Ok(true)
}

/// Dependent set `Z` from sample `s`, or `None` when this sample disagrees
/// with the structural verdict.
fn dependent_set(jac: &SystemJacobian, s: usize) -> Result<Option<Vec<usize>>> {
    let sample = &jac.samples()?[s];
    let o = jac.relative();
    let scan = sample.scan_rows(&o)?;
    let mut candidates: Vec<Vec<usize>> = Vec::new();
    if let Some((l, w)) = scan.dependent.first() {
        let support = |keep: &dyn Fn(&Tracked) -> bool| {
            let mut z: Vec<usize> = vec![*l];
            z.extend((0..w.len()).filter(|&k| k != *l && w[k].value != 0.0 && keep(&w[k])));
            z.sort_unstable();
            z
        };
        // Tracked scales can overstate cancellation; weights large against
        // the biggest one give a second candidate.
        let wmax = w.iter().map(|t| t.value.abs()).fold(0.0, f64::max);
        let loose = o.0.sqrt() * wmax;
        candidates.push(support(&|t| !t.negligible(o.0)));
        candidates.push(support(&|t| t.value.abs() > loose));
    }
    if let Some(u) = left_null_vector(sample) {
        let umax = u.iter().fold(0.0, |a: f64, v| a.max(v.abs()));
        candidates.push((0..u.len()).filter(|&k| u[k].abs() > 1e-6 * umax).collect());
    }
    candidates.dedup();
    let all: Vec<usize> = (0..jac.entries.ncols()).collect();
    'next: for z in candidates {
        if jac.rank_of(&z, &all)? != z.len() - 1 {
            continue;
        }
        for &drop in &z {
            let sub: Vec<usize> = z.iter().copied().filter(|&i| i != drop).collect();
            if jac.rank_of(&sub, &all)? != sub.len() {
                continue 'next;
            }
        }
        return Ok(Some(z));
    }
    Ok(None)
}

/// Left null vector of the sample values when the nullity is one, by
/// elimination with complete pivoting on `Aᵀ`.
fn left_null_vector(sample: &Matrix<Tracked>) -> Option<Vec<f64>> {
    let (n, c) = (sample.nrows(), sample.ncols());
    // a[j][i] = A[i][j], unknowns u_i.
    let mut a: Vec<Vec<f64>> = (0..c).map(|j| (0..n).map(|i| sample.get(i, j).value).collect()).collect();
    let amax = a.iter().flatten().fold(0.0, |m: f64, v| m.max(v.abs()));
    if amax == 0.0 {
        return None;
    }
    let mut perm: Vec<usize> = (0..n).collect();
    let mut rank = 0;
    while rank < n.min(c) {
        let mut best = (0.0, rank, rank);
        for (r, row) in a.iter().enumerate().skip(rank) {
            for k in rank..n {
                if row[k].abs() > best.0 {
                    best = (row[k].abs(), r, k);
                }
            }
        }
        if best.0 <= 1e-9 * amax {
            break;
        }
        a.swap(rank, best.1);
        for row in a.iter_mut() {
            row.swap(rank, best.2);
        }
        perm.swap(rank, best.2);
        for r in 0..c {
            if r != rank {
                let f = a[r][rank] / a[rank][rank];
                if f != 0.0 {
                    for k in rank..n {
                        a[r][k] -= f * a[rank][k];
                    }
                }
            }
        }
        rank += 1;
    }
    if rank + 1 != n {
        return None;
    }
    // Free unknown is the last permuted one, set to 1.
    let mut u = vec![0.0; n];
    u[perm[n - 1]] = 1.0;
    for r in 0..rank {
        u[perm[r]] = -a[r][n - 1] / a[r][r];
    }
    Some(u)
}

/// Dependent set `Z` from elimination over the expressions themselves.
fn symbolic_dependent_set(jac: &SystemJacobian) -> Result<Option<Vec<usize>>> {
    let t = jac.tester();
    let scan = jac.entries.scan_rows(t)?;
    let Some((l, w)) = scan.dependent.first() else { return Ok(None) };
    let mut z = vec![*l];
    for (k, wk) in w.iter().enumerate() {
        if k != *l && !t.is_zero(wk)? {
            z.push(k);
        }
    }
    z.sort_unstable();
    let all: Vec<usize> = (0..jac.entries.ncols()).collect();
    if jac.rank_of(&z, &all)? != z.len() - 1 {
        return Ok(None);
    }
    Ok(Some(z))
}

/// Default pivot: `Z` from greedy row elimination, `r` of least offset in `Z`,
/// columns by greedy elimination on `D[I, C]`. Among rows of least offset,
/// one whose companion equations are affine in the targets is preferred.
pub fn find_pivot(jac: &SystemJacobian) -> Result<PivotChoice> {
    pivot_candidates(jac)?
        .into_iter()
        .next()
        .ok_or_else(|| Error::DegenerateElimination("no row of least offset admits a valid pivot".into()))
}

/// Every valid choice with `I = Z ∖ {r}`, most preferred first: rows of
/// least offset before the others, affine companions before the rest.
pub fn pivot_candidates(jac: &SystemJacobian) -> Result<Vec<PivotChoice>> {
    let n = jac.size();
    if jac.structural_rank()? == n {
        return Err(Error::InvalidPivot("system Jacobian is already nonsingular".into()));
    }
    let all: Vec<usize> = (0..n).collect();
    let order = jac.samples_by_margin(&all, &(0..jac.entries.ncols()).collect::<Vec<_>>())?;
    let numeric = order.into_iter().map(|s| dependent_set(jac, s)).find_map(|r| r.transpose()).transpose()?;
    let z = match numeric {
        Some(z) => z,
        None => symbolic_dependent_set(jac)?
            .ok_or_else(|| Error::DegenerateElimination("no consistent dependent row set".into()))?,
    };

    let pmin = z.iter().map(|&i| jac.p[i]).min().expect("Z is nonempty");
    let mut ranked = Vec::new();
    for &r in &z {
        let rows: Vec<usize> = z.iter().copied().filter(|&i| i != r).collect();
        let Ok(cols) = column_basis(jac, &rows) else { continue };
        let Ok(choice) = validate_pivot(jac, r, &rows, &cols) else { continue };
        let least = jac.p[r] == pmin;
        let affine = least && affine_in_targets(jac, r, &choice.rows, &choice.cols)?;
        ranked.push(((!least, !affine), choice));
    }
    ranked.sort_by_key(|(k, c)| (*k, c.r));
    Ok(ranked.into_iter().map(|(_, c)| c).collect())
}

fn column_basis(jac: &SystemJacobian, rows: &[usize]) -> Result<Vec<usize>> {
    let all: Vec<usize> = (0..jac.entries.ncols()).collect();
    let o = jac.relative();
    for k in jac.samples_by_margin(rows, &all)? {
        let cols = jac.samples()?[k].select(rows, &all).scan_cols(&o)?;
        if cols.len() == rows.len() {
            return Ok(cols);
        }
    }
    let cols = jac.entries.select(rows, &all).scan_cols(jac.tester())?;
    if cols.len() == rows.len() {
        return Ok(cols);
    }
    Err(Error::DegenerateElimination("rows I are dependent".into()))
}

/// Keeps `r` and `I` and picks the `J` maximizing `|det D[I, J]|` at `point`.
pub fn repivot_at_point(jac: &SystemJacobian, base: &PivotChoice, point: &Point) -> Result<PivotChoice> {
    let all: Vec<usize> = (0..jac.entries.ncols()).collect();
    let Ok(at) = jac.at_point(point).map(|m| m.select(&base.rows, &all)) else {
        return Ok(base.clone());
    };
    let m = base.m();
    let det = |cols: &[usize]| at.select(&(0..m).collect::<Vec<_>>(), cols).determinant(&AbsTol(0.0)).map(f64::abs);
    let mut best = (base.cols.clone(), det(&base.cols)?);
    let total = binomial(all.len(), m);
    if total <= 5000 {
        for cols in combinations(all.len(), m) {
            let d = det(&cols)?;
            if d > best.1 {
                best = (cols, d);
            }
        }
    } else {
        let cols = at.scan_cols(&AbsTol(1e-12))?;
        if cols.len() == m {
            let d = det(&cols)?;
            if d > best.1 {
                best = (cols, d);
            }
        }
    }
    if best.0 == base.cols {
        return Ok(base.clone());
    }
    validate_pivot(jac, base.r, &base.rows, &best.0).or_else(|_| Ok(base.clone()))
}

fn binomial(n: usize, k: usize) -> usize {
    (0..k).fold(1usize, |acc, i| acc.saturating_mul(n - i) / (i + 1))
}

/// All `k`-subsets of `0..n` in lexicographic order.
pub fn combinations(n: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur = Vec::with_capacity(k);
    fn go(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..n {
            if n - i < k - cur.len() {
                break;
            }
            cur.push(i);
            go(i + 1, n, k, cur, out);
            cur.pop();
        }
    }
    go(0, n, k, &mut cur, &mut out);
    out
}

/// The expressions `F_i^(p_i − p_r)` for `i ∈ I`.
pub fn reduced_system(jac: &SystemJacobian, pivot: &PivotChoice) -> Vec<Expr> {
    pivot
        .rows
        .iter()
        .map(|&i| jac.system.equation(i).total_derivative((jac.p[i] - jac.p[pivot.r]) as u32))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assignment::{signature, solve_assignment};
    use crate::dae::DaeSystem;
    use crate::jacobian::system_jacobian;
    use crate::zero_test::ZeroTestConfig;
    use std::collections::BTreeMap;

    fn x(n: &str, k: u32) -> Expr {
        Expr::var(n, k)
    }

    fn jac(eqs: Vec<Expr>, vars: &[&str]) -> SystemJacobian {
        let sys = DaeSystem::new(eqs, vars.iter().map(|v| (*v).into()).collect(), BTreeMap::new()).unwrap();
        let cfg = ZeroTestConfig::default();
        let d = solve_assignment(&signature(&sys, &cfg).unwrap());
        system_jacobian(&sys, &d, &cfg).unwrap()
    }

    fn eq35() -> SystemJacobian {
        let t = Expr::time();
        jac(
            vec![
                x("x1", 1) * x("x2", 1) - Expr::int(2) * t.cos().powi(2),
                x("x1", 1).powi(2) * x("x2", 1).powi(2) + x("x1", 0) + x("x2", 0)
                    - Expr::int(4) * t.cos().powi(4)
                    - Expr::int(3) * t.sin()
                    - Expr::int(2),
            ],
            &["x1", "x2"],
        )
    }

    #[test]
    fn intro_pivot() {
        let j = jac(
            vec![x("x1", 1) + x("x2", 1) + x("x3", 0), x("x1", 1) + x("x2", 1), x("x2", 0) + x("x3", 1)],
            &["x1", "x2", "x3"],
        );
        let p = find_pivot(&j).unwrap();
        assert_eq!((p.r, p.rows.clone(), p.cols.clone()), (0, vec![1], vec![0]));
        assert_eq!(p.kappa, 0);
    }

    #[test]
    fn lc_failure_pivot_prefers_affine_row() {
        let p = find_pivot(&eq35()).unwrap();
        assert_eq!(p.one_based(), (2, vec![1], vec![1]));
    }

    #[test]
    fn repivot_prefers_well_conditioned_column() {
        let j = eq35();
        let base = find_pivot(&j).unwrap();
        let pt = Point::new(0.0).with("x1", 1, 1.0).with("x2", 1, 1e-9).with("x1", 0, 0.0).with("x2", 0, 0.0);
        assert_eq!(repivot_at_point(&j, &base, &pt).unwrap().cols, vec![1]);
        let flat = Point::new(0.0).with("x1", 1, 1.0).with("x2", 1, 1.0).with("x1", 0, 0.0).with("x2", 0, 0.0);
        assert_eq!(repivot_at_point(&j, &base, &flat).unwrap(), base);
    }

    #[test]
    fn validation_rejects_bad_pivots() {
        let j = eq35();
        assert!(validate_pivot(&j, 1, &[0], &[0]).is_ok());
        assert!(validate_pivot(&j, 1, &[1], &[0]).is_err());
        assert!(validate_pivot(&j, 1, &[0], &[0, 1]).is_err());
    }

    #[test]
    fn combinations_are_lexicographic() {
        assert_eq!(combinations(4, 2).len(), 6);
        assert_eq!(combinations(3, 2), vec![vec![0, 1], vec![0, 2], vec![1, 2]]);
        assert_eq!(binomial(15, 7), 6435);
    }
}
