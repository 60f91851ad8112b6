//! Signature matrices, the weighted assignment problem and its dual.

use serde::{Deserialize, Serialize};

use crate::dae::DaeSystem;
use crate::error::{Error, Result};
use crate::zero_test::ZeroTestConfig;

/// `σ(F_i, x_j)` with `None` standing for −∞.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SignatureMatrix {
    pub entries: Vec<Vec<Option<u32>>>,
}

impl SignatureMatrix {
    pub fn nrows(&self) -> usize {
        self.entries.len()
    }

    pub fn ncols(&self) -> usize {
        self.entries.first().map_or(0, Vec::len)
    }

    pub fn get(&self, i: usize, j: usize) -> Option<i64> {
        self.entries[i][j].map(i64::from)
    }
}

/// Dual offsets with the matching that certifies them.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DualSolution {
    pub p: Vec<i64>,
    pub q: Vec<i64>,
    /// Column matched to each row.
    pub matching: Option<Vec<usize>>,
    /// `None` means −∞.
    pub delta_hat: Option<i64>,
    pub optimal: bool,
}

impl DualSolution {
    /// Checks `q_j − p_i ≥ c_ij` on every finite entry.
    pub fn is_feasible(&self, sig: &SignatureMatrix) -> bool {
        self.p.len() == sig.nrows()
            && self.q.len() == sig.ncols()
            && (0..sig.nrows()).all(|i| {
                (0..sig.ncols()).all(|j| sig.get(i, j).is_none_or(|c| self.q[j] - self.p[i] >= c))
            })
    }

    pub fn objective(&self) -> i64 {
        self.q.iter().sum::<i64>() - self.p.iter().sum::<i64>()
    }

    /// Validates user-supplied offsets: feasible, optimal and nonnegative.
    pub fn manual(p: Vec<i64>, q: Vec<i64>, sig: &SignatureMatrix) -> Result<Self> {
        let best = solve_assignment(sig);
        let Some(dh) = best.delta_hat else {
            return Err(Error::InvalidDual("system has no perfect matching".into()));
        };
        let d = DualSolution { p, q, matching: None, delta_hat: Some(dh), optimal: true };
        if !d.is_feasible(sig) {
            return Err(Error::InvalidDual("offsets are not feasible".into()));
        }
        if d.p.iter().chain(&d.q).any(|&v| v < 0) {
            return Err(Error::InvalidDual("offsets must be nonnegative".into()));
        }
        if d.objective() != dh {
            return Err(Error::InvalidDual(format!("objective {} differs from optimum {}", d.objective(), dh)));
        }
        let matching = tight_matching(sig, &d.p, &d.q)
            .ok_or_else(|| Error::InvalidDual("no perfect matching on tight edges".into()))?;
        Ok(DualSolution { matching: Some(matching), ..d })
    }
}

pub fn signature(sys: &DaeSystem, cfg: &ZeroTestConfig) -> Result<SignatureMatrix> {
    let tester = sys.tester(cfg);
    let cols = sys.unknowns();
    let entries = sys
        .equations()
        .iter()
        .map(|e| {
            let e = e.simplify();
            cols.iter().map(|c| tester.sigma_order(&e, c)).collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SignatureMatrix { entries })
}

/// Maximum bipartite matching by augmenting paths; returns the column of each row.
pub fn max_matching(nrows: usize, ncols: usize, edge: &dyn Fn(usize, usize) -> bool) -> Vec<Option<usize>> {
    fn augment(
        i: usize,
        ncols: usize,
        edge: &dyn Fn(usize, usize) -> bool,
        seen: &mut [bool],
        col_of: &mut [Option<usize>],
    ) -> bool {
        for j in 0..ncols {
            if edge(i, j) && !seen[j] {
                seen[j] = true;
                if col_of[j].is_none_or(|k| augment(k, ncols, edge, seen, col_of)) {
                    col_of[j] = Some(i);
                    return true;
                }
            }
        }
        false
    }
    let mut col_of = vec![None; ncols];
    for i in 0..nrows {
        let mut seen = vec![false; ncols];
        augment(i, ncols, edge, &mut seen, &mut col_of);
    }
    let mut row_to = vec![None; nrows];
    for (j, r) in col_of.iter().enumerate() {
        if let Some(i) = r {
            row_to[*i] = Some(j);
        }
    }
    row_to
}

fn has_perfect(n: usize, edge: &dyn Fn(usize, usize) -> bool) -> bool {
    max_matching(n, n, edge).iter().all(Option::is_some)
}

/// Lexicographically smallest perfect matching on tight edges.
fn tight_matching(sig: &SignatureMatrix, p: &[i64], q: &[i64]) -> Option<Vec<usize>> {
    let n = sig.nrows();
    let tight = |i: usize, j: usize| sig.get(i, j) == Some(q[j] - p[i]);
    if n != sig.ncols() || !has_perfect(n, &tight) {
        return None;
    }
    let mut fixed: Vec<Option<usize>> = vec![None; n];
    for i in 0..n {
        for j in 0..n {
            if !tight(i, j) || fixed.contains(&Some(j)) {
                continue;
            }
            fixed[i] = Some(j);
            let f = fixed.clone();
            let ok = has_perfect(n, &|a, b| match f[a] {
                Some(c) => c == b,
                None => tight(a, b) && !f.contains(&Some(b)),
            });
            if ok {
                break;
            }
            fixed[i] = None;
        }
    }
    fixed.into_iter().collect()
}

/// Hungarian method on costs `−c`; returns the column assigned to each row.
fn hungarian(cost: &[Vec<i64>]) -> Vec<usize> {
    let n = cost.len();
    let inf = i64::MAX / 4;
    let (mut u, mut v) = (vec![0i64; n + 1], vec![0i64; n + 1]);
    let (mut p, mut way) = (vec![0usize; n + 1], vec![0usize; n + 1]);
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![inf; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let (i0, mut delta, mut j1) = (p[j0], inf, 0);
            for j in 1..=n {
                if !used[j] {
                    let cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut ans = vec![0; n];
    for j in 1..=n {
        if p[j] != 0 {
            ans[p[j] - 1] = j - 1;
        }
    }
    ans
}

/// Maximum-weight perfect matching with the componentwise-minimal
/// nonnegative optimal dual.
pub fn solve_assignment(sig: &SignatureMatrix) -> DualSolution {
    let n = sig.nrows();
    let failed = || DualSolution {
        p: vec![0; n],
        q: vec![0; sig.ncols()],
        matching: None,
        delta_hat: None,
        optimal: false,
    };
    if n != sig.ncols() || !has_perfect(n, &|i, j| sig.get(i, j).is_some()) {
        return failed();
    }
    let maxc = (0..n).flat_map(|i| (0..n).filter_map(move |j| sig.get(i, j))).max().unwrap_or(0);
    let big = (n as i64 + 1) * (maxc + 1) + 1;
    let cost: Vec<Vec<i64>> =
        (0..n).map(|i| (0..n).map(|j| sig.get(i, j).map_or(big, |c| -c)).collect()).collect();
    let m = hungarian(&cost);
    let c = |i: usize, j: usize| sig.get(i, j).expect("matched edge is finite");
    let delta: i64 = (0..n).map(|i| c(i, m[i])).sum();

    let mut row_of = vec![0; n];
    for (i, &j) in m.iter().enumerate() {
        row_of[j] = i;
    }
    let mut q: Vec<i64> = (0..n).map(|j| c(row_of[j], j).max(0)).collect();
    loop {
        let mut changed = false;
        for i in 0..n {
            let pi = q[m[i]] - c(i, m[i]);
            for j in 0..n {
                if let Some(cij) = sig.get(i, j) {
                    if q[j] < pi + cij {
                        q[j] = pi + cij;
                        changed = true;
                    }
                }
            }
        }
        if !changed {
            break;
        }
    }
    let p: Vec<i64> = (0..n).map(|i| q[m[i]] - c(i, m[i])).collect();
    let matching = tight_matching(sig, &p, &q).expect("optimal dual has a tight perfect matching");
    DualSolution { p, q, matching: Some(matching), delta_hat: Some(delta), optimal: true }
}

pub fn delta_hat(sys: &DaeSystem, cfg: &ZeroTestConfig) -> Result<Option<i64>> {
    sys.require_square()?;
    Ok(solve_assignment(&signature(sys, cfg)?).delta_hat)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sig(rows: &[&[i64]]) -> SignatureMatrix {
        SignatureMatrix {
            entries: rows.iter().map(|r| r.iter().map(|&v| (v >= 0).then_some(v as u32)).collect()).collect(),
        }
    }

    #[test]
    fn intro_dual() {
        let s = sig(&[&[1, 1, 0], &[1, 1, -1], &[-1, 0, 1]]);
        let d = solve_assignment(&s);
        assert_eq!(d.p, vec![0, 0, 0]);
        assert_eq!(d.q, vec![1, 1, 1]);
        assert_eq!(d.delta_hat, Some(3));
        assert_eq!(d.matching, Some(vec![0, 1, 2]));
    }

    #[test]
    fn no_perfect_matching() {
        let d = solve_assignment(&sig(&[&[0, 0], &[-1, -1]]));
        assert_eq!(d.delta_hat, None);
        assert!(!d.optimal && d.matching.is_none());
    }

    #[test]
    fn minimal_dual_on_pendulum_shape() {
        // Classic index-3 pendulum signature.
        let s = sig(&[&[2, -1, 0], &[-1, 2, 0], &[0, 0, -1]]);
        let d = solve_assignment(&s);
        assert_eq!(d.p, vec![0, 0, 2]);
        assert_eq!(d.q, vec![2, 2, 0]);
        assert!(d.is_feasible(&s));
        assert_eq!(d.objective(), d.delta_hat.unwrap());
    }

    #[test]
    fn manual_dual_validation() {
        let s = sig(&[&[1, 1], &[1, 1]]);
        assert!(DualSolution::manual(vec![0, 0], vec![1, 1], &s).is_ok());
        assert!(DualSolution::manual(vec![1, 1], vec![2, 2], &s).is_ok());
        assert!(DualSolution::manual(vec![0, 0], vec![0, 1], &s).is_err());
        assert!(DualSolution::manual(vec![0, 0], vec![2, 1], &s).is_err());
    }
}
