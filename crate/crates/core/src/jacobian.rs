//! System Jacobians, their ranks, and failure classification.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use serde::{Deserialize, Serialize};

use crate::assignment::{max_matching, DualSolution};
use crate::dae::DaeSystem;
use crate::error::{Error, Result};
use crate::expr::{Expr, PointBindings, Symbol, Tracked};
use crate::matrix::{Margined, Matrix, Relative};
use crate::point::Point;
use crate::zero_test::{defined, ZeroTestConfig, ZeroTester};

/// `D_ij = ∂F_i / ∂x_j^(q_j − p_i)` with its nonzero pattern.
#[derive(Clone, Debug)]
pub struct SystemJacobian {
    pub entries: Matrix<Expr>,
    pub pattern: Vec<Vec<bool>>,
    pub p: Vec<i64>,
    pub q: Vec<i64>,
    pub system: DaeSystem,
    tester: ZeroTester,
    samples: OnceLock<std::result::Result<Vec<Matrix<Tracked>>, Error>>,
    ranks: Arc<Mutex<HashMap<(Vec<usize>, Vec<usize>), usize>>>,
}

/// Outcome of the structural test.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    #[serde(rename = "OK")]
    Ok,
    F1,
    #[serde(rename = "F2-candidate")]
    F2Candidate,
    F3,
}

impl std::fmt::Display for Verdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Verdict::Ok => "OK",
            Verdict::F1 => "F1",
            Verdict::F2Candidate => "F2-candidate",
            Verdict::F3 => "F3",
        })
    }
}

pub fn system_jacobian(sys: &DaeSystem, dual: &DualSolution, cfg: &ZeroTestConfig) -> Result<SystemJacobian> {
    let tester = sys.tester(cfg);
    let cols = sys.unknowns();
    let n = sys.size();
    if dual.p.len() != n || dual.q.len() != cols.len() {
        return Err(Error::InvalidDual("offset lengths do not match the system".into()));
    }
    let mut pattern = vec![vec![false; cols.len()]; n];
    let mut rows = Vec::with_capacity(n);
    for (i, f) in sys.equations().iter().enumerate() {
        let mut row = Vec::with_capacity(cols.len());
        for (j, c) in cols.iter().enumerate() {
            let k = dual.q[j] - dual.p[i];
            let d = if k < 0 { Expr::zero() } else { f.partial(c, k as u32).simplify() };
            pattern[i][j] = !d.is_zero_literal() && !tester.is_zero(&d)?;
            row.push(if pattern[i][j] { d } else { Expr::zero() });
        }
        rows.push(row);
    }
    Ok(SystemJacobian {
        entries: Matrix::from_rows(rows),
        pattern,
        p: dual.p.clone(),
        q: dual.q.clone(),
        system: sys.clone(),
        tester,
        samples: OnceLock::new(),
        ranks: Arc::default(),
    })
}

impl SystemJacobian {
    pub fn size(&self) -> usize {
        self.entries.nrows()
    }

    pub fn tester(&self) -> &ZeroTester {
        &self.tester
    }

    pub fn columns(&self) -> Vec<Symbol> {
        self.system.unknowns()
    }

    pub fn term_rank(&self) -> usize {
        term_rank_of(&self.pattern)
    }

    /// Numeric copies of `D` at the zero-test samples.
    pub fn samples(&self) -> Result<&[Matrix<Tracked>]> {
        let r = self.samples.get_or_init(|| {
            let (n, m) = (self.entries.nrows(), self.entries.ncols());
            self.tester.for_samples(&|| "system Jacobian".into(), |s| {
                let mut out = Matrix::filled(n, m, Tracked { value: 0.0, scale: 0.0 });
                for i in 0..n {
                    for j in 0..m {
                        if self.pattern[i][j] {
                            match defined(self.entries.get(i, j).eval_tracked(s))? {
                                Some(v) => out.set(i, j, v),
                                None => return Ok(None),
                            }
                        }
                    }
                }
                Ok(Some(out))
            })
        });
        r.as_ref().map(Vec::as_slice).map_err(Clone::clone)
    }

    pub fn relative(&self) -> Relative {
        Relative(self.tester.cfg.tolerance)
    }

    /// Rank of `D[rows, cols]`. Numeric ranks at the samples are lower
    /// bounds; a deficient result is confirmed by elimination over the
    /// expressions with sampled zero tests on the pivots.
    pub fn rank_of(&self, rows: &[usize], cols: &[usize]) -> Result<usize> {
        let full = rows.len().min(cols.len());
        if self.numeric_rank(rows, cols)? == full {
            return Ok(full);
        }
        self.symbolic_rank(rows, cols)
    }

    /// Numeric rank of `D[rows, cols]` at the sample whose zero decisions
    /// were least ambiguous.
    ///
    /// Rounding bounds can grow through elimination until genuine pivots
    /// look negligible, so a clearly nonsingular equilibrated sample also
    /// counts.
    pub fn numeric_rank(&self, rows: &[usize], cols: &[usize]) -> Result<usize> {
        let tol = self.tester.cfg.tolerance;
        let mut best = (f64::NEG_INFINITY, 0);
        let mut plain = 0;
        for m in self.samples()? {
            let o = Margined::new(tol);
            let sub = m.select(rows, cols);
            let r = sub.rank(&o)?;
            if (o.margin(), r) > best {
                best = (o.margin(), r);
            }
            plain = plain.max(sub.equilibrated_rank(tol, tol.sqrt()));
        }
        Ok(best.1.max(plain))
    }

    /// Sample indices ordered from least to most ambiguous for `D[rows, cols]`.
    pub fn samples_by_margin(&self, rows: &[usize], cols: &[usize]) -> Result<Vec<usize>> {
        let mut scored = Vec::new();
        for (k, m) in self.samples()?.iter().enumerate() {
            let o = Margined::new(self.tester.cfg.tolerance);
            m.select(rows, cols).rank(&o)?;
            scored.push((o.margin(), k));
        }
        scored.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
        Ok(scored.into_iter().map(|(_, k)| k).collect())
    }

    pub fn symbolic_rank(&self, rows: &[usize], cols: &[usize]) -> Result<usize> {
        let key = (rows.to_vec(), cols.to_vec());
        if let Some(r) = self.ranks.lock().expect("rank cache").get(&key) {
            return Ok(*r);
        }
        let r = self.entries.select(rows, cols).rank(&self.tester)?;
        self.ranks.lock().expect("rank cache").insert(key, r);
        Ok(r)
    }

    pub fn structural_rank(&self) -> Result<usize> {
        let rows: Vec<usize> = (0..self.entries.nrows()).collect();
        let cols: Vec<usize> = (0..self.entries.ncols()).collect();
        self.rank_of(&rows, &cols)
    }

    /// `D` evaluated at a point.
    pub fn at_point(&self, point: &Point) -> Result<Matrix<f64>> {
        let params = self.system.param_values();
        let b = PointBindings::new(point, params);
        self.entries.try_map(|e| e.eval::<f64>(&b))
    }

    /// `D` at a point, with rounding magnitudes attached.
    pub fn at_point_tracked(&self, point: &Point) -> Result<Matrix<Tracked>> {
        let params = self.system.param_values();
        let b = PointBindings::new(point, params);
        self.entries.try_map(|e| e.eval_tracked(&b))
    }

    /// Full-rank test at a point; `None` when the point lacks coordinates.
    pub fn nonsingular_at(&self, point: &Point) -> Result<Option<bool>> {
        match self.at_point_tracked(point) {
            Ok(m) => {
                let tol = self.tester.cfg.tolerance;
                let full = m.rank(&self.relative())?.max(m.equilibrated_rank(tol, tol.sqrt()));
                Ok(Some(full == self.size()))
            }
            Err(Error::Unbound(_)) | Err(Error::Undefined(_)) => Ok(None),
            Err(e) => Err(e),
        }
    }

    pub fn determinant_at(&self, point: &Point) -> Result<f64> {
        self.at_point(point)?.determinant(&crate::matrix::Exact)
    }
}

pub fn term_rank_of(pattern: &[Vec<bool>]) -> usize {
    let nrows = pattern.len();
    let ncols = pattern.first().map_or(0, Vec::len);
    max_matching(nrows, ncols, &|i, j| pattern[i][j]).iter().flatten().count()
}

/// F1, F3, F2-candidate or OK, in that order of precedence.
pub fn classify_failure(dual: &DualSolution, jac: Option<&SystemJacobian>, point: Option<&Point>) -> Result<Verdict> {
    let Some(jac) = jac.filter(|_| dual.delta_hat.is_some()) else { return Ok(Verdict::F1) };
    if jac.structural_rank()? < jac.size() {
        return Ok(Verdict::F3);
    }
    if let Some(pt) = point {
        if jac.nonsingular_at(pt)? == Some(false) {
            return Ok(Verdict::F2Candidate);
        }
    }
    Ok(Verdict::Ok)
}
