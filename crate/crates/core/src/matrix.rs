//! Dense matrices and elimination over any field-like scalar, with the
//! decision "is this entry zero?" delegated to a [`ZeroOracle`].

use std::cell::Cell;
use std::fmt;
use std::ops::{Add, Div, Mul, Neg, Sub};

use num_traits::{Float, One, Zero};

use crate::error::Result;
use crate::expr::{Expr, Rational, Tracked};
use crate::zero_test::ZeroTester;

/// Arithmetic needed by elimination.
pub trait Scalar:
    Clone
    + Zero
    + One
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
{
}

impl<T> Scalar for T where
    T: Clone
        + Zero
        + One
        + Add<Output = T>
        + Sub<Output = T>
        + Mul<Output = T>
        + Div<Output = T>
        + Neg<Output = T>
{
}

/// Decides zeroness and pivot preference for a scalar type.
pub trait ZeroOracle<F> {
    fn is_zero(&self, v: &F) -> Result<bool>;
    /// Higher is preferred; only consulted for entries that are not zero.
    fn pivot_score(&self, v: &F) -> (u8, f64);
    fn normalize(&self, v: F) -> F {
        v
    }
}

/// Zero means bitwise zero.
#[derive(Clone, Copy, Debug, Default)]
pub struct Exact;

macro_rules! exact_float {
    ($($t:ty),*) => {$(
        impl ZeroOracle<$t> for Exact {
            fn is_zero(&self, v: &$t) -> Result<bool> {
                Ok(*v == 0.0)
            }
            fn pivot_score(&self, v: &$t) -> (u8, f64) {
                (1, v.abs() as f64)
            }
        }
    )*};
}

exact_float!(f32, f64);

impl ZeroOracle<Rational> for Exact {
    fn is_zero(&self, v: &Rational) -> Result<bool> {
        Ok(v.is_zero())
    }
    fn pivot_score(&self, _: &Rational) -> (u8, f64) {
        (1, 0.0)
    }
}

/// Zero means `|v| <= tol`.
#[derive(Clone, Copy, Debug)]
pub struct AbsTol<T>(pub T);

impl<T: Float> ZeroOracle<T> for AbsTol<T> {
    fn is_zero(&self, v: &T) -> Result<bool> {
        Ok(v.abs() <= self.0)
    }
    fn pivot_score(&self, v: &T) -> (u8, f64) {
        (1, v.abs().to_f64().unwrap_or(0.0))
    }
}

/// Zero means negligible against the tracked rounding magnitude.
#[derive(Clone, Copy, Debug)]
pub struct Relative(pub f64);

impl ZeroOracle<Tracked> for Relative {
    fn is_zero(&self, v: &Tracked) -> Result<bool> {
        Ok(v.negligible(self.0))
    }
    fn pivot_score(&self, v: &Tracked) -> (u8, f64) {
        let confident = v.certainty() > 1e-3;
        (confident as u8, v.value.abs())
    }
    fn normalize(&self, v: Tracked) -> Tracked {
        if v.negligible(self.0) {
            Tracked::zero()
        } else {
            v
        }
    }
}

/// [`Relative`] that also records how close its closest call came to the
/// threshold, in decades.
pub struct Margined {
    pub tol: f64,
    worst: Cell<f64>,
}

impl Margined {
    pub fn new(tol: f64) -> Self {
        Margined { tol, worst: Cell::new(f64::INFINITY) }
    }

    pub fn margin(&self) -> f64 {
        self.worst.get()
    }

    fn note(&self, v: &Tracked) {
        if v.value != 0.0 && v.scale > 0.0 {
            let m = (v.value.abs() / (self.tol * v.scale)).log10().abs();
            self.worst.set(self.worst.get().min(m));
        }
    }
}

impl ZeroOracle<Tracked> for Margined {
    fn is_zero(&self, v: &Tracked) -> Result<bool> {
        self.note(v);
        Ok(v.negligible(self.tol))
    }
    fn pivot_score(&self, v: &Tracked) -> (u8, f64) {
        Relative(self.tol).pivot_score(v)
    }
    fn normalize(&self, v: Tracked) -> Tracked {
        self.note(&v);
        Relative(self.tol).normalize(v)
    }
}

impl ZeroOracle<Expr> for ZeroTester {
    fn is_zero(&self, v: &Expr) -> Result<bool> {
        ZeroTester::is_zero(self, v)
    }
    fn pivot_score(&self, v: &Expr) -> (u8, f64) {
        (1, -(v.node_count() as f64))
    }
    fn normalize(&self, v: Expr) -> Expr {
        v.simplify()
    }
}

#[derive(Clone, PartialEq)]
pub struct Matrix<F> {
    nrows: usize,
    ncols: usize,
    data: Vec<F>,
}

impl<F: fmt::Debug> fmt::Debug for Matrix<F> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let rows: Vec<&[F]> = (0..self.nrows).map(|i| &self.data[i * self.ncols..(i + 1) * self.ncols]).collect();
        f.debug_list().entries(rows).finish()
    }
}

/// Result of scanning rows greedily in order.
#[derive(Clone, Debug)]
pub struct RowScan<F> {
    /// Rows kept, in scan order.
    pub independent: Vec<usize>,
    /// Each rejected row with weights `w` over all rows such that
    /// `Σ w_k row_k = 0` and `w` is one at the rejected row.
    pub dependent: Vec<(usize, Vec<F>)>,
}

impl<F: Clone> Matrix<F> {
    pub fn from_fn(nrows: usize, ncols: usize, mut f: impl FnMut(usize, usize) -> F) -> Self {
        let mut data = Vec::with_capacity(nrows * ncols);
        for i in 0..nrows {
            for j in 0..ncols {
                data.push(f(i, j));
            }
        }
        Matrix { nrows, ncols, data }
    }

    pub fn filled(nrows: usize, ncols: usize, v: F) -> Self {
        Matrix { nrows, ncols, data: vec![v; nrows * ncols] }
    }

    /// # Panics
    /// When rows have different lengths.
    pub fn from_rows(rows: Vec<Vec<F>>) -> Self {
        let nrows = rows.len();
        let ncols = rows.first().map_or(0, Vec::len);
        assert!(rows.iter().all(|r| r.len() == ncols), "ragged rows");
        Matrix { nrows, ncols, data: rows.into_iter().flatten().collect() }
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn get(&self, i: usize, j: usize) -> &F {
        &self.data[i * self.ncols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: F) {
        self.data[i * self.ncols + j] = v;
    }

    pub fn row(&self, i: usize) -> &[F] {
        &self.data[i * self.ncols..(i + 1) * self.ncols]
    }

    pub fn to_rows(&self) -> Vec<Vec<F>> {
        (0..self.nrows).map(|i| self.row(i).to_vec()).collect()
    }

    pub fn select(&self, rows: &[usize], cols: &[usize]) -> Self {
        Matrix::from_fn(rows.len(), cols.len(), |i, j| self.get(rows[i], cols[j]).clone())
    }

    pub fn transpose(&self) -> Self {
        Matrix::from_fn(self.ncols, self.nrows, |i, j| self.get(j, i).clone())
    }

    pub fn map<G: Clone>(&self, f: impl FnMut(&F) -> G) -> Matrix<G> {
        Matrix { nrows: self.nrows, ncols: self.ncols, data: self.data.iter().map(f).collect() }
    }

    pub fn try_map<G: Clone, E>(&self, f: impl FnMut(&F) -> Result<G, E>) -> Result<Matrix<G>, E> {
        let data = self.data.iter().map(f).collect::<Result<Vec<_>, E>>()?;
        Ok(Matrix { nrows: self.nrows, ncols: self.ncols, data })
    }

    fn swap_rows(&mut self, a: usize, b: usize) {
        if a != b {
            for j in 0..self.ncols {
                self.data.swap(a * self.ncols + j, b * self.ncols + j);
            }
        }
    }
}

fn best_pivot<F, O: ZeroOracle<F>>(
    o: &O,
    cands: impl Iterator<Item = (usize, F)>,
) -> Result<Option<usize>> {
    let mut best: Option<(usize, (u8, f64))> = None;
    for (i, v) in cands {
        if o.is_zero(&v)? {
            continue;
        }
        let s = o.pivot_score(&v);
        if best.as_ref().is_none_or(|(_, b)| s.0 > b.0 || (s.0 == b.0 && s.1 > b.1)) {
            best = Some((i, s));
        }
    }
    Ok(best.map(|b| b.0))
}

impl<F: Scalar> Matrix<F> {
    pub fn identity(n: usize) -> Self {
        Matrix::from_fn(n, n, |i, j| if i == j { F::one() } else { F::zero() })
    }

    pub fn mul(&self, o: &Matrix<F>) -> Matrix<F> {
        assert_eq!(self.ncols, o.nrows, "dimension mismatch");
        Matrix::from_fn(self.nrows, o.ncols, |i, j| {
            (0..self.ncols).fold(F::zero(), |acc, k| acc + self.get(i, k).clone() * o.get(k, j).clone())
        })
    }

    /// Row-echelon reduction; returns pivot positions and the row-swap sign.
    fn echelon(&mut self, o: &impl ZeroOracle<F>) -> Result<(Vec<(usize, usize)>, bool)> {
        let mut pivots = Vec::new();
        let mut odd = false;
        let mut r = 0;
        for c in 0..self.ncols {
            if r == self.nrows {
                break;
            }
            let Some(p) = best_pivot(o, (r..self.nrows).map(|i| (i, self.get(i, c).clone())))? else {
                continue;
            };
            if p != r {
                self.swap_rows(p, r);
                odd = !odd;
            }
            let piv = self.get(r, c).clone();
            for i in r + 1..self.nrows {
                let f = self.get(i, c).clone() / piv.clone();
                self.set(i, c, F::zero());
                for j in c + 1..self.ncols {
                    let v = self.get(i, j).clone() - f.clone() * self.get(r, j).clone();
                    self.set(i, j, o.normalize(v));
                }
            }
            pivots.push((r, c));
            r += 1;
        }
        Ok((pivots, odd))
    }

    pub fn rank(&self, o: &impl ZeroOracle<F>) -> Result<usize> {
        Ok(self.clone().echelon(o)?.0.len())
    }

    /// # Panics
    /// When the matrix is not square.
    pub fn determinant(&self, o: &impl ZeroOracle<F>) -> Result<F> {
        assert_eq!(self.nrows, self.ncols, "determinant of a non-square matrix");
        let mut m = self.clone();
        let (pivots, odd) = m.echelon(o)?;
        if pivots.len() < self.nrows {
            return Ok(F::zero());
        }
        let mut d = (0..self.nrows).fold(F::one(), |acc, i| acc * m.get(i, i).clone());
        if odd {
            d = -d;
        }
        Ok(o.normalize(d))
    }

    /// Solves `self · X = rhs` by Gauss–Jordan; `None` when singular.
    ///
    /// # Panics
    /// When the matrix is not square or `rhs` has the wrong height.
    pub fn solve(&self, rhs: &Matrix<F>, o: &impl ZeroOracle<F>) -> Result<Option<Matrix<F>>> {
        let n = self.nrows;
        assert_eq!(n, self.ncols, "solve needs a square matrix");
        assert_eq!(n, rhs.nrows, "right-hand side height mismatch");
        let k = rhs.ncols;
        let mut aug = Matrix::from_fn(n, n + k, |i, j| {
            if j < n {
                self.get(i, j).clone()
            } else {
                rhs.get(i, j - n).clone()
            }
        });
        for c in 0..n {
            let Some(p) = best_pivot(o, (c..n).map(|i| (i, aug.get(i, c).clone())))? else {
                return Ok(None);
            };
            aug.swap_rows(p, c);
            let piv = aug.get(c, c).clone();
            for j in c..n + k {
                let v = aug.get(c, j).clone() / piv.clone();
                aug.set(c, j, o.normalize(v));
            }
            aug.set(c, c, F::one());
            for i in 0..n {
                if i == c {
                    continue;
                }
                let f = aug.get(i, c).clone();
                if o.is_zero(&f)? {
                    aug.set(i, c, F::zero());
                    continue;
                }
                for j in c..n + k {
                    let v = aug.get(i, j).clone() - f.clone() * aug.get(c, j).clone();
                    aug.set(i, j, o.normalize(v));
                }
                aug.set(i, c, F::zero());
            }
        }
        Ok(Some(Matrix::from_fn(n, k, |i, j| aug.get(i, n + j).clone())))
    }

    /// Keeps each row that is independent of the rows kept before it.
    pub fn scan_rows(&self, o: &impl ZeroOracle<F>) -> Result<RowScan<F>> {
        struct Kept<F> {
            reduced: Vec<F>,
            weights: Vec<F>,
            pivot: usize,
        }
        let mut kept: Vec<Kept<F>> = Vec::new();
        let mut scan = RowScan { independent: Vec::new(), dependent: Vec::new() };
        for i in 0..self.nrows {
            let mut v = self.row(i).to_vec();
            let mut w = vec![F::zero(); self.nrows];
            w[i] = F::one();
            for b in &kept {
                let f = v[b.pivot].clone() / b.reduced[b.pivot].clone();
                if o.is_zero(&f)? {
                    continue;
                }
                for j in 0..self.ncols {
                    v[j] = o.normalize(v[j].clone() - f.clone() * b.reduced[j].clone());
                }
                v[b.pivot] = F::zero();
                for k in 0..self.nrows {
                    w[k] = o.normalize(w[k].clone() - f.clone() * b.weights[k].clone());
                }
            }
            match best_pivot(o, v.iter().cloned().enumerate())? {
                Some(p) => {
                    scan.independent.push(i);
                    kept.push(Kept { reduced: v, weights: w, pivot: p });
                }
                None => scan.dependent.push((i, w)),
            }
        }
        Ok(scan)
    }

    /// Greedy column basis in column order.
    pub fn scan_cols(&self, o: &impl ZeroOracle<F>) -> Result<Vec<usize>> {
        Ok(self.transpose().scan_rows(o)?.independent)
    }
}

impl Matrix<Tracked> {
    /// Rank of the values after zeroing negligible entries, by complete
    /// pivoting on the row- and column-equilibrated matrix; pivots at or
    /// below `rel` count as zero.
    pub fn equilibrated_rank(&self, tol: f64, rel: f64) -> usize {
        let (n, m) = (self.nrows, self.ncols);
        let mut a: Vec<Vec<f64>> = (0..n)
            .map(|i| self.row(i).iter().map(|t| if t.negligible(tol) { 0.0 } else { t.value }).collect())
            .collect();
        for row in a.iter_mut() {
            let s = row.iter().fold(0.0, |acc: f64, v| acc.max(v.abs()));
            if s > 0.0 {
                row.iter_mut().for_each(|v| *v /= s);
            }
        }
        for j in 0..m {
            let s = a.iter().fold(0.0, |acc: f64, row| acc.max(row[j].abs()));
            if s > 0.0 {
                a.iter_mut().for_each(|row| row[j] /= s);
            }
        }
        let mut rank = 0;
        while rank < n.min(m) {
            let mut best = (0.0, rank, rank);
            for (i, row) in a.iter().enumerate().skip(rank) {
                for (j, v) in row.iter().enumerate().skip(rank) {
                    if v.abs() > best.0 {
                        best = (v.abs(), i, j);
                    }
                }
            }
            if best.0 <= rel {
                break;
            }
            a.swap(rank, best.1);
            for row in a.iter_mut() {
                row.swap(rank, best.2);
            }
            for i in rank + 1..n {
                let f = a[i][rank] / a[rank][rank];
                for j in rank..m {
                    a[i][j] -= f * a[rank][j];
                }
            }
            rank += 1;
        }
        rank
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(rows: &[&[f64]]) -> Matrix<f64> {
        Matrix::from_rows(rows.iter().map(|r| r.to_vec()).collect())
    }

    #[test]
    fn equilibrated_rank_ignores_inflated_scales() {
        let t = |v: f64, s: f64| Tracked { value: v, scale: s };
        // Values are clearly independent although their bounds are huge.
        let a = Matrix::from_rows(vec![vec![t(1.0, 1e12), t(2.0, 1.0)], vec![t(3.0, 1.0), t(-1.0, 1e12)]]);
        assert_eq!(a.equilibrated_rank(1e-10, 1e-5), 2);
        let b = Matrix::from_rows(vec![vec![t(1.0, 1.0), t(2.0, 2.0)], vec![t(1e-4, 1.0), t(2e-4, 2.0)]]);
        assert_eq!(b.equilibrated_rank(1e-10, 1e-5), 1);
        let c = Matrix::from_rows(vec![vec![t(1e-20, 1.0), t(0.0, 0.0)], vec![t(0.0, 0.0), t(5.0, 5.0)]]);
        assert_eq!(c.equilibrated_rank(1e-10, 1e-5), 1);
    }

    #[test]
    fn rank_and_determinant() {
        let a = m(&[&[1.0, 2.0], &[2.0, 4.0]]);
        assert_eq!(a.rank(&AbsTol(1e-12)).unwrap(), 1);
        let b = m(&[&[0.0, 2.0], &[3.0, 1.0]]);
        assert_eq!(b.determinant(&Exact).unwrap(), -6.0);
        let f: Matrix<f32> = b.map(|v| *v as f32);
        assert_eq!(f.determinant(&Exact).unwrap(), -6.0);
    }

    #[test]
    fn solve_small_system() {
        let a = m(&[&[2.0, 1.0], &[1.0, 3.0]]);
        let rhs = m(&[&[3.0], &[5.0]]);
        let x = a.solve(&rhs, &AbsTol(1e-12)).unwrap().unwrap();
        assert!((x.get(0, 0) - 0.8).abs() < 1e-12 && (x.get(1, 0) - 1.4).abs() < 1e-12);
        assert!(m(&[&[1.0, 1.0], &[1.0, 1.0]]).solve(&rhs, &AbsTol(1e-12)).unwrap().is_none());
    }

    #[test]
    fn row_scan_reports_combination() {
        let a = m(&[&[1.0, 0.0, 1.0], &[0.0, 1.0, 1.0], &[1.0, 1.0, 2.0], &[0.0, 0.0, 1.0]]);
        let s = a.scan_rows(&AbsTol(1e-12)).unwrap();
        assert_eq!(s.independent, vec![0, 1, 3]);
        let (i, w) = &s.dependent[0];
        assert_eq!(*i, 2);
        assert_eq!(w, &vec![-1.0, -1.0, 1.0, 0.0]);
        assert_eq!(a.scan_cols(&AbsTol(1e-12)).unwrap(), vec![0, 1, 2]);
    }

    #[test]
    fn exact_rationals() {
        let r = |n: i64| Rational::from_integer(n.into());
        let a = Matrix::from_rows(vec![vec![r(1), r(2)], vec![r(3), r(4)]]);
        assert_eq!(a.determinant(&Exact).unwrap(), r(-2));
    }

    #[test]
    fn symbolic_solve() {
        let t = ZeroTester::plain(Default::default());
        let x = Expr::var("x", 0);
        let a = Matrix::from_rows(vec![vec![x.clone(), Expr::one()], vec![Expr::zero(), Expr::int(2)]]);
        let rhs = Matrix::from_rows(vec![vec![Expr::one()], vec![Expr::int(4)]]);
        let sol = a.solve(&rhs, &t).unwrap().unwrap();
        let check = (&x * sol.get(0, 0) + sol.get(1, 0).clone() - Expr::one()).simplify();
        assert!(t.is_zero(&check).unwrap());
        assert_eq!(*sol.get(1, 0), Expr::int(2));
    }

    #[test]
    fn tracked_cancellation_counts_as_zero() {
        let big = Tracked::exact(1e30);
        let one = Tracked::exact(1.0);
        let a = Matrix::from_rows(vec![vec![big, one], vec![big, one]]);
        assert_eq!(a.rank(&Relative(1e-10)).unwrap(), 1);
    }
}
