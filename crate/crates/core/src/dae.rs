//! The DAE container and trajectory fixtures.

use std::collections::{BTreeMap, BTreeSet};

use num_traits::ToPrimitive;

use crate::error::{Error, Result};
use crate::expr::{Expr, PointBindings, Rational, Symbol};
use crate::matrix::Matrix;
use crate::point::Point;
use crate::zero_test::{ZeroTestConfig, ZeroTester};

/// Equations `F_i = 0` over declared variables, plus auxiliary unknowns
/// introduced by augmentation. Columns are `variables` followed by `aux`.
#[derive(Clone, Debug, PartialEq)]
pub struct DaeSystem {
    equations: Vec<Expr>,
    variables: Vec<Symbol>,
    aux: Vec<Symbol>,
    params: BTreeMap<Symbol, Rational>,
    param_values: BTreeMap<Symbol, f64>,
    base_point: Option<Point>,
}

impl DaeSystem {
    /// Checks that every symbol used is declared exactly once.
    pub fn new(
        equations: Vec<Expr>,
        variables: Vec<Symbol>,
        params: BTreeMap<Symbol, Rational>,
    ) -> Result<Self> {
        let param_values = params.iter().map(|(k, v)| (k.clone(), v.to_f64().unwrap_or(f64::NAN))).collect();
        let sys = DaeSystem { equations, variables, aux: Vec::new(), params, param_values, base_point: None };
        sys.validate()?;
        Ok(sys)
    }

    pub fn with_aux(mut self, aux: Vec<Symbol>) -> Result<Self> {
        self.aux = aux;
        self.validate()?;
        Ok(self)
    }

    pub fn with_base_point(mut self, point: Option<Point>) -> Self {
        self.base_point = point;
        self
    }

    /// Same declarations, new equations.
    pub fn with_equations(&self, equations: Vec<Expr>) -> Result<Self> {
        let mut s = self.clone();
        s.equations = equations;
        s.validate()?;
        Ok(s)
    }

    fn validate(&self) -> Result<()> {
        let mut seen = BTreeSet::new();
        for s in self.variables.iter().chain(&self.aux).chain(self.params.keys()) {
            if !seen.insert(s.clone()) {
                return Err(Error::UnknownSymbol(format!("`{}` declared twice", s)));
            }
        }
        for e in &self.equations {
            for k in e.var_keys() {
                if !self.variables.contains(&k.name) && !self.aux.contains(&k.name) {
                    return Err(Error::UnknownSymbol(k.name.to_string()));
                }
            }
            for p in e.params() {
                if !self.params.contains_key(&p) {
                    return Err(Error::UnknownSymbol(p.to_string()));
                }
            }
        }
        Ok(())
    }

    pub fn equations(&self) -> &[Expr] {
        &self.equations
    }

    pub fn equation(&self, i: usize) -> &Expr {
        &self.equations[i]
    }

    pub fn variables(&self) -> &[Symbol] {
        &self.variables
    }

    pub fn aux(&self) -> &[Symbol] {
        &self.aux
    }

    /// Column symbols: declared variables, then auxiliary ones.
    pub fn unknowns(&self) -> Vec<Symbol> {
        self.variables.iter().chain(&self.aux).cloned().collect()
    }

    pub fn is_aux(&self, s: &Symbol) -> bool {
        self.aux.contains(s)
    }

    pub fn params(&self) -> &BTreeMap<Symbol, Rational> {
        &self.params
    }

    pub fn param_values(&self) -> &BTreeMap<Symbol, f64> {
        &self.param_values
    }

    pub fn base_point(&self) -> Option<&Point> {
        self.base_point.as_ref()
    }

    pub fn size(&self) -> usize {
        self.equations.len()
    }

    /// Largest derivative order occurring anywhere.
    pub fn order(&self) -> u32 {
        self.equations.iter().filter_map(Expr::max_order).max().unwrap_or(0)
    }

    pub fn is_square(&self) -> bool {
        self.equations.len() == self.variables.len() + self.aux.len()
    }

    pub fn require_square(&self) -> Result<()> {
        if self.is_square() {
            Ok(())
        } else {
            Err(Error::NonSquare { equations: self.equations.len(), unknowns: self.variables.len() + self.aux.len() })
        }
    }

    /// Equations at the given indices, in index order.
    pub fn subsystem(&self, rows: &BTreeSet<usize>) -> Result<Vec<Expr>> {
        rows.iter()
            .map(|&i| {
                self.equations
                    .get(i)
                    .cloned()
                    .ok_or(Error::IndexOutOfRange { index: i, len: self.equations.len() })
            })
            .collect()
    }

    /// Zero tester bound to this system's parameters and base point.
    pub fn tester(&self, cfg: &ZeroTestConfig) -> ZeroTester {
        ZeroTester::new(cfg.clone(), self.param_values.clone(), self.base_point.clone())
    }

    /// `F` evaluated along a fixture: one row per grid point, one column per equation.
    pub fn residuals(&self, fix: &TrajectoryFixture) -> Result<Matrix<f64>> {
        let mut rows = Vec::with_capacity(fix.grid.len());
        let maps: Vec<_> = self.equations.iter().map(|e| fix.plug_into(e)).collect::<Result<_>>()?;
        for &t in &fix.grid {
            let p = Point::new(t);
            let b = PointBindings::new(&p, &self.param_values);
            rows.push(maps.iter().map(|e| e.eval::<f64>(&b)).collect::<Result<Vec<_>>>()?);
        }
        Ok(Matrix::from_rows(rows).resize_cols(self.equations.len()))
    }
}

/// Closed-form solution candidates and the grid they are checked on.
#[derive(Clone, Debug, PartialEq)]
pub struct TrajectoryFixture {
    pub closed_form: BTreeMap<Symbol, Expr>,
    /// Per-grid-point values for unknowns without a closed form.
    pub tabulated: BTreeMap<Symbol, Vec<f64>>,
    pub grid: Vec<f64>,
}

impl TrajectoryFixture {
    pub fn new(closed_form: BTreeMap<Symbol, Expr>, grid: Vec<f64>) -> Self {
        TrajectoryFixture { closed_form, tabulated: BTreeMap::new(), grid }
    }

    /// `a, a+h, …` up to `b` inclusive, tolerant of rounding at the end.
    pub fn uniform_grid(a: f64, h: f64, b: f64) -> Vec<f64> {
        assert!(h > 0.0, "grid step must be positive");
        let n = ((b - a) / h + 1e-9).floor() as usize;
        (0..=n).map(|k| a + k as f64 * h).collect()
    }

    /// Replaces every variable coordinate in `e` by the matching derivative
    /// of its closed form. Tabulated unknowns are rejected here.
    pub fn plug_into(&self, e: &Expr) -> Result<Expr> {
        let mut map = crate::expr::Substitution::new();
        for k in e.var_keys() {
            let f = self
                .closed_form
                .get(&k.name)
                .ok_or_else(|| Error::MissingClosedForm(k.name.to_string()))?;
            map.insert(k.clone(), f.total_derivative(k.order));
        }
        Ok(e.substitute(&map))
    }

    /// Value of unknown `name` differentiated `order` times at grid index `g`.
    pub fn value(&self, name: &Symbol, order: u32, g: usize, params: &BTreeMap<Symbol, f64>) -> Result<f64> {
        if let Some(f) = self.closed_form.get(name) {
            let p = Point::new(self.grid[g]);
            return f.total_derivative(order).eval::<f64>(&PointBindings::new(&p, params));
        }
        match self.tabulated.get(name) {
            Some(v) if order == 0 => Ok(v[g]),
            _ => Err(Error::MissingClosedForm(crate::expr::VarKey::new(name.clone(), order).to_string())),
        }
    }

    /// Point at grid index `g` holding every coordinate `e` needs.
    pub fn point_for(&self, e: &Expr, g: usize, params: &BTreeMap<Symbol, f64>) -> Result<Point> {
        let mut p = Point::new(self.grid[g]);
        for k in e.var_keys() {
            let v = self.value(&k.name, k.order, g, params)?;
            p.set(k, v);
        }
        Ok(p)
    }
}

impl DaeSystem {
    /// Residuals where some unknowns may be tabulated rather than closed-form.
    pub fn residuals_mixed(&self, fix: &TrajectoryFixture) -> Result<Matrix<f64>> {
        let mut rows = Vec::with_capacity(fix.grid.len());
        for g in 0..fix.grid.len() {
            let mut row = Vec::with_capacity(self.equations.len());
            for e in &self.equations {
                let p = fix.point_for(e, g, &self.param_values)?;
                row.push(e.eval::<f64>(&PointBindings::new(&p, &self.param_values))?);
            }
            rows.push(row);
        }
        Ok(Matrix::from_rows(rows).resize_cols(self.equations.len()))
    }
}

impl Matrix<f64> {
    /// Keeps the column count when there are no rows.
    fn resize_cols(self, ncols: usize) -> Self {
        if self.nrows() == 0 {
            Matrix::filled(0, ncols, 0.0)
        } else {
            self
        }
    }

    pub fn max_abs(&self) -> f64 {
        (0..self.nrows()).flat_map(|i| self.row(i).iter().map(|v| v.abs())).fold(0.0, f64::max)
    }
}
