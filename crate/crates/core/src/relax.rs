//! The relaxation loop: dual, structural test, modification, repeat.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::assignment::{signature, solve_assignment, DualSolution, SignatureMatrix};
use crate::augmentation::{augment_step, recover_aux_trajectory, AugmentationStep};
use crate::dae::{DaeSystem, TrajectoryFixture};
use crate::error::{Error, Result};
use crate::expr::{Symbol, VarKey};
use crate::jacobian::{classify_failure, system_jacobian, SystemJacobian, Verdict};
use crate::pivot::{find_pivot, pivot_candidates, repivot_at_point, validate_pivot, PivotChoice};
use crate::point::Point;
use crate::substitution::{lc_step, substitute_step, SubstitutionStep};
use crate::zero_test::ZeroTestConfig;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Substitution,
    Augmentation,
    Lc,
    Auto,
}

impl std::str::FromStr for Method {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "sub" | "substitution" => Ok(Method::Substitution),
            "aug" | "augmentation" => Ok(Method::Augmentation),
            "lc" => Ok(Method::Lc),
            "auto" => Ok(Method::Auto),
            _ => Err(format!("unknown method `{}`", s)),
        }
    }
}

/// Manual choice for the first iteration; indices are zero-based.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct PivotOverride {
    pub p: Option<Vec<i64>>,
    pub q: Option<Vec<i64>>,
    pub r: Option<usize>,
    pub rows: Vec<usize>,
    pub cols: Vec<usize>,
}

#[derive(Clone, Debug)]
pub struct RelaxationOptions {
    pub method: Method,
    /// Defaults to `δ̂ + 1`.
    pub max_iterations: Option<usize>,
    pub zero_test: ZeroTestConfig,
    /// Replaces the system's own base point when set.
    pub base_point: Option<Point>,
    pub dynamic_pivoting: bool,
    pub pivot_override: Option<PivotOverride>,
    pub xi: BTreeMap<VarKey, f64>,
}

impl Default for RelaxationOptions {
    fn default() -> Self {
        RelaxationOptions {
            method: Method::Auto,
            max_iterations: None,
            zero_test: ZeroTestConfig::default(),
            base_point: None,
            dynamic_pivoting: false,
            pivot_override: None,
            xi: BTreeMap::new(),
        }
    }
}

impl RelaxationOptions {
    pub fn with_method(method: Method) -> Self {
        RelaxationOptions { method, ..Default::default() }
    }
}

#[derive(Clone, Debug, Serialize)]
#[serde(tag = "method", rename_all = "lowercase")]
pub enum Step {
    Substitution(SubstitutionStep),
    Augmentation(AugmentationStep),
    Lc(SubstitutionStep),
}

impl Step {
    pub fn new_system(&self) -> &DaeSystem {
        match self {
            Step::Substitution(s) | Step::Lc(s) => &s.new_system,
            Step::Augmentation(a) => &a.new_system,
        }
    }

    pub fn pivot(&self) -> &PivotChoice {
        match self {
            Step::Substitution(s) | Step::Lc(s) => &s.pivot,
            Step::Augmentation(a) => &a.pivot,
        }
    }

    pub fn delta_after(&self) -> Option<i64> {
        match self {
            Step::Substitution(s) | Step::Lc(s) => s.delta_after,
            Step::Augmentation(a) => a.delta_after,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct Iteration {
    pub signature: SignatureMatrix,
    pub dual: DualSolution,
    pub verdict: Verdict,
    pub step: Step,
    /// Unknowns of the system this iteration started from.
    #[serde(skip)]
    pub columns: Vec<Symbol>,
    /// Why `auto` abandoned substitution, if it did.
    pub fallback: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "status")]
pub enum FinalStatus {
    #[serde(rename = "OK")]
    Ok,
    F1,
    #[serde(rename = "F2-candidate")]
    F2Candidate,
    MethodFailure { kind: String, message: String },
}

impl FinalStatus {
    fn failure(e: &Error) -> Self {
        FinalStatus::MethodFailure { kind: e.kind().to_string(), message: e.to_string() }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct ModificationReport {
    pub iterations: Vec<Iteration>,
    #[serde(skip)]
    pub final_system: DaeSystem,
    pub final_signature: SignatureMatrix,
    pub final_dual: DualSolution,
    pub final_status: FinalStatus,
    pub final_structural_rank: Option<usize>,
    /// `det D` at the base point of the final system, when computable.
    pub final_determinant: Option<f64>,
    pub initial_delta: Option<i64>,
    #[serde(skip)]
    pub method_error: Option<Error>,
}

impl ModificationReport {
    pub fn augmentations(&self) -> impl Iterator<Item = &AugmentationStep> {
        self.iterations.iter().filter_map(|it| match &it.step {
            Step::Augmentation(a) => Some(a),
            _ => None,
        })
    }

    pub fn pivots(&self) -> Vec<&PivotChoice> {
        self.iterations.iter().map(|it| it.step.pivot()).collect()
    }
}

fn apply(
    method: Method,
    jac: &SystemJacobian,
    pivot: &PivotChoice,
    opts: &RelaxationOptions,
    iteration: usize,
    manual: bool,
) -> Result<(Step, Option<String>)> {
    let cfg = &opts.zero_test;
    let sub = |c: &PivotChoice| substitute_step(jac, c, cfg).map(Step::Substitution);
    let aug = |c: &PivotChoice| augment_step(jac, c, &opts.xi, iteration, cfg).map(Step::Augmentation);
    let lc = |c: &PivotChoice| lc_step(jac, c, cfg).map(Step::Lc);
    let solving = |e: &Error| matches!(e, Error::NonlinearTargets(_) | Error::SingularAtConstruction(_));
    let xi = |e: &Error| matches!(e, Error::XiSingular(_));
    match method {
        Method::Substitution => retry_pivots(jac, pivot, manual, solving, sub),
        Method::Lc => retry_pivots(jac, pivot, manual, |e| matches!(e, Error::LcCondition(_)), lc),
        Method::Augmentation => retry_pivots(jac, pivot, manual, xi, aug),
        Method::Auto => match retry_pivots(jac, pivot, manual, solving, sub) {
            Err(e) if solving(&e) => {
                let (step, note) = retry_pivots(jac, pivot, manual, xi, aug)?;
                let msg = match note {
                    Some(n) => format!("{}: {}; {}", e.kind(), e, n),
                    None => format!("{}: {}", e.kind(), e),
                };
                Ok((step, Some(msg)))
            }
            r => r,
        },
    }
}

/// Runs `step` at `pivot`; when it fails with an error accepted by
/// `retry` and the pivot was not given by hand, tries the other candidates,
/// with columns re-chosen at the base point when there is one.
fn retry_pivots(
    jac: &SystemJacobian,
    pivot: &PivotChoice,
    manual: bool,
    retry: impl Fn(&Error) -> bool,
    step: impl Fn(&PivotChoice) -> Result<Step>,
) -> Result<(Step, Option<String>)> {
    let first = match step(pivot) {
        Err(e) if !manual && retry(&e) => e,
        r => return r.map(|s| (s, None)),
    };
    let mut tried = vec![pivot.clone()];
    for cand in pivot_candidates(jac)? {
        for c in [Some(cand.clone()), jac.system.base_point().map(|p| repivot_at_point(jac, &cand, p)).transpose()?]
            .into_iter()
            .flatten()
        {
            if tried.contains(&c) {
                continue;
            }
            tried.push(c.clone());
            if let Ok(s) = step(&c) {
                let (r, i, j) = c.one_based();
                let note = format!("{}: {}; re-pivoted to r={}, I={:?}, J={:?}", first.kind(), first, r, i, j);
                return Ok((s, Some(note)));
            }
        }
    }
    Err(first)
}

/// Runs the loop until the system Jacobian is nonsingular, the assignment
/// problem is infeasible, or the chosen method fails.
pub fn relax(sys: &DaeSystem, opts: &RelaxationOptions) -> Result<ModificationReport> {
    sys.require_square()?;
    let cfg = &opts.zero_test;
    let mut sys = match &opts.base_point {
        Some(p) => sys.clone().with_base_point(Some(p.clone())),
        None => sys.clone(),
    };
    let mut iterations: Vec<Iteration> = Vec::new();
    let mut initial_delta = None;
    let mut budget = opts.max_iterations;

    loop {
        let sig = signature(&sys, cfg)?;
        let first = iterations.is_empty();
        let ov = opts.pivot_override.as_ref().filter(|_| first);
        let dual = match ov.filter(|o| o.p.is_some() || o.q.is_some()) {
            Some(o) => {
                let auto = solve_assignment(&sig);
                let p = o.p.clone().unwrap_or(auto.p);
                let q = o.q.clone().unwrap_or(auto.q);
                DualSolution::manual(p, q, &sig)?
            }
            None => solve_assignment(&sig),
        };
        if first {
            initial_delta = dual.delta_hat;
            if budget.is_none() {
                budget = Some(dual.delta_hat.map_or(1, |d| d.max(0) as usize + 1));
            }
        }
        let done = |status, rank, det, sig, dual, err| ModificationReport {
            iterations: Vec::new(),
            final_system: DaeSystem::clone(&sys),
            final_signature: sig,
            final_dual: dual,
            final_status: status,
            final_structural_rank: rank,
            final_determinant: det,
            initial_delta,
            method_error: err,
        };

        if dual.delta_hat.is_none() {
            let mut rep = done(FinalStatus::F1, None, None, sig, dual, None);
            rep.iterations = iterations;
            return Ok(rep);
        }
        let jac = system_jacobian(&sys, &dual, cfg)?;
        let verdict = classify_failure(&dual, Some(&jac), sys.base_point())?;
        if verdict != Verdict::F3 {
            let rank = Some(jac.structural_rank()?);
            let det = sys.base_point().and_then(|p| jac.determinant_at(p).ok());
            let status = if verdict == Verdict::Ok { FinalStatus::Ok } else { FinalStatus::F2Candidate };
            let mut rep = done(status, rank, det, sig, dual, None);
            rep.iterations = iterations;
            return Ok(rep);
        }
        if iterations.len() >= budget.unwrap_or(usize::MAX) {
            return Err(Error::IterationBudgetExceeded(iterations.len()));
        }

        let pivot = match ov.and_then(|o| o.r.map(|r| (r, o))) {
            Some((r, o)) => Ok(validate_pivot(&jac, r, &o.rows, &o.cols)?),
            None => find_pivot(&jac).and_then(|base| match (opts.dynamic_pivoting, sys.base_point()) {
                (true, Some(p)) => repivot_at_point(&jac, &base, p),
                _ => Ok(base),
            }),
        };

        let outcome = pivot.and_then(|pivot| {
            apply(opts.method, &jac, &pivot, opts, iterations.len() + 1, ov.and_then(|o| o.r).is_some())
        });
        match outcome {
            Ok((step, fallback)) => {
                let columns = sys.unknowns();
                sys = step.new_system().clone();
                iterations.push(Iteration { signature: sig, dual, verdict, step, columns, fallback });
            }
            Err(e) => {
                let rank = Some(jac.structural_rank()?);
                let mut rep = done(FinalStatus::failure(&e), rank, None, sig, dual, Some(e));
                rep.iterations = iterations;
                return Ok(rep);
            }
        }
    }
}

/// Largest residual magnitudes of two systems along one fixture.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EquivalenceReport {
    pub before_max: f64,
    pub after_max: f64,
    pub threshold: f64,
    pub passed: bool,
}

/// Residual check of `after` against `before`; auxiliary unknowns of
/// `after` are recovered through `steps` when given, numerically otherwise.
pub fn verify_equivalence(
    before: &DaeSystem,
    after: &DaeSystem,
    fix: &TrajectoryFixture,
    steps: &[&AugmentationStep],
) -> Result<EquivalenceReport> {
    let before_max = before.residuals_mixed(fix)?.max_abs();
    let mut ext = fix.clone();
    for s in steps {
        ext = recover_aux_trajectory(s, &ext)?;
    }
    let missing: Vec<_> = after
        .aux()
        .iter()
        .filter(|a| !ext.closed_form.contains_key(*a) && !ext.tabulated.contains_key(*a))
        .cloned()
        .collect();
    if !missing.is_empty() {
        let eqs: Vec<_> = after
            .equations()
            .iter()
            .filter(|e| e.var_keys().iter().any(|k| missing.contains(&k.name)))
            .cloned()
            .collect();
        let init: Vec<f64> = missing
            .iter()
            .map(|a| after.base_point().and_then(|p| p.get_parts(a, 0)).unwrap_or(1.0))
            .collect();
        let cols = crate::augmentation::newton_over_grid(&eqs, &missing, &ext, after.param_values(), &init)?;
        for (a, c) in missing.into_iter().zip(cols) {
            ext.tabulated.insert(a, c);
        }
    }
    let after_max = after.residuals_mixed(&ext)?.max_abs();
    let threshold = 1e-8;
    Ok(EquivalenceReport { before_max, after_max, threshold, passed: before_max <= threshold && after_max <= threshold })
}
