//! JSON rendering of analysis and modification results.

use serde::ser::{SerializeMap, SerializeSeq};
use serde::Serializer;

use crate::expr::{Expr, Style, Substitution, VarKey};

pub fn ser_expr<S: Serializer>(e: &Expr, s: S) -> Result<S::Ok, S::Error> {
    s.serialize_str(&e.to_text(Style::Canonical))
}

pub fn ser_exprs<S: Serializer>(es: &[Expr], s: S) -> Result<S::Ok, S::Error> {
    let mut seq = s.serialize_seq(Some(es.len()))?;
    for e in es {
        seq.serialize_element(&e.to_text(Style::Canonical))?;
    }
    seq.end()
}

pub fn ser_keys<S: Serializer>(ks: &[VarKey], s: S) -> Result<S::Ok, S::Error> {
    let mut seq = s.serialize_seq(Some(ks.len()))?;
    for k in ks {
        seq.serialize_element(&k.to_string())?;
    }
    seq.end()
}

pub fn ser_subst<S: Serializer>(m: &Substitution, s: S) -> Result<S::Ok, S::Error> {
    let mut map = s.serialize_map(Some(m.len()))?;
    for (k, v) in m {
        map.serialize_entry(&k.to_string(), &v.to_text(Style::Canonical))?;
    }
    map.end()
}

use serde::Serialize as SerializeDerive;
use std::collections::BTreeMap;

use crate::assignment::{signature, solve_assignment, DualSolution, SignatureMatrix};
use crate::dae::DaeSystem;
use crate::error::Result;
use crate::format::serialize_dae;
use crate::jacobian::{classify_failure, system_jacobian, Verdict};
use crate::pivot::PivotChoice;
use crate::relax::{EquivalenceReport, FinalStatus, ModificationReport, Step};
use crate::zero_test::ZeroTestConfig;

/// Bumped whenever a field changes meaning or disappears.
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, SerializeDerive)]
pub struct PivotDoc {
    pub r: usize,
    #[serde(rename = "I")]
    pub rows: Vec<usize>,
    #[serde(rename = "J")]
    pub cols: Vec<usize>,
    pub kappa: i64,
}

impl From<&PivotChoice> for PivotDoc {
    fn from(c: &PivotChoice) -> Self {
        let (r, rows, cols) = c.one_based();
        PivotDoc { r, rows, cols, kappa: c.kappa }
    }
}

#[derive(Clone, Debug, PartialEq, SerializeDerive)]
pub struct StructureDoc {
    /// Rows of `σ(F_i, x_j)`; `null` is −∞.
    pub signature: Vec<Vec<Option<u32>>>,
    pub columns: Vec<String>,
    pub p: Vec<i64>,
    pub q: Vec<i64>,
    pub delta_hat: Option<i64>,
}

impl StructureDoc {
    fn new(sys: &DaeSystem, sig: &SignatureMatrix, dual: &DualSolution) -> Self {
        StructureDoc {
            signature: sig.entries.clone(),
            columns: sys.unknowns().iter().map(|s| s.to_string()).collect(),
            p: dual.p.clone(),
            q: dual.q.clone(),
            delta_hat: dual.delta_hat,
        }
    }
}

#[derive(Clone, Debug, PartialEq, SerializeDerive)]
pub struct JacobianDoc {
    pub entries: Vec<Vec<String>>,
    pub pattern: Vec<Vec<bool>>,
    pub term_rank: usize,
    pub structural_rank: usize,
    pub determinant_at_base_point: Option<f64>,
}

/// Output of `analyze`.
#[derive(Clone, Debug, PartialEq, SerializeDerive)]
pub struct AnalysisDoc {
    pub schema_version: u32,
    pub size: usize,
    pub structure: StructureDoc,
    pub jacobian: Option<JacobianDoc>,
    pub failure_class: Verdict,
}

pub fn analyze(sys: &DaeSystem, cfg: &ZeroTestConfig) -> Result<AnalysisDoc> {
    sys.require_square()?;
    let sig = signature(sys, cfg)?;
    let dual = solve_assignment(&sig);
    let structure = StructureDoc::new(sys, &sig, &dual);
    if dual.delta_hat.is_none() {
        let failure_class = classify_failure(&dual, None, None)?;
        return Ok(AnalysisDoc { schema_version: SCHEMA_VERSION, size: sys.size(), structure, jacobian: None, failure_class });
    }
    let jac = system_jacobian(sys, &dual, cfg)?;
    let n = jac.size();
    let doc = JacobianDoc {
        entries: (0..n).map(|i| (0..n).map(|j| jac.entries.get(i, j).to_text(Style::Canonical)).collect()).collect(),
        pattern: jac.pattern.clone(),
        term_rank: jac.term_rank(),
        structural_rank: jac.structural_rank()?,
        determinant_at_base_point: sys.base_point().and_then(|p| jac.determinant_at(p).ok()),
    };
    let failure_class = classify_failure(&dual, Some(&jac), sys.base_point())?;
    Ok(AnalysisDoc { schema_version: SCHEMA_VERSION, size: n, structure, jacobian: Some(doc), failure_class })
}

#[derive(Clone, Debug, PartialEq, SerializeDerive)]
pub struct IterationDoc {
    pub index: usize,
    pub method: &'static str,
    pub structure: StructureDoc,
    pub verdict: Verdict,
    pub pivot: PivotDoc,
    pub targets: Vec<String>,
    pub delta_before: i64,
    pub delta_after: Option<i64>,
    pub new_equation: String,
    /// Solved targets (substitution only).
    pub explicit_map: BTreeMap<String, String>,
    /// Cokernel weights on `I` (linear combination only).
    pub weights: Vec<String>,
    /// Frozen constants (augmentation only).
    pub xi: BTreeMap<String, f64>,
    pub xi_defaulted: Vec<String>,
    /// Fresh unknown to the coordinate it stands for (augmentation only).
    pub aux: BTreeMap<String, String>,
    pub copies: Vec<String>,
    pub fallback: Option<String>,
}

#[derive(Clone, Debug, PartialEq, SerializeDerive)]
pub struct FinalDoc {
    #[serde(flatten)]
    pub status: FinalStatus,
    pub size: usize,
    pub structure: StructureDoc,
    pub structural_rank: Option<usize>,
    pub determinant_at_base_point: Option<f64>,
    pub aux: Vec<String>,
    pub system: String,
}

#[derive(Clone, Debug, PartialEq, SerializeDerive)]
pub struct SettingsDoc {
    pub method: String,
    pub seed: u64,
    pub samples: usize,
    pub tolerance: f64,
}

/// Output of `modify`.
#[derive(Clone, Debug, PartialEq, SerializeDerive)]
pub struct ReportFile {
    pub schema_version: u32,
    pub settings: SettingsDoc,
    pub initial_delta_hat: Option<i64>,
    pub delta_hat_trace: Vec<Option<i64>>,
    pub iterations: Vec<IterationDoc>,
    #[serde(rename = "final")]
    pub final_: FinalDoc,
    pub residual_check: Option<EquivalenceReport>,
}

fn texts(es: &[crate::expr::Expr]) -> Vec<String> {
    es.iter().map(|e| e.to_text(Style::Canonical)).collect()
}

impl ReportFile {
    pub fn new(rep: &ModificationReport, method: &str, cfg: &ZeroTestConfig) -> Self {
        let mut iterations = Vec::new();
        let mut trace = vec![rep.initial_delta];
        for (k, it) in rep.iterations.iter().enumerate() {
            let columns = it.columns.iter().map(|u| u.to_string()).collect();
            let structure = StructureDoc {
                signature: it.signature.entries.clone(),
                columns,
                p: it.dual.p.clone(),
                q: it.dual.q.clone(),
                delta_hat: it.dual.delta_hat,
            };
            let mut doc = IterationDoc {
                index: k + 1,
                method: "",
                structure,
                verdict: it.verdict,
                pivot: it.step.pivot().into(),
                targets: Vec::new(),
                delta_before: 0,
                delta_after: it.step.delta_after(),
                new_equation: String::new(),
                explicit_map: BTreeMap::new(),
                weights: Vec::new(),
                xi: BTreeMap::new(),
                xi_defaulted: Vec::new(),
                aux: BTreeMap::new(),
                copies: Vec::new(),
                fallback: it.fallback.clone(),
            };
            match &it.step {
                Step::Substitution(s) | Step::Lc(s) => {
                    doc.method = if matches!(it.step, Step::Lc(_)) { "lc" } else { "substitution" };
                    doc.targets = s.targets.iter().map(|t| t.to_string()).collect();
                    doc.delta_before = s.delta_before;
                    doc.new_equation = s.new_fr.to_text(Style::Canonical);
                    doc.explicit_map =
                        s.explicit_map.iter().map(|(k, v)| (k.to_string(), v.to_text(Style::Canonical))).collect();
                    doc.weights = texts(&s.weights);
                }
                Step::Augmentation(a) => {
                    doc.method = "augmentation";
                    doc.targets = a.aux.iter().map(|(_, k)| k.to_string()).collect();
                    doc.delta_before = a.delta_before;
                    doc.new_equation = a.new_fr.to_text(Style::Canonical);
                    doc.xi = a.xi.iter().map(|(k, v)| (k.to_string(), *v)).collect();
                    doc.xi_defaulted = a.xi_defaulted.iter().map(|k| k.to_string()).collect();
                    doc.aux = a.aux.iter().map(|(y, k)| (y.to_string(), k.to_string())).collect();
                    doc.copies = texts(&a.copies);
                }
            }
            trace.push(doc.delta_after);
            iterations.push(doc);
        }
        let sys = &rep.final_system;
        let final_ = FinalDoc {
            status: rep.final_status.clone(),
            size: sys.size(),
            structure: StructureDoc::new(sys, &rep.final_signature, &rep.final_dual),
            structural_rank: rep.final_structural_rank,
            determinant_at_base_point: rep.final_determinant,
            aux: sys.aux().iter().map(|s| s.to_string()).collect(),
            system: serialize_dae(sys),
        };
        ReportFile {
            schema_version: SCHEMA_VERSION,
            settings: SettingsDoc {
                method: method.to_string(),
                seed: cfg.seed,
                samples: cfg.samples,
                tolerance: cfg.tolerance,
            },
            initial_delta_hat: rep.initial_delta,
            delta_hat_trace: trace,
            iterations,
            final_,
            residual_check: None,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report documents always serialize")
    }
}
