//! One line per acceptance criterion; exits nonzero when any fails.

mod common;

use std::process::ExitCode;
use std::time::Instant;

use common::*;
use daerelax::benchmarks::LC_FAILURE;
use daerelax::jacobian::{system_jacobian, Verdict};
use daerelax::relax::{relax, verify_equivalence, FinalStatus, Method, ModificationReport, PivotOverride, RelaxationOptions, Step};
use daerelax::report::analyze;
use daerelax::zero_test::ZeroTestConfig;
use daerelax::Expr;

type Check = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        if $cond {
        } else {
            return Err(format!($($msg)+));
        }
    };
}

fn run(name: &str, m: Method, ov: Option<PivotOverride>) -> Result<ModificationReport, String> {
    let mut o = RelaxationOptions::with_method(m);
    o.pivot_override = ov;
    relax(&instance(name), &o).map_err(|e| e.to_string())
}

fn failure_kind(rep: &ModificationReport) -> Option<&str> {
    match &rep.final_status {
        FinalStatus::MethodFailure { kind, .. } => Some(kind),
        _ => None,
    }
}

fn strictly_decreasing(rep: &ModificationReport) -> bool {
    let mut last = rep.initial_delta;
    rep.iterations.iter().all(|it| {
        let next = it.step.delta_after();
        let ok = match (last, next) {
            (Some(a), Some(b)) => b < a,
            (Some(_), None) => true,
            _ => false,
        };
        last = next;
        ok
    })
}

fn intro() -> Check {
    let t = Instant::now();
    let doc = analyze(&instance("intro"), &ZeroTestConfig::default()).map_err(|e| e.to_string())?;
    ensure!(doc.structure.p == [0, 0, 0] && doc.structure.q == [1, 1, 1], "offsets {:?} {:?}", doc.structure.p, doc.structure.q);
    let d = doc.jacobian.ok_or("no Jacobian")?;
    let want = [["1", "1", "0"], ["1", "1", "0"], ["0", "0", "1"]];
    ensure!(d.entries.iter().zip(want).all(|(r, w)| r.iter().eq(w.iter())), "D = {:?}", d.entries);
    ensure!(doc.failure_class == Verdict::F3, "class {}", doc.failure_class);
    let mut traces = Vec::new();
    for m in [Method::Substitution, Method::Augmentation] {
        let rep = run("intro", m, None)?;
        ensure!(rep.final_status == FinalStatus::Ok, "{:?}: {:?}", m, rep.final_status);
        ensure!(rep.initial_delta == Some(3) && strictly_decreasing(&rep), "{:?}: δ̂ trace", m);
        let trace: Vec<String> = std::iter::once(rep.initial_delta)
            .chain(rep.iterations.iter().map(|it| it.step.delta_after()))
            .map(|d| d.map_or("-inf".into(), |d| d.to_string()))
            .collect();
        traces.push(format!("{:?} {}", m, trace.join("->")));
    }
    let dt = t.elapsed().as_secs_f64();
    ensure!(dt < 1.0, "took {:.2}s", dt);
    Ok(format!("p=0, q=1, F3; {}; {:.3}s", traces.join(", "), dt))
}

fn lc_failure() -> Check {
    let t = Instant::now();
    let sub = run("lcfail", Method::Substitution, None)?;
    let first = sub.iterations.first().ok_or("no iteration")?;
    ensure!(first.dual.p == [0, 0] && first.dual.q == [1, 1], "offsets");
    ensure!(first.step.pivot().one_based() == (2, vec![1], vec![1]), "pivot {:?}", first.step.pivot().one_based());
    let want = Expr::var("x1", 0) + Expr::var("x2", 0) - Expr::int(3) * Expr::time().sin() - Expr::int(2);
    let d = max_rel_discrepancy(sub.final_system.equation(1), &want, &Default::default(), None, 1.0, 20, 7);
    ensure!(d < 1e-12, "rewritten row differs by {:e}", d);
    let lc = run("lcfail", Method::Lc, None)?;
    ensure!(failure_kind(&lc) == Some("LCConditionError"), "LC gave {:?}", lc.final_status);
    let aug = run("lcfail", Method::Augmentation, None)?;
    ensure!(aug.final_system.size() == 3, "augmented size {}", aug.final_system.size());
    ensure!(aug.final_dual.p == [0, 1, 1] && aug.final_dual.q == [1, 1, 1], "augmented offsets");
    let fix = LC_FAILURE.fixture().map_err(|e| e.to_string())?.ok_or("no fixture")?;
    let mut worst: f64 = 0.0;
    for rep in [&sub, &aug] {
        let steps: Vec<_> = rep.augmentations().collect();
        let eq = verify_equivalence(&instance("lcfail"), &rep.final_system, &fix, &steps).map_err(|e| e.to_string())?;
        ensure!(eq.passed && eq.after_max <= 1e-8, "residual {:e}", eq.after_max);
        worst = worst.max(eq.after_max);
    }
    let dt = t.elapsed().as_secs_f64();
    ensure!(dt < 1.0, "took {:.2}s", dt);
    Ok(format!("LC rejected, augmented 3x3, max residual {:.1e}; {:.3}s", worst, dt))
}

fn transistor() -> Check {
    let t = Instant::now();
    let want = [(1, vec![2], vec![1]), (4, vec![5], vec![4]), (7, vec![8], vec![7])];
    let mut reps = Vec::new();
    for m in [Method::Substitution, Method::Lc, Method::Augmentation] {
        let rep = run("transistor", m, None)?;
        ensure!(rep.final_status == FinalStatus::Ok, "{:?}: {:?}", m, rep.final_status);
        let got: Vec<_> = rep.pivots().iter().map(|p| p.one_based()).collect();
        ensure!(got == want, "{:?} pivots {:?}", m, got);
        reps.push(rep);
    }
    let (sub, lc, aug) = (&reps[0], &reps[1], &reps[2]);
    let hand = transistor_rewrite();
    let sys = &sub.final_system;
    let base = sys.base_point().cloned();
    for i in [0, 3, 6] {
        let d = max_rel_discrepancy(sys.equation(i), hand.equation(i), sys.param_values(), base.as_ref(), 0.02, 20, i as u64);
        ensure!(d < 1e-9, "row {} differs from the hand rewrite by {:e}", i + 1, d);
    }
    for i in 0..8 {
        let d = max_rel_discrepancy(
            sys.equation(i),
            lc.final_system.equation(i),
            sys.param_values(),
            base.as_ref(),
            0.02,
            20,
            100 + i as u64,
        );
        ensure!(d < 1e-8, "LC row {} differs by {:e}", i + 1, d);
    }
    ensure!(aug.final_system.size() == 11, "augmented size {}", aug.final_system.size());
    let targets: Vec<String> = aug
        .iterations
        .iter()
        .filter_map(|it| match &it.step {
            Step::Augmentation(a) => Some(a.aux.iter().map(|(_, k)| k.to_string()).collect::<Vec<_>>()),
            _ => None,
        })
        .flatten()
        .collect();
    ensure!(targets == ["x1'", "x4'", "x7'"], "aux targets {:?}", targets);
    let mut dets = Vec::new();
    for rep in [sub, aug] {
        let det = rep.final_determinant.ok_or("no determinant")?;
        ensure!(det != 0.0 && det.is_finite(), "det {}", det);
        let jac = system_jacobian(&rep.final_system, &rep.final_dual, &Default::default()).map_err(|e| e.to_string())?;
        let rows = eval_rows(&jac.entries, rep.final_system.base_point().ok_or("no base point")?, rep.final_system.param_values());
        ensure!(svd_rank(&rows, 1e-12) == rep.final_system.size(), "SVD rank deficient");
        dets.push(format!("{:.3e}", det));
    }
    let dt = t.elapsed().as_secs_f64();
    ensure!(dt < 5.0, "took {:.2}s", dt);
    Ok(format!("3 iterations, 11 equations after augmentation, det {}; {:.3}s", dets.join(" / "), dt))
}

fn ring_modulator() -> Check {
    let t = Instant::now();
    let bad = run("ring_modulator", Method::Substitution, Some(ring_bad()))?;
    ensure!(failure_kind(&bad) == Some("NonlinearTargetsError"), "bad selection gave {:?}", bad.final_status);
    let good = run("ring_modulator", Method::Substitution, Some(ring_good()))?;
    let first = good.iterations.first().ok_or("good selection made no step")?;
    ensure!(matches!(first.step, Step::Substitution(_)), "good selection did not substitute");
    let mut sizes = Vec::new();
    for ov in [ring_bad(), ring_good()] {
        let rep = run("ring_modulator", Method::Augmentation, Some(ov))?;
        let n = rep.final_system.size();
        ensure!(rep.final_status == FinalStatus::Ok && rep.final_structural_rank == Some(n), "{:?}", rep.final_status);
        sizes.push(n);
    }
    let dt = t.elapsed().as_secs_f64();
    ensure!(dt < 30.0, "took {:.2}s", dt);
    Ok(format!("bad selection rejected, good solved, augmented sizes {:?} full rank; {:.3}s", sizes, dt))
}

fn properties() -> Check {
    let t = Instant::now();
    let mut failed = Vec::new();
    for (name, suite) in props::SUITES {
        if let Err(e) = suite() {
            failed.push(format!("{}: {}", name, e.lines().next().unwrap_or("")));
        }
    }
    let dt = t.elapsed().as_secs_f64();
    ensure!(failed.is_empty(), "{}", failed.join("; "));
    ensure!(dt < 60.0, "took {:.1}s", dt);
    Ok(format!("{} suites x {} cases; {:.2}s", props::SUITES.len(), props::CASES, dt))
}

fn main() -> ExitCode {
    let checks: [(&str, fn() -> Check); 5] = [
        ("intro example", intro),
        ("LC failure example", lc_failure),
        ("transistor amplifier", transistor),
        ("ring modulator", ring_modulator),
        ("property suites", properties),
    ];
    let mut ok = true;
    for (name, check) in checks {
        match std::panic::catch_unwind(check) {
            Ok(Ok(msg)) => println!("PASS  {:<22} {}", name, msg),
            Ok(Err(msg)) => {
                ok = false;
                println!("FAIL  {:<22} {}", name, msg);
            }
            Err(_) => {
                ok = false;
                println!("FAIL  {:<22} panicked", name);
            }
        }
    }
    println!("SKIP  {:<22} numerical integration is outside this crate", "integration results");
    if ok {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
