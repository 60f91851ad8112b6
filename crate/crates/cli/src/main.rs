//! Command-line front end: `analyze`, `modify`, `check` and `bench`.

mod args;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};

use daerelax::benchmarks::SUITE;
use daerelax::dae::{DaeSystem, TrajectoryFixture};
use daerelax::format::{parse_dae, parse_fixture, serialize_dae};
use daerelax::relax::{relax, verify_equivalence, FinalStatus, Method, RelaxationOptions};
use daerelax::report::{analyze, ReportFile};
use daerelax::zero_test::ZeroTestConfig;

const EXIT_OK: u8 = 0;
const EXIT_USAGE: u8 = 1;
const EXIT_F1: u8 = 2;
const EXIT_METHOD: u8 = 3;
const EXIT_F2: u8 = 4;

#[derive(Parser, Debug)]
#[command(name = "daerelax", version, about = "Structural analysis and repair of nonlinear DAEs")]
struct Cli {
    #[command(subcommand)]
    cmd: Command,
}

#[derive(clap::Args, Debug, Clone)]
struct ZeroArgs {
    /// Seed of the sampling generator.
    #[arg(long)]
    seed: Option<u64>,
    /// Sample points per zero test.
    #[arg(long)]
    samples: Option<usize>,
    /// Relative tolerance of the zero test.
    #[arg(long = "tol-zero")]
    tol_zero: Option<f64>,
}

impl ZeroArgs {
    fn config(&self) -> Result<ZeroTestConfig> {
        let mut cfg = ZeroTestConfig::default();
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(n) = self.samples {
            anyhow::ensure!(n >= 1, "--samples must be at least 1");
            cfg.samples = n;
        }
        if let Some(t) = self.tol_zero {
            anyhow::ensure!(t > 0.0 && t.is_finite(), "--tol-zero must be positive");
            cfg.tolerance = t;
        }
        Ok(cfg)
    }
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Signature matrix, offsets, system Jacobian and failure class.
    Analyze {
        file: PathBuf,
        #[command(flatten)]
        zero: ZeroArgs,
        /// Writes the analysis as JSON.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Runs the relaxation loop and writes the modified system.
    Modify {
        file: PathBuf,
        #[arg(long, default_value = "auto")]
        method: Method,
        /// One-based `r=5,I={3,4,6},J={3,4,5}` with optional `p={..}`, `q={..}`.
        #[arg(long)]
        pivot: Option<String>,
        /// Frozen constants such as `x3'=0.5,der(x4,1)=1`.
        #[arg(long)]
        xi: Option<String>,
        #[command(flatten)]
        zero: ZeroArgs,
        #[arg(long)]
        max_iterations: Option<usize>,
        /// Re-chooses `J` at the base point on every iteration.
        #[arg(long)]
        dynamic_pivoting: bool,
        /// Fixture whose residuals are checked on the result.
        #[arg(long)]
        trajectory: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        emit: Option<PathBuf>,
    },
    /// Compares residuals of two systems along a closed-form trajectory.
    Check {
        file: PathBuf,
        #[arg(long)]
        against: PathBuf,
        #[arg(long)]
        trajectory: PathBuf,
    },
    /// Runs the built-in benchmark instances.
    Bench {
        #[command(flatten)]
        zero: ZeroArgs,
    },
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))
}

fn load(path: &Path) -> Result<DaeSystem> {
    parse_dae(&read(path)?).with_context(|| format!("{}", path.display()))
}

fn load_fixture(path: &Path, sys: &DaeSystem) -> Result<TrajectoryFixture> {
    parse_fixture(&read(path)?, sys.params()).with_context(|| format!("{}", path.display()))
}

fn write(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).with_context(|| format!("cannot write {}", path.display()))
}

fn status_code(s: &FinalStatus) -> u8 {
    match s {
        FinalStatus::Ok => EXIT_OK,
        FinalStatus::F1 => EXIT_F1,
        FinalStatus::F2Candidate => EXIT_F2,
        FinalStatus::MethodFailure { .. } => EXIT_METHOD,
    }
}

fn run(cli: Cli) -> Result<u8> {
    match cli.cmd {
        Command::Analyze { file, zero, out } => {
            let sys = load(&file)?;
            let doc = analyze(&sys, &zero.config()?)?;
            println!("size: {}", doc.size);
            println!("p: {:?}", doc.structure.p);
            println!("q: {:?}", doc.structure.q);
            match doc.structure.delta_hat {
                Some(d) => println!("delta_hat: {}", d),
                None => println!("delta_hat: -inf"),
            }
            if let Some(j) = &doc.jacobian {
                println!("structural rank: {} of {}", j.structural_rank, doc.size);
                for row in &j.entries {
                    println!("  [{}]", row.join(", "));
                }
            }
            println!("failure class: {}", doc.failure_class);
            if let Some(path) = out {
                write(&path, &serde_json::to_string_pretty(&doc)?)?;
            }
            Ok(if doc.failure_class == daerelax::jacobian::Verdict::F1 { EXIT_F1 } else { EXIT_OK })
        }
        Command::Modify {
            file,
            method,
            pivot,
            xi,
            zero,
            max_iterations,
            dynamic_pivoting,
            trajectory,
            out,
            emit,
        } => {
            let sys = load(&file)?;
            let cfg = zero.config()?;
            let mut opts = RelaxationOptions::with_method(method);
            opts.zero_test = cfg.clone();
            opts.max_iterations = max_iterations;
            opts.dynamic_pivoting = dynamic_pivoting;
            opts.pivot_override = pivot.as_deref().map(args::parse_pivot).transpose()?;
            opts.xi = xi.as_deref().map(args::parse_xi).transpose()?.unwrap_or_default();
            let rep = relax(&sys, &opts)?;
            let mut doc = ReportFile::new(&rep, &format!("{:?}", method).to_lowercase(), &cfg);
            if let Some(path) = trajectory {
                let fix = load_fixture(&path, &sys)?;
                let steps: Vec<_> = rep.augmentations().collect();
                doc.residual_check = Some(verify_equivalence(&sys, &rep.final_system, &fix, &steps)?);
            }
            for it in &doc.iterations {
                println!(
                    "iteration {}: {} at r={}, I={:?}, J={:?}; delta_hat {} -> {}",
                    it.index,
                    it.method,
                    it.pivot.r,
                    it.pivot.rows,
                    it.pivot.cols,
                    it.delta_before,
                    it.delta_after.map_or("-inf".to_string(), |d| d.to_string())
                );
                if let Some(f) = &it.fallback {
                    println!("  note: {}", f);
                }
            }
            match &rep.final_status {
                FinalStatus::MethodFailure { kind, message } => println!("status: MethodFailure ({}: {})", kind, message),
                s => println!("status: {}", serde_json::to_value(s)?["status"].as_str().unwrap_or("?")),
            }
            if let Some(rc) = &doc.residual_check {
                println!(
                    "residuals: before {:.3e}, after {:.3e} ({})",
                    rc.before_max,
                    rc.after_max,
                    if rc.passed { "pass" } else { "fail" }
                );
            }
            if let Some(path) = out {
                write(&path, &doc.to_json())?;
            }
            if let Some(path) = emit {
                write(&path, &serialize_dae(&rep.final_system))?;
            }
            let code = status_code(&rep.final_status);
            Ok(if code == EXIT_OK && doc.residual_check.as_ref().is_some_and(|r| !r.passed) { EXIT_METHOD } else { code })
        }
        Command::Check { file, against, trajectory } => {
            let before = load(&file)?;
            let after = load(&against)?;
            let fix = load_fixture(&trajectory, &before)?;
            let rep = verify_equivalence(&before, &after, &fix, &[])?;
            println!("{}", serde_json::to_string_pretty(&rep)?);
            Ok(if rep.passed { EXIT_OK } else { EXIT_METHOD })
        }
        Command::Bench { zero } => {
            let cfg = zero.config()?;
            let rows: Vec<_> = std::thread::scope(|s| {
                let handles: Vec<_> = SUITE
                    .iter()
                    .flat_map(|inst| [Method::Augmentation, Method::Substitution].map(|m| (inst, m)))
                    .map(|(inst, m)| {
                        let cfg = cfg.clone();
                        s.spawn(move || {
                            let t = Instant::now();
                            let mut opts = RelaxationOptions::with_method(m);
                            opts.zero_test = cfg;
                            let rep = inst.system().and_then(|sys| relax(&sys, &opts));
                            (inst.name, m, rep, t.elapsed())
                        })
                    })
                    .collect();
                handles.into_iter().map(|h| h.join().expect("benchmark thread panicked")).collect()
            });
            let mut code = EXIT_OK;
            println!("{:<16} {:<13} {:<28} {:>5} {:>5} {:>10}", "instance", "method", "status", "iters", "size", "time");
            for (name, m, rep, dt) in rows {
                let (status, iters, size) = match &rep {
                    Ok(r) => (
                        match &r.final_status {
                            FinalStatus::MethodFailure { kind, .. } => kind.clone(),
                            s => serde_json::to_value(s)?["status"].as_str().unwrap_or("?").to_string(),
                        },
                        r.iterations.len(),
                        r.final_system.size(),
                    ),
                    Err(e) => (e.kind().to_string(), 0, 0),
                };
                let ok = matches!(&rep, Ok(r) if r.final_status == FinalStatus::Ok);
                if m == Method::Augmentation && !ok {
                    code = EXIT_METHOD;
                }
                let m = format!("{:?}", m).to_lowercase();
                println!("{:<16} {:<13} {:<28} {:>5} {:>5} {:>8.1}ms", name, m, status, iters, size, dt.as_secs_f64() * 1e3);
            }
            Ok(code)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_USAGE } else { EXIT_OK });
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {:#}", e);
            ExitCode::from(EXIT_USAGE)
        }
    }
}
