use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use mteq::geometry::KroneckerMetric;
use mteq::precond::PrecondSpec;
use mteq::problems::{PrecondRecipe, ProblemInstance};
use mteq::rnlcg::{rnlcg_solve, InitialGuess, RnlcgOptions};
use mteq::rram::{rram_solve, RramOptions};
use mteq::trace::{ResKind, SolveTrace, Status};
use mteq::trunc_cg::{truncated_cg_solve, AmbientPrecond, TruncCgOptions};

use crate::config::{MetricChoice, PrecondChoice, RunConfig, SolverKind};
use crate::Failure;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub status: Status,
    pub iters: usize,
    /// Last exactly computed relative residual in the trace.
    pub final_res: Option<f64>,
    pub final_rank: usize,
    pub wall_s: f64,
    pub seed: u64,
    pub config: RunConfig,
}

pub struct RunOutput {
    pub trace: SolveTrace,
    pub summary: Summary,
}

fn recipe<'a>(inst: &'a ProblemInstance, which: &str) -> Result<&'a PrecondRecipe, Failure> {
    inst.recipe(which)
        .ok_or_else(|| Failure::Config(format!("instance `{}` offers no {} preconditioner", inst.family, which.to_uppercase())))
}

/// Metric and tangent preconditioner for the Riemannian solvers.
fn geometry(inst: &ProblemInstance, cfg: &RunConfig) -> Result<(Arc<KroneckerMetric>, PrecondSpec), Failure> {
    let (m, n) = (inst.rows(), inst.cols());
    let label = cfg.precond.as_str();
    Ok(match cfg.precond {
        PrecondChoice::Identity => (KroneckerMetric::identity(m, n), PrecondSpec::Identity),
        PrecondChoice::Tangadi => recipe(inst, "p2")?.tangadi(m, n, cfg.shifts, cfg.steps)?,
        PrecondChoice::P1 | PrecondChoice::P2 => {
            let r = recipe(inst, label)?;
            match (cfg.metric, r) {
                (MetricChoice::Auto, _) | (_, PrecondRecipe::Sylvester { .. }) => r.exact(m, n)?,
                (MetricChoice::Standard, PrecondRecipe::Kron { e, d }) => {
                    (KroneckerMetric::identity(m, n), PrecondSpec::kron(e, d)?)
                }
                (MetricChoice::Standard, PrecondRecipe::GenSylvester { .. }) => {
                    return Err(Failure::Config(format!(
                        "{} is a generalized Sylvester preconditioner and needs its weighted metric; use metric `auto`",
                        label.to_uppercase()
                    )))
                }
            }
        }
    })
}

fn ambient(inst: &ProblemInstance, cfg: &RunConfig) -> Result<AmbientPrecond, Failure> {
    let (m, n) = (inst.rows(), inst.cols());
    Ok(match cfg.precond {
        PrecondChoice::Identity => AmbientPrecond::Identity,
        PrecondChoice::P1 | PrecondChoice::P2 => {
            AmbientPrecond::from_recipe(recipe(inst, cfg.precond.as_str())?, m, n, cfg.shifts, cfg.steps)?
        }
        PrecondChoice::Tangadi => return Err(Failure::Config("tangadi is not available for trunc_cg".into())),
    })
}

/// Runs a resolved config on an instance.
pub fn run(inst: &ProblemInstance, cfg: &RunConfig) -> Result<RunOutput, Failure> {
    let max_iter = cfg.max_iter.unwrap_or(1000);
    let t0 = Instant::now();
    let (trace, status, rank) = match cfg.solver {
        SolverKind::Rnlcg | SolverKind::Rram => {
            let (metric, precond) = geometry(inst, cfg)?;
            let mut inner = RnlcgOptions::new(cfg.rank);
            inner.tol = cfg.tol;
            inner.max_iter = max_iter;
            inner.metric = Some(metric);
            inner.precond = precond;
            inner.init = InitialGuess::Random { seed: cfg.seed };
            let out = if cfg.solver == SolverKind::Rnlcg {
                rnlcg_solve(&inst.op, &inst.rhs, &inner)?
            } else {
                let mut o = RramOptions::new(cfg.r0, cfg.r_up);
                inner.rank = cfg.r0;
                o.inner = inner;
                o.tol = cfg.tol;
                o.max_iter = max_iter;
                o.max_rank = cfg.rank_cap;
                o.seed = cfg.seed;
                rram_solve(&inst.op, &inst.rhs, &o)?
            };
            let rank = out.x.rank();
            (out.trace, out.status, rank)
        }
        SolverKind::TruncCg => {
            let pre = ambient(inst, cfg)?;
            let mut o = TruncCgOptions::new(cfg.tol);
            o.max_iter = max_iter;
            if let Some(cap) = cfg.rank_cap {
                o.policy = o.policy.with_cap(cap);
            }
            let out = truncated_cg_solve(&inst.op, &inst.rhs, &pre, &o)?;
            let rank = out.rank();
            (out.trace, out.status, rank)
        }
    };
    let wall_s = t0.elapsed().as_secs_f64();
    let last = trace.rows.last().ok_or_else(|| Failure::Numerical("solver produced an empty trace".into()))?;
    let final_res = trace.rows.iter().rev().find(|r| r.res_kind == ResKind::Exact).and_then(|r| r.res_rel);
    let summary = Summary { status, iters: last.iter, final_res, final_rank: rank, wall_s, seed: cfg.seed, config: cfg.clone() };
    Ok(RunOutput { trace, summary })
}

pub fn write_outputs(dir: &Path, out: &RunOutput) -> Result<(), Failure> {
    fs::create_dir_all(dir)?;
    out.trace.write_csv(BufWriter::new(File::create(dir.join("trace.csv"))?))?;
    fs::write(dir.join("summary.json"), serde_json::to_vec_pretty(&out.summary).map_err(|e| Failure::Io(e.to_string()))?)?;
    Ok(())
}

/// A config with the directory its outputs go to.
pub struct Job {
    pub config: RunConfig,
    pub dir: PathBuf,
}

/// Builds, solves and writes one job. Non-convergence is reported as a
/// failure after the outputs are written.
pub fn run_job(job: &Job) -> Result<Summary, Failure> {
    let inst = job.config.problem.build()?;
    log::info!(
        "{}: {} with {} on {} ({}x{}, {} terms)",
        job.dir.display(),
        job.config.solver.as_str(),
        job.config.precond.as_str(),
        inst.family,
        inst.rows(),
        inst.cols(),
        inst.op.terms()
    );
    let out = run(&inst, &job.config)?;
    write_outputs(&job.dir, &out)?;
    let s = out.summary;
    if s.status != Status::Converged {
        return Err(Failure::NotConverged(format!(
            "{}: {} after {} iterations, residual {}",
            job.dir.display(),
            s.status,
            s.iters,
            s.final_res.map_or("n/a".into(), |r| format!("{r:.3e}"))
        )));
    }
    Ok(s)
}

/// Runs jobs on up to `jobs` threads; results come back in input order.
pub fn run_all(list: &[Job], jobs: usize) -> Vec<Result<Summary, Failure>> {
    let next = AtomicUsize::new(0);
    let mut results: Vec<Option<Result<Summary, Failure>>> = (0..list.len()).map(|_| None).collect();
    std::thread::scope(|s| {
        let workers: Vec<_> = (0..jobs.clamp(1, list.len().max(1)))
            .map(|_| {
                s.spawn(|| {
                    let mut done = Vec::new();
                    loop {
                        let i = next.fetch_add(1, Ordering::Relaxed);
                        if i >= list.len() {
                            break done;
                        }
                        done.push((i, run_job(&list[i])));
                    }
                })
            })
            .collect();
        for w in workers {
            for (i, r) in w.join().expect("solver thread panicked") {
                results[i] = Some(r);
            }
        }
    });
    results.into_iter().map(|r| r.expect("every job ran")).collect()
}
