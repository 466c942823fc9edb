use std::sync::Arc;

use mteq::geometry::{project_dense, FixedRankPoint, KroneckerMetric, TangentVector};
use mteq::numkit::dense::{lu_solve, unvec, vec_of};
use mteq::numkit::Mat;
use mteq::oracle::dense_precond_solve;
use mteq::precond::PrecondSpec;
use mteq::problems::{fd_series_instance, PrecondRecipe};
use mteq::rnlcg::{InitialGuess, RnlcgOptions};
use mteq::rram::{rram_solve, RramOptions};
use mteq::trunc_cg::{truncated_cg_solve, AmbientPrecond, TruncCgOptions, TruncationPolicy};

use crate::Failure;

pub struct Check {
    pub name: String,
    pub value: f64,
    pub bound: f64,
}

impl Check {
    pub fn passed(&self) -> bool {
        self.value <= self.bound
    }
}

fn point(m: usize, n: usize, rank: usize, metric: Arc<KroneckerMetric>, seed: u64) -> mteq::Result<FixedRankPoint> {
    let mut o = RnlcgOptions::new(rank);
    o.metric = Some(metric);
    o.init = InitialGuess::Random { seed };
    o.initial_point(m, n)
}

fn probe(m: usize, n: usize, seed: u64) -> Mat {
    let s = seed as f64;
    Mat::from_fn(m, n, |i, j| ((i * 7 + j * 3) as f64 + 0.37 * s).sin() + 0.1 * (i as f64 - j as f64))
}

fn rel(a: &Mat, b: &Mat) -> f64 {
    (a - b).norm() / b.norm().max(f64::MIN_POSITIVE)
}

fn rel_tangent(x: &FixedRankPoint, a: &TangentVector, b: &TangentVector) -> mteq::Result<f64> {
    Ok(rel(&a.dense(x)?, &b.dense(x)?))
}

/// Structured solve for a recipe with the geometry it is applied in and its
/// dense Kronecker form. Kronecker recipes are checked as standard-metric
/// preconditioners since their exact use as a metric needs no solve.
fn recipe_dense(r: &PrecondRecipe, n: usize) -> Result<(Arc<KroneckerMetric>, PrecondSpec, Mat), Failure> {
    let id = Mat::identity(n, n);
    Ok(match r {
        PrecondRecipe::Kron { e, d } => {
            (KroneckerMetric::identity(n, n), PrecondSpec::kron(e, d)?, d.to_dense().kronecker(&e.to_dense()))
        }
        PrecondRecipe::Sylvester { a, b } => {
            let (metric, spec) = r.exact(n, n)?;
            (metric, spec, id.kronecker(&a.to_dense()) + b.to_dense().kronecker(&id))
        }
        PrecondRecipe::GenSylvester { a, b, d, e } => {
            let (metric, spec) = r.exact(n, n)?;
            (metric, spec, d.to_dense().kronecker(&a.to_dense()) + b.to_dense().kronecker(&e.to_dense()))
        }
    })
}

/// Compares the structured kernels against dense Kronecker computations on
/// an fd-diffusion instance with an `n × n` grid.
pub fn verify(n: usize, rank: usize, seed: u64) -> Result<Vec<Check>, Failure> {
    if n < 3 || rank == 0 || rank > n {
        return Err(Failure::Config("verify needs n ≥ 3 and 1 ≤ rank ≤ n".into()));
    }
    let inst = fd_series_instance(n, 10.0, 3)?;
    let k = inst.op.kron_matrix();
    let mut checks = Vec::new();

    let z = probe(n, n, seed);
    let kz = unvec(&(&k * vec_of(&z)), n, n);
    checks.push(Check { name: "operator apply".into(), value: rel(&inst.op.apply_dense(&z), &kz), bound: 1e-12 });

    for (label, recipe) in [("P1", &inst.p1), ("P2", &inst.p2)] {
        let Some(recipe) = recipe else { continue };
        let (metric, spec, p) = recipe_dense(recipe, n)?;
        let x = point(n, n, rank, metric, seed)?;
        let eta = project_dense(&x, &z)?;
        let got = spec.apply(&x, &eta)?;
        let want = dense_precond_solve(&x, &eta, &p)?;
        checks.push(Check { name: format!("{label} projected solve ({})", recipe.kind()), value: rel_tangent(&x, &got, &want)?, bound: 1e-9 });
    }

    let f = inst.rhs.dense();
    let sol = lu_solve(&k, &Mat::from_column_slice(n * n, 1, vec_of(&f).as_slice()))?;
    let xs = Mat::from_column_slice(n, n, sol.as_slice());

    let mut o = RramOptions::new(1, 1);
    o.tol = 1e-10;
    o.seed = seed;
    o.inner.init = InitialGuess::Random { seed };
    if let Some(p2) = &inst.p2 {
        let (metric, spec) = p2.exact(n, n)?;
        o.inner.metric = Some(metric);
        o.inner.precond = spec;
    }
    let out = rram_solve(&inst.op, &inst.rhs, &o)?;
    checks.push(Check { name: "rram vs dense solve".into(), value: rel(&out.x.dense(), &xs), bound: 1e-6 });

    let mut o = TruncCgOptions::new(1e-12);
    o.policy = TruncationPolicy::exact();
    o.max_iter = 10 * n * n;
    let out = truncated_cg_solve(&inst.op, &inst.rhs, &AmbientPrecond::Identity, &o)?;
    checks.push(Check { name: "untruncated CG vs dense solve".into(), value: rel(&out.x.dense(), &xs), bound: 1e-8 });
    Ok(checks)
}
