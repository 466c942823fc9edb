use mteq::geometry::FactoredMatrix;
use mteq::numkit::dense::{lu_solve, unvec, vec_of};
use mteq::numkit::{svd_thin, Mat, SparseMatrix};
use mteq::operator::MultitermOperator;
use mteq::oracle::{random_mat, random_spd};
use mteq::precond::wachspress_shifts;
use mteq::problems::{fd_series_instance, gen_synthetic, PrecondRecipe};
use mteq::trace::Status;
use mteq::trunc_cg::{
    truncate_factored, truncated_cg_solve, AmbientPrecond, Fadi, TruncCgOptions, TruncRule, TruncationPolicy,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// `U diag(s) Vᵀ` with orthonormal random `U`, `V`, as a wide factored sum.
fn graded(m: usize, n: usize, s: &[f64], extra: usize, seed: u64) -> FactoredMatrix {
    let mut r = rng(seed);
    let k = s.len();
    let (u, _) = mteq::numkit::qr_thin(&random_mat(m, k, &mut r));
    let (v, _) = mteq::numkit::qr_thin(&random_mat(n, k, &mut r));
    let core = Mat::from_diagonal(&nalgebra::DVector::from_row_slice(s));
    // Split into a redundant representation of width k + extra.
    let mix = random_mat(k, k + extra, &mut r);
    let left = &u * &core * &mix;
    let right = &v * lu_solve(&(&mix * mix.transpose()), &mix).unwrap();
    FactoredMatrix::new(left, right).unwrap()
}

#[test]
fn exact_recompression_of_redundant_factors() {
    let z = graded(12, 10, &[3.0, 2.0, 1.0], 4, 1);
    let t = truncate_factored(&z, TruncRule::Relative(0.0), None).unwrap();
    assert_eq!(t.kept, 3);
    assert_eq!(t.z.width(), 3);
    assert!((t.z.dense() - z.dense()).norm() <= 1e-13 * z.dense().norm());
    assert!(t.tail <= 1e-13 * z.dense().norm());
}

#[test]
fn unit_tolerance_keeps_leading_term() {
    let z = graded(9, 8, &[1.0, 0.9, 0.8, 0.1], 0, 2);
    let t = truncate_factored(&z, TruncRule::Relative(1.0), None).unwrap();
    assert_eq!(t.kept, 1);
    let t = truncate_factored(&FactoredMatrix::zeros(5, 4), TruncRule::Relative(1.0), None).unwrap();
    assert_eq!(t.kept, 0);
}

/// Keeps the smallest `k` whose dense-SVD tail is within the bound.
fn dense_oracle(z: &Mat, bound: f64) -> (usize, Mat) {
    let (u, s, v) = svd_thin(z).unwrap();
    let k = (0..=s.len()).find(|&k| s.rows_range(k..).norm() <= bound).unwrap();
    (k, u.columns(0, k) * Mat::from_diagonal(&s.rows(0, k)) * v.columns(0, k).transpose())
}

#[test]
fn relative_truncation_matches_dense_svd() {
    let s: Vec<f64> = (0..10).map(|i| 10f64.powf(-0.5 * i as f64)).collect();
    let z = graded(30, 25, &s, 3, 3);
    let d = z.dense();
    let t = truncate_factored(&z, TruncRule::Relative(1e-3), None).unwrap();
    let (k, best) = dense_oracle(&d, 1e-3 * d.norm());
    assert_eq!(t.kept, k);
    assert!((t.z.dense() - &best).norm() <= 1e-12 * d.norm());
    assert!(((t.z.dense() - &d).norm() - t.tail).abs() <= 1e-12 * d.norm());
    assert!(t.tail <= t.bound);
}

#[test]
fn mixed_rule_uses_larger_bound() {
    let s: Vec<f64> = (0..8).map(|i| 2f64.powi(-(i as i32))).collect();
    let z = graded(20, 15, &s, 0, 4);
    let d = z.dense();
    let abs = 0.05;
    let t = truncate_factored(&z, TruncRule::Mixed { rel: 1e-6, abs }, None).unwrap();
    assert_eq!(t.kept, dense_oracle(&d, abs).0);
    let t = truncate_factored(&z, TruncRule::Mixed { rel: 0.1, abs: 1e-9 }, None).unwrap();
    assert_eq!(t.kept, dense_oracle(&d, 0.1 * d.norm()).0);
}

#[test]
fn rank_cap_applies_last() {
    let s: Vec<f64> = (0..8).map(|i| 1.0 / (1.0 + i as f64)).collect();
    let z = graded(20, 15, &s, 2, 5);
    let t = truncate_factored(&z, TruncRule::Relative(1e-12), Some(3)).unwrap();
    assert_eq!(t.kept, 3);
    assert!(t.capped);
    assert!(t.tail > t.bound);
    let t = truncate_factored(&z, TruncRule::Relative(0.9), Some(3)).unwrap();
    assert!(!t.capped && t.kept <= 3);
}

fn spd_pair(n: usize, seed: u64) -> (SparseMatrix, SparseMatrix) {
    let mut r = rng(seed);
    (random_spd(n, &mut r), random_spd(n, &mut r))
}

/// Dense solution of `A X D + E X B = Z`.
fn dense_gen_sylvester(a: &Mat, b: &Mat, e: &Mat, d: &Mat, z: &Mat) -> Mat {
    let k = d.kronecker(a) + b.kronecker(e);
    unvec(&lu_solve(&k, &Mat::from_column_slice(z.len(), 1, vec_of(z).as_slice())).unwrap().column(0).into(), z.nrows(), z.ncols())
}

#[test]
fn fadi_single_step_matches_formula() {
    let (a, e) = spd_pair(7, 6);
    let (b, d) = spd_pair(6, 7);
    let set = mteq::precond::ShiftSet::from_pairs(vec![(1.3, -0.7)], (0.1, 10.0), (0.1, 10.0)).unwrap();
    let fadi = Fadi::new(&a, &b, &e, &d, set, 1).unwrap();
    let z = FactoredMatrix::new(random_mat(7, 2, &mut rng(8)), random_mat(6, 2, &mut rng(9))).unwrap();
    let mut log = Vec::new();
    let x = fadi.apply(&z, &|_| TruncRule::Relative(0.0), None, &mut log).unwrap();
    let (p, q) = (1.3, -0.7);
    let lhs = a.to_dense() - e.to_dense() * q;
    let rhs = b.to_dense() + d.to_dense() * p;
    let want = lu_solve(&lhs, &z.dense()).unwrap() * lu_solve(&rhs, &Mat::identity(6, 6)).unwrap() * (p - q);
    assert!((x.dense() - &want).norm() <= 1e-12 * want.norm());
    assert_eq!(log.len(), 1);
}

#[test]
fn fadi_converges_to_generalized_sylvester_solution() {
    let n = 30;
    let inst = fd_series_instance(n, 10.0, 3).unwrap();
    let recipe = inst.p2.as_ref().unwrap();
    let (a, b, e, d, set) = recipe.adi_data(n, n, 8).unwrap();
    let fadi = Fadi::new(&a, &b, &e, &d, set, 24).unwrap();
    let z = &inst.rhs;
    let mut log = Vec::new();
    let x = fadi.apply(z, &|_| TruncRule::Relative(1e-14), None, &mut log).unwrap();
    let want = dense_gen_sylvester(&a.to_dense(), &b.to_dense(), &e.to_dense(), &d.to_dense(), &z.dense());
    let err = (x.dense() - &want).norm() / want.norm();
    println!("fADI 24 steps relative error {err:.2e}, rank {}", x.width());
    assert!(err <= 1e-8);
    // The error contracts with the number of steps.
    let short = Fadi::new(&a, &b, &e, &d, recipe.adi_data(n, n, 8).unwrap().4, 8).unwrap();
    let x8 = short.apply(z, &|_| TruncRule::Relative(1e-14), None, &mut log).unwrap();
    assert!((x8.dense() - &want).norm() / want.norm() > err);
}

#[test]
fn fadi_on_sylvester_recipe_with_wachspress_shifts() {
    let (a, _) = spd_pair(10, 10);
    let (b, _) = spd_pair(9, 11);
    let recipe = PrecondRecipe::Sylvester { a: a.clone(), b: b.clone() };
    let pre = AmbientPrecond::from_recipe(&recipe, 10, 9, 6, 30).unwrap();
    assert_eq!(pre.label(), "fadi");
    let z = FactoredMatrix::new(random_mat(10, 1, &mut rng(3)), random_mat(9, 1, &mut rng(4))).unwrap();
    let mut log = Vec::new();
    let x = pre.apply(&z, &TruncationPolicy::exact(), 1.0, &mut log).unwrap();
    let want = dense_gen_sylvester(&a.to_dense(), &b.to_dense(), &Mat::identity(10, 10), &Mat::identity(9, 9), &z.dense());
    assert!((x.dense() - &want).norm() <= 1e-8 * want.norm());
    // Sanity on the shift generator itself.
    assert!(wachspress_shifts(1.0, 2.0, 1.0, 2.0, 3).unwrap().admissible());
}

/// Classical PCG on `K vec(X) = vec(F)` with preconditioner `M`, from zero.
fn dense_pcg(k: &Mat, m: &Mat, f: &Mat, iters: usize) -> Vec<f64> {
    let b = Mat::from_column_slice(f.len(), 1, vec_of(f).as_slice());
    let mut x = Mat::zeros(b.nrows(), 1);
    let mut r = b.clone();
    let mut z = lu_solve(m, &r).unwrap();
    let mut p = z.clone();
    let mut rz = r.dot(&z);
    let mut out = vec![1.0];
    for _ in 0..iters {
        let q = k * &p;
        let alpha = rz / p.dot(&q);
        x += &p * alpha;
        r -= &q * alpha;
        out.push((&b - k * &x).norm() / b.norm());
        z = lu_solve(m, &r).unwrap();
        let rz_new = r.dot(&z);
        p = &z + &p * (rz_new / rz);
        rz = rz_new;
    }
    out
}

fn small_op(seed: u64) -> (MultitermOperator, FactoredMatrix) {
    let mut r = rng(seed);
    let a = (0..3).map(|_| random_spd(6, &mut r)).collect();
    let b = (0..3).map(|_| random_spd(6, &mut r)).collect();
    let op = MultitermOperator::new(a, b).unwrap();
    let f = FactoredMatrix::new(random_mat(6, 2, &mut r), random_mat(6, 2, &mut r)).unwrap();
    (op, f)
}

#[test]
fn untruncated_cg_matches_dense_pcg() {
    for seed in 0..3 {
        let (op, f) = small_op(seed);
        let (e, d) = spd_pair(6, 100 + seed);
        for pre in [AmbientPrecond::Identity, AmbientPrecond::kron(&e, &d).unwrap()] {
            let m = match &pre {
                AmbientPrecond::Identity => Mat::identity(36, 36),
                _ => d.to_dense().kronecker(&e.to_dense()),
            };
            let mut o = TruncCgOptions::new(1e-14);
            o.policy = TruncationPolicy::exact();
            o.max_iter = 10;
            let out = truncated_cg_solve(&op, &f, &pre, &o).unwrap();
            let want = dense_pcg(&op.kron_matrix(), &m, &f.dense(), 10);
            assert_eq!(out.trace.len(), 11, "{:?}", out.status);
            for (row, w) in out.trace.rows.iter().zip(&want) {
                let got = row.res_rel.unwrap();
                assert!((got - w).abs() <= 1e-8, "iter {}: {got:e} vs {w:e}", row.iter);
            }
        }
    }
}

#[test]
fn zero_rhs_returns_zero() {
    let (op, _) = small_op(1);
    let out = truncated_cg_solve(&op, &FactoredMatrix::zeros(6, 6), &AmbientPrecond::Identity, &TruncCgOptions::new(1e-6))
        .unwrap();
    assert_eq!(out.status, Status::Converged);
    assert_eq!(out.trace.len(), 1);
    assert_eq!(out.x.width(), 0);
}

#[test]
fn default_policy_converges_with_certificates() {
    let n = 40;
    let inst = fd_series_instance(n, 10.0, 3).unwrap();
    let pre = AmbientPrecond::from_recipe(inst.p2.as_ref().unwrap(), n, n, 8, 8).unwrap();
    let out = truncated_cg_solve(&inst.op, &inst.rhs, &pre, &TruncCgOptions::new(1e-6)).unwrap();
    assert_eq!(out.status, Status::Converged, "{:?}", out.trace.last());
    let exact = (inst.rhs.dense() - inst.op.apply_dense(&out.x.dense())).norm() / inst.rhs.dense().norm();
    assert!(exact <= 1e-6);
    assert!(out.truncations.iter().all(|t| t.within_policy() && !t.capped));
    assert!(out.trace.rows.iter().all(|r| r.rank_r.is_some() && r.rank_p.is_some()));
    println!("truncated CG n = {n}: {} iterations, rank {}", out.trace.last().unwrap().iter, out.rank());
}

#[test]
fn rank_cap_below_solution_rank_stagnates() {
    let n = 60;
    let inst = fd_series_instance(n, 10.0, 3).unwrap();
    let pre = AmbientPrecond::from_recipe(inst.p2.as_ref().unwrap(), n, n, 8, 8).unwrap();
    let mut o = TruncCgOptions::new(1e-10);
    o.policy = o.policy.with_cap(4);
    let out = truncated_cg_solve(&inst.op, &inst.rhs, &pre, &o).unwrap();
    assert_eq!(out.status, Status::Stagnation, "{:?}", out.trace.last());
    let last = out.trace.last().unwrap();
    assert!(last.res_rel.unwrap() > o.tol);
    assert!(out.trace.rows.iter().all(|r| r.rank <= 4 && r.rank_r.unwrap() <= 4 && r.rank_p.unwrap() <= 4));
    assert!(out.truncations.iter().any(|t| t.capped));
    println!("capped truncated CG stagnates at {:.2e} after {} iterations", last.res_rel.unwrap(), last.iter);
}

#[test]
fn trace_csv_has_rank_columns() {
    let inst = gen_synthetic(15, 12, 3, 0.3, 2, 1).unwrap();
    let out = truncated_cg_solve(&inst.op, &inst.rhs, &AmbientPrecond::Identity, &TruncCgOptions::new(1e-6)).unwrap();
    let mut buf = Vec::new();
    out.trace.write_csv(&mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert!(text.lines().next().unwrap().ends_with(",rank_r,rank_p"));
    let back = mteq::trace::SolveTrace::read_csv(text.as_bytes()).unwrap();
    assert_eq!(back.rows.len(), out.trace.rows.len());
}

#[test]
fn deterministic() {
    let inst = gen_synthetic(15, 12, 3, 0.3, 2, 4).unwrap();
    let o = TruncCgOptions::new(1e-8);
    let a = truncated_cg_solve(&inst.op, &inst.rhs, &AmbientPrecond::Identity, &o).unwrap();
    let b = truncated_cg_solve(&inst.op, &inst.rhs, &AmbientPrecond::Identity, &o).unwrap();
    assert_eq!(a.x, b.x);
    assert_eq!(a.truncations, b.truncations);
}
