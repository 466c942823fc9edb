use mteq::geometry::{project, truncate_dense, FactoredMatrix, FixedRankPoint, KroneckerMetric};
use mteq::numkit::{svd_thin, Mat};
use mteq::operator::MultitermOperator;
use mteq::oracle::{random_mat, random_spd};
use mteq::problems::{fd_series_instance, gen_synthetic, identity_instance};
use mteq::rnlcg::InitialGuess;
use mteq::rram::{
    hutchpp_residual_norm, ls_slope, plateau_detect, rank_decrease, rank_decrease_target, rank_increase, rram_solve,
    RramOptions,
};
use mteq::trace::{ResKind, Status};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_op(m: usize, n: usize, l: usize, seed: u64) -> MultitermOperator {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    let a = (0..l).map(|_| random_spd(m, &mut r)).collect();
    let b = (0..l).map(|_| random_spd(n, &mut r)).collect();
    MultitermOperator::new(a, b).unwrap()
}

fn dense_f(op: &MultitermOperator, x: &Mat, f: &Mat) -> f64 {
    0.5 * op.apply_dense(x).dot(x) - x.dot(f)
}

#[test]
fn hutchpp_of_zero_is_zero() {
    let z = FactoredMatrix::zeros(7, 5);
    assert_eq!(hutchpp_residual_norm(&z, 5, &mut ChaCha8Rng::seed_from_u64(0)).unwrap(), 0.0);
    let z = FactoredMatrix::new(Mat::zeros(7, 3), Mat::zeros(5, 3)).unwrap();
    assert_eq!(hutchpp_residual_norm(&z, 5, &mut ChaCha8Rng::seed_from_u64(0)).unwrap(), 0.0);
}

#[test]
fn hutchpp_is_exact_on_low_rank() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for seed in 0..10 {
        let r = FactoredMatrix::new(random_mat(40, 2, &mut rng), random_mat(30, 2, &mut rng)).unwrap();
        let exact = r.dense().norm();
        let est = hutchpp_residual_norm(&r, 5, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        assert!((est - exact).abs() <= 1e-10 * exact, "{est} vs {exact}");
    }
}

#[test]
fn hutchpp_budget_below_three_rejected() {
    let r = FactoredMatrix::zeros(4, 4);
    assert!(hutchpp_residual_norm(&r, 2, &mut ChaCha8Rng::seed_from_u64(0)).is_err());
}

/// Median relative error over 200 seeds, run on parallel threads with one
/// RNG stream per seed.
#[test]
fn hutchpp_monte_carlo_calibration() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let r = FactoredMatrix::new(random_mat(120, 20, &mut rng), random_mat(100, 20, &mut rng)).unwrap();
    let exact = r.frob_norm();
    let mut errs: Vec<f64> = std::thread::scope(|s| {
        let handles: Vec<_> = (0..4u64)
            .map(|t| {
                let r = &r;
                s.spawn(move || {
                    (t * 50..(t + 1) * 50)
                        .map(|seed| {
                            let est = hutchpp_residual_norm(r, 5, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
                            (est - exact).abs() / exact
                        })
                        .collect::<Vec<_>>()
                })
            })
            .collect();
        handles.into_iter().flat_map(|h| h.join().unwrap()).collect()
    });
    errs.sort_by(f64::total_cmp);
    let median = 0.5 * (errs[99] + errs[100]);
    println!("Hutch++ median relative error {median:.4}");
    assert!(median <= 0.35);
}

#[test]
fn slope_of_line_is_exact() {
    let y: Vec<f64> = (0..6).map(|i| 2.0 - 0.3 * i as f64).collect();
    assert!((ls_slope(&y) + 0.3).abs() < 1e-14);
}

#[test]
fn geometric_decay_never_halts() {
    let h: Vec<f64> = (0..40).map(|i| -0.2 * i as f64).collect();
    for k in 1..=h.len() {
        assert!(!plateau_detect(&h[..k], 3, 0.75));
    }
}

#[test]
fn flat_tail_halts() {
    let mut h: Vec<f64> = (0..10).map(|i| -0.5 * i as f64).collect();
    h.extend([-4.5; 4]);
    assert!(plateau_detect(&h, 3, 0.75));
    assert!(!plateau_detect(&h[..3], 3, 0.75));
}

/// Direct evaluation of the rule: the window slope is the closed-form
/// least-squares slope over four points and the mean slope is the chord.
fn oracle_halt(h: &[f64], fact: f64) -> bool {
    let n = h.len();
    if n < 4 {
        return false;
    }
    let w = &h[n - 4..];
    let window = (-3.0 * w[0] - w[1] + w[2] + 3.0 * w[3]) / 10.0;
    window >= fact * (h[n - 1] - h[0]) / (n - 1) as f64
}

#[test]
fn plateau_rule_matches_direct_evaluation() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..50 {
        // Decay rate halving every five iterations, with noise.
        let mut rate: f64 = rng.gen_range(0.05..0.5);
        let mut h = vec![0.0];
        let mut first = None;
        for i in 1..60 {
            if i % 5 == 0 {
                rate *= 0.5;
            }
            let last = *h.last().unwrap();
            h.push(last - rate * (1.0 + 0.2 * rng.gen_range(-1.0..1.0)));
            let got = plateau_detect(&h, 3, 0.75);
            assert_eq!(got, oracle_halt(&h, 0.75), "at {i}");
            if got && first.is_none() {
                first = Some(i);
            }
        }
        assert!(first.is_some());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(50))]
    #[test]
    fn geometric_sequences_never_plateau(rate in 0.01f64..0.99, len in 4usize..60) {
        let h: Vec<f64> = (0..len).map(|i| i as f64 * rate.log10()).collect();
        for k in 1..=len {
            prop_assert!(!plateau_detect(&h[..k], 3, 0.75));
        }
    }
}

/// `r₋ = min{k : Σ_{i>k} σᵢ² < ε² Σσᵢ²}`, evaluated term by term.
fn oracle_rank(s: &[f64], eps: f64) -> usize {
    let total: f64 = s.iter().map(|v| v * v).sum();
    (1..=s.len()).find(|&k| s[k..].iter().map(|v| v * v).sum::<f64>() / total < eps * eps).unwrap()
}

#[test]
fn rank_decrease_examples() {
    assert_eq!(rank_decrease_target(&[1.0, 1e-12], 1e-4), Some(1));
    assert_eq!(rank_decrease_target(&[1.0, 1.0], 0.7), None);
    let s = [1.0, 0.5, 1e-3, 1e-9];
    assert_eq!(rank_decrease_target(&s, 1e-2), Some(oracle_rank(&s, 1e-2)));
    assert_eq!(rank_decrease_target(&s, 1e-2), Some(2));
    assert_eq!(rank_decrease_target(&s, 1e-6), Some(3));
    assert_eq!(rank_decrease_target(&s, 1e-12), None);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]
    #[test]
    fn rank_decrease_matches_oracle(mut s in proptest::collection::vec(1e-14f64..1.0, 1..8), e in -10.0f64..-0.5) {
        s.sort_by(|a, b| b.total_cmp(a));
        let eps = 10f64.powf(e);
        let total: f64 = s.iter().map(|v| v * v).sum();
        let last = s[s.len() - 1];
        match rank_decrease_target(&s, eps) {
            None => prop_assert!(last * last / total >= eps * eps),
            Some(k) => {
                prop_assert!(last * last / total < eps * eps);
                prop_assert_eq!(k, oracle_rank(&s, eps));
                prop_assert!(k >= 1 && k < s.len());
            }
        }
    }
}

#[test]
fn rank_decrease_truncates_point() {
    let metric = KroneckerMetric::identity(8, 6);
    let z = random_mat(8, 3, &mut ChaCha8Rng::seed_from_u64(3));
    let w = random_mat(6, 3, &mut ChaCha8Rng::seed_from_u64(4));
    let (x, _) = truncate_dense(&(&z * w.transpose()), 3, metric).unwrap();
    let s = nalgebra::DVector::from_vec(vec![1.0, 0.5, 1e-12]);
    let x = x.with_singular_values(s);
    let (y, delta) = rank_decrease(&x, 1e-8).unwrap();
    assert_eq!(y.rank(), 2);
    assert!((x.dense() + delta.dense() - y.dense()).norm() < 1e-15);
    assert!(rank_decrease(&y, 1e-8).is_none());
}

#[test]
fn rank_increase_with_identity_operator() {
    let inst = identity_instance(10, 9, 5, 2).unwrap();
    let metric = KroneckerMetric::identity(10, 9);
    let x = FixedRankPoint::random(10, 9, 2, metric.clone(), &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
    let inc = rank_increase(&x, &inst.op, &inst.rhs, 2, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
    assert_eq!(inc.x.rank(), 4);
    assert_eq!(inc.padded, 0);
    assert!((inc.alpha - 1.0).abs() < 1e-12);
    // Y★ is the rank-2 truncation of the normal part of F − X.
    let pu = Mat::identity(10, 10) - x.u() * x.u().transpose();
    let pv = Mat::identity(9, 9) - x.v() * x.v().transpose();
    let normal = &pu * (inst.rhs.dense() - x.dense()) * &pv;
    let (u, s, v) = svd_thin(&normal).unwrap();
    let best = u.columns(0, 2) * Mat::from_diagonal(&s.rows(0, 2)) * v.columns(0, 2).transpose();
    assert!((inc.y.dense() - &best).norm() <= 1e-12 * best.norm());
    assert!((inc.x.dense() - x.dense() - &best).norm() <= 1e-12 * best.norm());
}

#[test]
fn rank_increase_is_normal_and_optimal() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for (seed, weighted) in [(1u64, false), (2, true), (3, true)] {
        let op = random_op(9, 8, 3, seed);
        let rhs = FactoredMatrix::new(random_mat(9, 4, &mut rng), random_mat(8, 4, &mut rng)).unwrap();
        let metric = if weighted {
            KroneckerMetric::new(&random_spd(9, &mut rng), &random_spd(8, &mut rng)).unwrap()
        } else {
            KroneckerMetric::identity(9, 8)
        };
        let x = FixedRankPoint::random(9, 8, 2, metric, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        let inc = rank_increase(&x, &op, &rhs, 2, &mut rng).unwrap();
        assert_eq!(inc.x.rank(), 4);
        let tang = project(&x, &inc.y).unwrap();
        assert!(tang.norm() <= 1e-10 * inc.y.frob_norm(), "{}", tang.norm());
        let fd = rhs.dense();
        let xd = x.dense();
        let yd = inc.y.dense();
        let f_new = dense_f(&op, &inc.x.dense(), &fd);
        assert!(f_new <= dense_f(&op, &xd, &fd));
        for i in 0..100 {
            let t = inc.alpha * (i as f64 / 50.0);
            assert!(f_new <= dense_f(&op, &(&xd + &yd * t), &fd) + 1e-12 * f_new.abs());
        }
    }
}

#[test]
fn rank_increase_at_exact_solution_pads() {
    let op = random_op(8, 7, 2, 4);
    let metric = KroneckerMetric::identity(8, 7);
    let xs = FixedRankPoint::random(8, 7, 2, metric, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
    let rhs = op.apply_point(&xs).unwrap();
    let inc = rank_increase(&xs, &op, &rhs, 2, &mut ChaCha8Rng::seed_from_u64(6)).unwrap();
    assert_eq!(inc.padded, 2);
    assert_eq!(inc.x.rank(), 4);
    let fd = rhs.dense();
    let f0 = dense_f(&op, &xs.dense(), &fd);
    let f1 = dense_f(&op, &inc.x.dense(), &fd);
    assert!((f1 - f0).abs() <= 1e-12 * f0.abs());
    assert!(project(&xs, &inc.y).unwrap().norm() <= 1e-10 * inc.y.frob_norm());
}

#[test]
fn rank_increase_beyond_dimension_rejected() {
    let inst = identity_instance(4, 4, 1, 2).unwrap();
    let x = FixedRankPoint::random(4, 4, 3, KroneckerMetric::identity(4, 4), &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
    assert!(rank_increase(&x, &inst.op, &inst.rhs, 2, &mut ChaCha8Rng::seed_from_u64(0)).is_err());
}

#[test]
fn solution_on_initial_manifold_needs_no_rank_increase() {
    let inst = identity_instance(14, 12, 3, 7).unwrap();
    let mut o = RramOptions::new(3, 2);
    o.tol = 1e-10;
    let out = rram_solve(&inst.op, &inst.rhs, &o).unwrap();
    assert_eq!(out.status, Status::Converged);
    assert!(out.trace.rows.iter().all(|r| !r.event.contains("rank_up") && r.rank == 3));
    assert!(inst.op.residual_norm_exact(&out.x, &inst.rhs, None).unwrap() <= 1e-10);
}

#[test]
fn loose_tolerance_returns_initial_guess() {
    let inst = gen_synthetic(10, 9, 2, 0.3, 2, 1).unwrap();
    let mut o = RramOptions::new(2, 1);
    o.tol = 10.0;
    let x0 = o.inner.clone();
    let out = rram_solve(&inst.op, &inst.rhs, &o).unwrap();
    assert_eq!(out.status, Status::Converged);
    assert_eq!(out.trace.len(), 1);
    let mut inner = x0;
    inner.rank = 2;
    assert_eq!(out.x.dense(), inner.initial_point(10, 9).unwrap().dense());
}

fn check_rank_events(out: &mteq::rnlcg::SolveOutcome) {
    for w in out.trace.rows.windows(2) {
        let (a, b) = (&w[0], &w[1]);
        if a.rank != b.rank {
            let up = format!("rank_up:{}→{}", a.rank, b.rank);
            let down = format!("rank_down:{}→{}", a.rank, b.rank);
            assert!(b.event.contains(&up) || b.event.contains(&down), "{a:?} -> {b:?}");
        }
        if !b.event.contains("rank_down") {
            assert!(b.f <= a.f, "objective increased at {}", b.iter);
        }
    }
}

#[test]
fn rank_adaptive_solve_on_synthetic() {
    let inst = gen_synthetic(30, 25, 3, 0.3, 3, 11).unwrap();
    let mut o = RramOptions::new(1, 2);
    o.tol = 1e-8;
    o.max_iter = 2000;
    let p1 = inst.p1.as_ref().unwrap().exact(30, 25).unwrap();
    o.inner.metric = Some(p1.0);
    o.inner.precond = p1.1;
    let out = rram_solve(&inst.op, &inst.rhs, &o).unwrap();
    assert_eq!(out.status, Status::Converged, "{:?}", out.trace.last());
    let res = inst.op.residual_norm_exact(&out.x, &inst.rhs, None).unwrap();
    assert!(res <= 1e-8);
    assert!(out.trace.rows.iter().any(|r| r.event.contains("rank_up")));
    assert!(out.trace.rows.iter().any(|r| r.res_kind == ResKind::Hutchpp));
    check_rank_events(&out);
    println!("synthetic: rank {} after {} iterations", out.x.rank(), out.trace.last().unwrap().iter);
}

#[test]
fn rank_adaptive_solve_on_diffusion_with_p2() {
    let n = 40;
    let inst = fd_series_instance(n, 10.0, 3).unwrap();
    let (metric, pre) = inst.p2.as_ref().unwrap().exact(n, n).unwrap();
    let mut o = RramOptions::new(3, 3);
    o.inner.metric = Some(metric);
    o.inner.precond = pre;
    o.max_iter = 500;
    let out = rram_solve(&inst.op, &inst.rhs, &o).unwrap();
    assert_eq!(out.status, Status::Converged);
    assert!(inst.op.residual_norm_exact(&out.x, &inst.rhs, None).unwrap() <= 1e-6);
    check_rank_events(&out);
    println!("diffusion n = {n}: rank {} after {} iterations", out.x.rank(), out.trace.last().unwrap().iter);
}

#[test]
fn rank_adaptive_runs_are_deterministic() {
    let inst = gen_synthetic(20, 18, 3, 0.3, 3, 2).unwrap();
    let mut o = RramOptions::new(1, 1);
    o.tol = 1e-6;
    o.seed = 17;
    o.inner.init = InitialGuess::Random { seed: 5 };
    let a = rram_solve(&inst.op, &inst.rhs, &o).unwrap();
    let b = rram_solve(&inst.op, &inst.rhs, &o).unwrap();
    assert_eq!(a.status, b.status);
    assert_eq!(a.trace.len(), b.trace.len());
    for (x, y) in a.trace.rows.iter().zip(&b.trace.rows) {
        let mut y = y.clone();
        y.time_s = x.time_s;
        assert_eq!(x, &y);
    }
}

#[test]
fn invalid_options_rejected() {
    let inst = identity_instance(5, 5, 1, 1).unwrap();
    let mut o = RramOptions::new(1, 1);
    o.eps_sigma = 1.0;
    assert!(rram_solve(&inst.op, &inst.rhs, &o).is_err());
    let mut o = RramOptions::new(1, 1);
    o.w_len = 1;
    assert!(rram_solve(&inst.op, &inst.rhs, &o).is_err());
    let mut o = RramOptions::new(1, 1);
    o.fact = 1.0;
    assert!(rram_solve(&inst.op, &inst.rhs, &o).is_err());
}
