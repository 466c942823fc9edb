use std::sync::Arc;

use mteq::geometry::*;
use mteq::numkit::{dense::vec_of, svd_thin, Mat, Vector};
use mteq::oracle::*;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn weighted(m: usize, n: usize, r: &mut ChaCha8Rng) -> Arc<KroneckerMetric> {
    KroneckerMetric::new(&random_spd(m, r), &random_spd(n, r)).unwrap()
}

fn point(m: usize, n: usize, k: usize, metric: Arc<KroneckerMetric>, r: &mut ChaCha8Rng) -> FixedRankPoint {
    FixedRankPoint::random(m, n, k, metric, r).unwrap()
}

fn rel(a: &Mat, b: &Mat) -> f64 {
    (a - b).norm() / b.norm().max(1e-300)
}

fn e1e1(n: usize) -> FixedRankPoint {
    let mut u = Mat::zeros(n, 1);
    u[(0, 0)] = 1.0;
    FixedRankPoint::from_parts(u.clone(), Vector::from_element(1, 1.0), u, KroneckerMetric::identity(n, n)).unwrap()
}

#[test]
fn weighted_svd_identity_metric_is_standard_svd() {
    let mut r = rng(1);
    let z = random_mat(7, 5, &mut r);
    let w = weighted_svd_dense(&z, &KroneckerMetric::identity(7, 5)).unwrap();
    let (_, s, _) = svd_thin(&z).unwrap();
    assert!((w.s - s).norm() < 1e-13);
}

#[test]
fn weighted_svd_reconstruction() {
    for seed in 0..20 {
        let mut r = rng(seed);
        let metric = weighted(8, 6, &mut r);
        let z = random_mat(8, 6, &mut r);
        for w in [
            weighted_svd_dense(&z, &metric).unwrap(),
            weighted_svd(&FactoredMatrix::new(z.clone(), Mat::identity(6, 6)).unwrap(), &metric).unwrap(),
        ] {
            let rec = &w.u * Mat::from_diagonal(&w.s) * w.v.transpose();
            assert!(rel(&rec, &z) <= 1e-12);
            let eye = Mat::identity(6, 6);
            assert!((w.u.transpose() * metric.e.dense() * &w.u - &eye).norm() < 1e-12);
            assert!((w.v.transpose() * metric.d.dense() * &w.v - &eye).norm() < 1e-12);
            assert!((&w.eu - metric.e.dense() * &w.u).norm() < 1e-12);
            assert!(w.s.as_slice().windows(2).all(|p| p[0] >= p[1]));
        }
    }
}

#[test]
fn weighted_svd_fixed_point() {
    let mut r = rng(2);
    let metric = weighted(6, 5, &mut r);
    let x = point(6, 5, 3, metric.clone(), &mut r);
    let w = weighted_svd(&x.factored(), &metric).unwrap();
    assert!((w.s.rows(0, 3) - x.s()).norm() < 1e-13);
}

#[test]
fn truncate_low_rank_input_is_exact() {
    let mut r = rng(3);
    let metric = weighted(7, 6, &mut r);
    let z = FactoredMatrix::new(random_mat(7, 2, &mut r), random_mat(6, 2, &mut r)).unwrap();
    let (p, short) = truncate(&z, 4, metric).unwrap();
    assert!(short);
    assert_eq!(p.rank(), 2);
    assert!(rel(&p.dense(), &z.dense()) < 1e-13);
}

#[test]
fn truncate_identity_metric_matches_svd() {
    let mut r = rng(4);
    let z = random_mat(9, 7, &mut r);
    let (p, short) = truncate_dense(&z, 3, KroneckerMetric::identity(9, 7)).unwrap();
    assert!(!short);
    let (u, s, v) = svd_thin(&z).unwrap();
    let best = u.columns(0, 3) * Mat::from_diagonal(&s.rows(0, 3).into_owned()) * v.columns(0, 3).transpose();
    assert!(rel(&p.dense(), &best) < 1e-12);
}

#[test]
fn weighted_eckart_young_against_candidates() {
    for seed in 0..20 {
        let mut r = rng(100 + seed);
        let metric = weighted(10, 10, &mut r);
        let z = random_mat(10, 10, &mut r);
        let w = weighted_svd_dense(&z, &metric).unwrap();
        let (p, _) = truncate_dense(&z, 3, metric.clone()).unwrap();
        let err = (metric.inner_dense(&(&z - p.dense()), &(&z - p.dense()))).sqrt();
        let tail = w.s.rows(3, 7).norm();
        assert!((err - tail).abs() <= 1e-12 * w.s.norm());
        for c in 0..1000 {
            let cand = if c % 2 == 0 {
                random_mat(10, 3, &mut r) * random_mat(3, 10, &mut r)
            } else {
                let eps = 10f64.powi(-((c % 7) as i32) - 1);
                let l = p.u() * Mat::from_diagonal(p.s()) + random_mat(10, 3, &mut r) * eps;
                let rt = p.v() + random_mat(10, 3, &mut r) * eps;
                l * rt.transpose()
            };
            let d = &z - cand;
            assert!(metric.inner_dense(&d, &d).sqrt() >= err * (1.0 - 1e-12));
        }
    }
}

#[test]
fn projection_examples_identity_metric() {
    let x = e1e1(2);
    let xi = project_dense(&x, &Mat::identity(2, 2)).unwrap();
    assert!((xi.m[(0, 0)] - 1.0).abs() < 1e-15);
    assert!(xi.up.norm() < 1e-15 && xi.vp.norm() < 1e-15);
    let mut z = Mat::zeros(2, 2);
    z[(1, 1)] = 1.0;
    let xi = project_dense(&x, &z).unwrap();
    assert!(xi.norm() < 1e-15);
}

#[test]
fn projection_residual_is_b_orthogonal_to_tangent_basis() {
    for seed in 0..20 {
        let mut r = rng(200 + seed);
        let metric = weighted(8, 8, &mut r);
        let x = point(8, 8, 2, metric.clone(), &mut r);
        let z = random_mat(8, 8, &mut r);
        let xi = project_dense(&x, &z).unwrap();
        let res = &z - xi.dense(&x).unwrap();
        let t = tangent_basis(&x).unwrap();
        assert_eq!(t.ncols(), 2 * (16 - 2));
        let k = metric_matrix(&metric);
        let dots = t.transpose() * (&k * vec_of(&res));
        assert!(dots.amax() <= 1e-10 * z.norm(), "seed {seed}: {}", dots.amax());
        assert!(rel(&xi.dense(&x).unwrap(), &project_oracle(&x, &z).unwrap()) < 1e-10);
        assert!(xi.gauge_error(&x) < 1e-10);
    }
}

#[test]
fn projection_is_idempotent() {
    for seed in 0..20 {
        let mut r = rng(300 + seed);
        let metric = weighted(9, 7, &mut r);
        let x = point(9, 7, 3, metric, &mut r);
        let z = random_mat(9, 7, &mut r);
        let a = project_dense(&x, &z).unwrap();
        let b = project(&x, &a.embed(&x).unwrap()).unwrap();
        assert!(rel(&b.dense(&x).unwrap(), &a.dense(&x).unwrap()) < 1e-11);
    }
}

#[test]
fn identity_metric_matches_standard_projection_formula() {
    let mut r = rng(5);
    let x = point(8, 6, 2, KroneckerMetric::identity(8, 6), &mut r);
    let z = random_mat(8, 6, &mut r);
    let pu = x.u() * x.u().transpose();
    let pv = x.v() * x.v().transpose();
    let expect = &pu * &z + &z * &pv - &pu * &z * &pv;
    let got = project_dense(&x, &z).unwrap().dense(&x).unwrap();
    assert!(rel(&got, &expect) < 1e-12);
    let xi = random_tangent(&x, &mut r).unwrap();
    let eta = random_tangent(&x, &mut r).unwrap();
    let dense_inner = mteq::numkit::inner(&xi.dense(&x).unwrap(), &eta.dense(&x).unwrap());
    assert!((xi.inner(&eta).unwrap() - dense_inner).abs() < 1e-12 * xi.norm() * eta.norm());
}

#[test]
fn embed_round_trip_and_dense_form() {
    let mut r = rng(6);
    let metric = weighted(8, 8, &mut r);
    let x = point(8, 8, 2, metric, &mut r);
    let xi = random_tangent(&x, &mut r).unwrap();
    let back = project(&x, &xi.embed(&x).unwrap()).unwrap();
    assert!((&back.m - &xi.m).norm() < 1e-12 * xi.norm());
    assert!((&back.up - &xi.up).norm() < 1e-12 * xi.norm());
    assert!((&back.vp - &xi.vp).norm() < 1e-12 * xi.norm());
    let expect = x.u() * &xi.m * x.v().transpose() + &xi.up * x.v().transpose() + x.u() * xi.vp.transpose();
    assert!(rel(&xi.dense(&x).unwrap(), &expect) < 1e-13);
    let zero = TangentVector::zero(&x);
    assert_eq!(zero.embed(&x).unwrap().dense().norm(), 0.0);
}

#[test]
fn inner_product_matches_dense_metric() {
    let mut r = rng(7);
    let metric = weighted(8, 7, &mut r);
    let x = point(8, 7, 2, metric.clone(), &mut r);
    let a = random_tangent(&x, &mut r).unwrap();
    let b = random_tangent(&x, &mut r).unwrap();
    let dense = metric.inner_dense(&a.dense(&x).unwrap(), &b.dense(&x).unwrap());
    assert!((a.inner(&b).unwrap() - dense).abs() < 1e-12 * a.norm() * b.norm());
    assert!(a.inner(&a).unwrap() > 0.0);
    assert_eq!(TangentVector::zero(&x).norm(), 0.0);
    let y = point(8, 7, 2, metric, &mut r);
    assert!(TangentVector::zero(&y).inner(&a).is_err());
}

#[test]
fn transport_matches_dense_projection() {
    for seed in 0..5 {
        let mut r = rng(400 + seed);
        let metric = weighted(8, 8, &mut r);
        let x = point(8, 8, 2, metric.clone(), &mut r);
        let y = point(8, 8, 2, metric.clone(), &mut r);
        let xi = random_tangent(&x, &mut r).unwrap();
        let t = transport(&y, &x, &xi).unwrap();
        let expect = project_oracle(&y, &xi.dense(&x).unwrap()).unwrap();
        let e = rel(&t.dense(&y).unwrap(), &expect); assert!(e < 1e-10, "{e} {}", expect.norm());
        let same = transport(&x, &x, &xi).unwrap();
        assert!((&same.m - &xi.m).norm() < 1e-12 * xi.norm());
        assert!((&same.up - &xi.up).norm() < 1e-12 * xi.norm());
        assert_eq!(transport(&y, &x, &TangentVector::zero(&x)).unwrap().norm(), 0.0);
    }
    let mut r = rng(9);
    let x = point(5, 5, 1, KroneckerMetric::identity(5, 5), &mut r);
    let y = point(5, 5, 1, weighted(5, 5, &mut r), &mut r);
    assert!(matches!(
        transport(&y, &x, &TangentVector::zero(&x)),
        Err(mteq::Error::MetricMismatch)
    ));
}

#[test]
fn retraction_matches_dense_truncation() {
    for seed in 0..10 {
        let mut r = rng(500 + seed);
        let metric = weighted(8, 8, &mut r);
        let x = point(8, 8, 2, metric.clone(), &mut r);
        let xi = random_tangent(&x, &mut r).unwrap();
        for t in [0.3, 1.0, 2.5] {
            let y = retract(&x, &xi, t).unwrap();
            let target = x.dense() + xi.dense(&x).unwrap() * t;
            let (expect, _) = truncate_dense(&target, 2, metric.clone()).unwrap();
            assert!(rel(&y.dense(), &expect.dense()) < 1e-11);
            assert!((y.s() - expect.s()).norm() < 1e-11 * expect.s().norm());
        }
        let y0 = retract(&x, &xi, 0.0).unwrap();
        assert!((y0.u() - x.u()).norm() < 1e-12 && (y0.s() - x.s()).norm() < 1e-12);
    }
}

#[test]
fn retraction_on_full_rank_manifold_is_addition() {
    let mut r = rng(10);
    let x = point(4, 4, 4, KroneckerMetric::identity(4, 4), &mut r);
    let xi = random_tangent(&x, &mut r).unwrap().scaled(0.01);
    let y = retract(&x, &xi, 1.0).unwrap();
    let expect = x.dense() + xi.dense(&x).unwrap();
    assert!(rel(&y.dense(), &expect) < 1e-12);
}

#[test]
fn retraction_is_second_order_accurate() {
    let mut r = rng(11);
    let metric = weighted(9, 8, &mut r);
    let x = point(9, 8, 3, metric.clone(), &mut r);
    let xi = random_tangent(&x, &mut r).unwrap();
    let xi = xi.scaled(1.0 / xi.norm());
    let mut last = f64::INFINITY;
    for k in 1..=4 {
        let t = 10f64.powi(-k);
        let y = retract(&x, &xi, t).unwrap();
        let d = y.dense() - x.dense() - xi.dense(&x).unwrap() * t;
        let ratio = metric.inner_dense(&d, &d).sqrt() / t;
        assert!(ratio < last);
        last = ratio;
    }
    assert!(last < 1e-3);
}

#[test]
fn gradient_examples() {
    let mut r = rng(12);
    let x = point(8, 8, 2, KroneckerMetric::identity(8, 8), &mut r);
    let z = FactoredMatrix::new(random_mat(8, 3, &mut r), random_mat(8, 3, &mut r)).unwrap();
    let g = riemannian_gradient(&x, &z).unwrap();
    let p = project(&x, &z).unwrap();
    assert!(rel(&g.dense(&x).unwrap(), &p.dense(&x).unwrap()) < 1e-13);
    assert_eq!(riemannian_gradient(&x, &FactoredMatrix::zeros(8, 8)).unwrap().norm(), 0.0);

    let metric = weighted(8, 8, &mut r);
    let x = point(8, 8, 2, metric.clone(), &mut r);
    let g = riemannian_gradient(&x, &z).unwrap();
    let scaled = metric.e.dense().try_inverse().unwrap() * z.dense() * metric.d.dense().try_inverse().unwrap();
    let expect = project_dense(&x, &scaled).unwrap();
    assert!(rel(&g.dense(&x).unwrap(), &expect.dense(&x).unwrap()) < 1e-11);
    assert!((&g.eup - metric.e.dense() * &g.up).norm() < 1e-11 * g.eup.norm());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn prop_projection_idempotent(seed in 0u64..10_000, m in 3usize..9, n in 3usize..9, k in 1usize..3) {
        let mut r = rng(seed);
        let metric = weighted(m, n, &mut r);
        let x = point(m, n, k, metric, &mut r);
        let z = FactoredMatrix::new(random_mat(m, 4, &mut r), random_mat(n, 4, &mut r)).unwrap();
        let a = project(&x, &z).unwrap();
        let b = project(&x, &a.embed(&x).unwrap()).unwrap();
        prop_assert!(rel(&b.dense(&x).unwrap(), &a.dense(&x).unwrap()) < 1e-11);
        prop_assert!(a.gauge_error(&x) < 1e-10);
    }

    #[test]
    fn prop_retraction_keeps_metric_orthonormal_factors(seed in 0u64..10_000, t in 0.01f64..3.0) {
        let mut r = rng(seed);
        let metric = weighted(7, 6, &mut r);
        let x = point(7, 6, 2, metric.clone(), &mut r);
        let xi = random_tangent(&x, &mut r).unwrap();
        let y = retract(&x, &xi, t).unwrap();
        let eye = Mat::identity(2, 2);
        prop_assert!((y.u().transpose() * y.eu() - &eye).norm() < 1e-10);
        prop_assert!((y.v().transpose() * y.dv() - &eye).norm() < 1e-10);
        prop_assert!(y.s().iter().all(|&s| s > 0.0));
    }
}
