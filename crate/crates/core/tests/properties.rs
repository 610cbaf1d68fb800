use proptest::prelude::*;
use robust_t::estimators::{e_step, mlq_weights};
use robust_t::linalg::{cholesky, log_det, mahalanobis_sq, min_eigenvalue, spd_repair, Matrix, SpdMatrix};
use robust_t::root::brent;
use robust_t::tdist::{cond_expect_log_u, cond_expect_u, lq_transform};
use robust_t::{Dataset64, MvtParams64};

fn square(p: usize) -> impl Strategy<Value = Matrix<f64>> {
    prop::collection::vec(-2.0f64..2.0, p * p).prop_map(move |v| {
        Matrix::from_rows(&v.chunks(p).map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    })
}

/// `B·Bᵀ + ½·I`, comfortably positive definite.
fn spd(p: usize) -> impl Strategy<Value = Matrix<f64>> {
    square(p).prop_map(move |b| {
        let mut m = b.matmul(&b.transpose()).unwrap();
        m.shift_diagonal(0.5);
        m
    })
}

fn invertible(p: usize) -> impl Strategy<Value = Matrix<f64>> {
    square(p).prop_filter("well conditioned", |a| a.determinant().abs() > 0.1)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn cholesky_round_trip(a in spd(4)) {
        let l = cholesky(&a).unwrap();
        let back = l.matmul(&l.transpose()).unwrap();
        prop_assert!(back.sub(&a).unwrap().frobenius_norm() <= 1e-12 * a.frobenius_norm());
        for i in 0..4 {
            prop_assert!(l[(i, i)] > 0.0);
            for j in i + 1..4 {
                prop_assert_eq!(l[(i, j)], 0.0);
            }
        }
    }

    #[test]
    fn mahalanobis_and_log_det_under_affine_maps(
        sigma in spd(3),
        a in invertible(3),
        x in prop::collection::vec(-5.0f64..5.0, 3),
        mu in prop::collection::vec(-5.0f64..5.0, 3),
        b in prop::collection::vec(-5.0f64..5.0, 3),
    ) {
        let moved = |v: &[f64]| -> Vec<f64> { a.mul_vec(v).unwrap().iter().zip(&b).map(|(p, q)| p + q).collect() };
        let sigma_a = SpdMatrix::new(a.matmul(&sigma).unwrap().matmul(&a.transpose()).unwrap()).unwrap();
        let sigma = SpdMatrix::new(sigma).unwrap();
        let s0 = mahalanobis_sq(&x, &mu, &sigma).unwrap();
        let s1 = mahalanobis_sq(&moved(&x), &moved(&mu), &sigma_a).unwrap();
        prop_assert!((s0 - s1).abs() <= 1e-8 * s0.max(1.0), "{s0} vs {s1}");
        let expect = log_det(&sigma) + 2.0 * a.determinant().abs().ln();
        prop_assert!((log_det(&sigma_a) - expect).abs() < 1e-9);
    }

    #[test]
    fn repair_reaches_floor(v in prop::collection::vec(-3.0f64..3.0, 9), floor in 1e-6f64..0.5) {
        let m = Matrix::from_rows(&v.chunks(3).map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap();
        let repaired = spd_repair(&m, floor).unwrap();
        let lam = min_eigenvalue(repaired.matrix());
        prop_assert!(lam >= floor * (1.0 - 1e-6), "{lam} < {floor}");
    }

    #[test]
    fn repair_leaves_well_conditioned_input_alone(a in spd(3)) {
        let repaired = spd_repair(&a, 1e-10).unwrap();
        prop_assert!(repaired.matrix().sub(&a).unwrap().frobenius_norm() <= 1e-14 * a.frobenius_norm());
    }

    #[test]
    fn lq_weights_order_by_distance(
        s1 in 0.0f64..1e4,
        gap in 1e-3f64..1e4,
        nu in 0.2f64..100.0,
        p in 1usize..6,
        q in 0.5f64..1.0,
    ) {
        let (w1, v1) = mlq_weights(s1, nu, p, q).unwrap();
        let (w2, v2) = mlq_weights(s1 + gap, nu, p, q).unwrap();
        prop_assert!(w1 > w2);
        prop_assert!(v1 > v2);
        // extra Lq factor relative to the likelihood weight is exactly v
        let ml = (nu + p as f64) / (nu + s1);
        prop_assert!((w1 / ml - v1).abs() <= 1e-12 * v1);
    }

    #[test]
    fn lq_weights_reduce_to_likelihood_weights(s in 0.0f64..1e6, nu in 0.2f64..100.0, p in 1usize..6) {
        let (w, v) = mlq_weights(s, nu, p, 1.0).unwrap();
        prop_assert!((w - (nu + p as f64) / (nu + s)).abs() <= 1e-14 * w);
        prop_assert_eq!(v, 1.0);
    }

    #[test]
    fn conditional_expectations_are_consistent(s in 0.0f64..1e5, nu in 0.2f64..150.0, p in 1usize..6) {
        let eu = cond_expect_u(s, nu, p).unwrap();
        let elog = cond_expect_log_u(s, nu, p).unwrap();
        prop_assert!(eu > 0.0);
        // Jensen: E log U < log E U
        prop_assert!(elog < eu.ln());
    }

    #[test]
    fn e_step_matches_pointwise_operations(rows in prop::collection::vec(prop::collection::vec(-10.0f64..10.0, 2), 1..20), nu in 0.5f64..30.0) {
        let data = Dataset64::from_rows(&rows).unwrap();
        let sigma = SpdMatrix::from_rows(&[vec![1.5, 0.3], vec![0.3, 0.8]]).unwrap();
        let params = MvtParams64::new(vec![0.5, -1.0], sigma, nu).unwrap();
        let est = e_step(&data, &params).unwrap();
        let u2 = est.u2.as_ref().unwrap();
        for (i, x) in data.rows().enumerate() {
            let s = params.mahalanobis_sq(x).unwrap();
            prop_assert_eq!(est.s[i], s);
            prop_assert_eq!(est.u1[i], cond_expect_u(s, nu, 2).unwrap());
            prop_assert_eq!(u2[i], cond_expect_log_u(s, nu, 2).unwrap());
        }
    }

    #[test]
    fn lq_transform_approaches_log(u in 1e-200f64..1e200) {
        let exact = u.ln();
        let near = lq_transform(u, 1.0 - 1e-9).unwrap();
        prop_assert!((near - exact).abs() <= 1e-6 * exact.abs().max(1.0) * exact.abs().max(1.0));
        prop_assert_eq!(lq_transform(u, 1.0).unwrap(), exact);
    }

    #[test]
    fn brent_finds_cubic_roots(r in -5.0f64..5.0, c in 0.1f64..4.0) {
        // (x − r)(x² + c) has a single real root at r
        let g = |x: f64| -> robust_t::Result<f64> { Ok((x - r) * (x * x + c)) };
        let root = brent(g, -10.0, 10.0, 1e-12, 1e-14, 200).unwrap();
        prop_assert!(root.bracketed);
        prop_assert!((root.x - r).abs() < 1e-9, "{} vs {r}", root.x);
    }
}
