use adabar::{build_null_basis, project_reduced_data, solve_first_order_kkt, AffineConstraint};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

/// `(A, H, g)` with `A` of full row rank `m < n`, `H` diagonal positive.
fn kkt_case() -> impl Strategy<Value = (DMatrix<f64>, DMatrix<f64>, DVector<f64>)> {
    (2usize..=20).prop_flat_map(|n| {
        (0..n).prop_flat_map(move |m| {
            (
                prop::collection::vec(-1.0f64..1.0, m * n),
                prop::collection::vec(-2.0f64..2.0, n),
                prop::collection::vec(-5.0f64..5.0, n),
            )
                .prop_map(move |(a, d, g)| {
                    (
                        DMatrix::from_vec(m, n, a),
                        DMatrix::from_diagonal(&DVector::from_vec(d).map(|t| (2.0 * t).exp())),
                        DVector::from_vec(g),
                    )
                })
        })
    })
}

fn bordered(h: &DMatrix<f64>, a: &DMatrix<f64>, g: &DVector<f64>) -> (DVector<f64>, DVector<f64>) {
    let (m, n) = a.shape();
    let mut k = DMatrix::zeros(n + m, n + m);
    k.view_mut((0, 0), (n, n)).copy_from(h);
    k.view_mut((0, n), (n, m)).copy_from(&(-a.transpose()));
    k.view_mut((n, 0), (m, n)).copy_from(a);
    let mut rhs = DVector::zeros(n + m);
    rhs.rows_mut(0, n).copy_from(&(-g));
    let sol = k.lu().solve(&rhs).unwrap();
    (sol.rows(0, n).into_owned(), sol.rows(n, m).into_owned())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn reduced_matches_bordered((a, h, g) in kkt_case()) {
        let b = DVector::zeros(a.nrows());
        let basis = build_null_basis(&AffineConstraint::new(a.clone(), b).unwrap()).unwrap();
        let (v, y) = solve_first_order_kkt(&h, &basis, &g).unwrap();
        let (v_ref, y_ref) = bordered(&h, &a, &g);
        prop_assert!((&v - &v_ref).norm() <= 1e-8 * (1.0 + v_ref.norm()));
        prop_assert!((&y - &y_ref).norm() <= 1e-8 * (1.0 + y_ref.norm()));
        let vv = (&h * &v).dot(&v);
        prop_assert!((g.dot(&v) + vv).abs() <= 1e-8 * vv.max(f64::MIN_POSITIVE));
    }

    #[test]
    fn null_basis_is_orthonormal_kernel((a, _h, _g) in kkt_case()) {
        let (m, n) = a.shape();
        let basis = build_null_basis(&AffineConstraint::new(a.clone(), DVector::zeros(m)).unwrap()).unwrap();
        let z = basis.z();
        prop_assert_eq!(z.ncols(), n - m);
        prop_assert!((z.transpose() * z - DMatrix::identity(n - m, n - m)).amax() <= 1e-12);
        if m > 0 {
            prop_assert!((&a * z).amax() <= 1e-12 * (1.0 + a.amax()));
        }
    }

    #[test]
    fn reduced_data_is_congruence((a, h, g) in kkt_case()) {
        let basis = build_null_basis(&AffineConstraint::new(a.clone(), DVector::zeros(a.nrows())).unwrap()).unwrap();
        let (gr, jr, hr) = project_reduced_data(&basis, &g, &h, &h).unwrap();
        let z = basis.z();
        prop_assert!((gr - z.transpose() * &g).amax() <= 1e-12 * (1.0 + g.amax()));
        prop_assert!((jr - &hr).amax() == 0.0);
        prop_assert!((hr - z.transpose() * &h * z).amax() <= 1e-10 * (1.0 + h.amax()));
    }
}

#[test]
fn square_system_gives_zero_direction() {
    let a = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 3.0]);
    let basis = build_null_basis(&AffineConstraint::new(a.clone(), DVector::zeros(2)).unwrap()).unwrap();
    let h = DMatrix::identity(2, 2);
    let g = DVector::from_column_slice(&[1.0, -1.0]);
    let (v, y) = solve_first_order_kkt(&h, &basis, &g).unwrap();
    assert_eq!(v, DVector::zeros(2));
    assert!((a.transpose() * y - g).norm() <= 1e-14);
}
