use dynalloc::linalg;
use dynalloc::model::{dz, sat};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

fn wide_matrix() -> impl Strategy<Value = DMatrix<f64>> {
    (1usize..=3, 1usize..=3)
        .prop_flat_map(|(rows, extra)| {
            proptest::collection::vec(-1.0f64..1.0, rows * (rows + extra))
                .prop_map(move |data| DMatrix::from_row_slice(rows, rows + extra, &data))
        })
        .prop_filter("well conditioned", |m| {
            let sv = m.singular_values();
            sv.min() > 0.05 * sv.max()
        })
}

fn bounded_pair() -> impl Strategy<Value = (DVector<f64>, DVector<f64>, DVector<f64>)> {
    (1usize..=6).prop_flat_map(|n| {
        (
            proptest::collection::vec(-100.0f64..100.0, n),
            proptest::collection::vec(-100.0f64..100.0, n),
            proptest::collection::vec(0.1f64..60.0, n),
        )
            .prop_map(|(a, b, u)| (DVector::from_vec(a), DVector::from_vec(b), DVector::from_vec(u)))
    })
}

proptest! {
    #[test]
    fn kernel_basis_annihilates_and_has_full_rank(m in wide_matrix()) {
        let n = linalg::nullspace_basis(&m).unwrap();
        prop_assert_eq!(n.shape(), (m.ncols(), m.ncols() - m.nrows()));
        prop_assert!((&m * &n).amax() <= 1e-10 * m.norm().max(1.0));
        prop_assert_eq!(linalg::rank(&n), m.ncols() - m.nrows());
    }

    #[test]
    fn pseudo_inverse_is_right_inverse(m in wide_matrix()) {
        let pinv = linalg::right_pseudo_inverse(&m).unwrap();
        let residual = (&m * &pinv - DMatrix::identity(m.nrows(), m.nrows())).amax();
        prop_assert!(residual <= 1e-10);
    }

    #[test]
    fn complement_is_orthonormal(m in wide_matrix()) {
        let perp = linalg::orth_complement(&m).unwrap();
        prop_assert_eq!(perp.shape(), (m.ncols(), m.ncols() - m.nrows()));
        prop_assert!((&m * &perp).amax() <= 1e-10 * m.norm().max(1.0));
        let gram = perp.transpose() * &perp;
        prop_assert!((gram - DMatrix::identity(perp.ncols(), perp.ncols())).amax() <= 1e-10);
    }

    #[test]
    fn saturation_is_lipschitz_and_bounded((a, b, u) in bounded_pair()) {
        let (sa, sb) = (sat(&a, &u), sat(&b, &u));
        for i in 0..a.len() {
            prop_assert!((sa[i] - sb[i]).abs() <= (a[i] - b[i]).abs());
            prop_assert!(sa[i].abs() <= u[i]);
        }
    }

    #[test]
    fn deadzone_lies_in_the_sector((a, _b, u) in bounded_pair()) {
        let d = dz(&a, &u);
        prop_assert!((sat(&a, &u) - (&a + &d)).amax() <= 1e-12);
        for i in 0..a.len() {
            // φ(φ + v) ≤ 0 componentwise
            prop_assert!(d[i] * (d[i] + a[i]) <= 0.0);
        }
    }
}
