//! Property tests for the spectral toolbox and the noise construction.

use proptest::prelude::*;
use sch::field::{Field, Norm};
use sch::make_grid;
use sch::noise::{increment_from_draws, make_noise_mesh};

fn field_values(len: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-10.0f64..10.0, len)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn transform_round_trip(values in field_values(16 * 16)) {
        let grid = make_grid(2, 16).unwrap();
        let f = Field::from_values(grid, values);
        let back = f.to_spectrum().to_field();
        let scale = f.norm(Norm::Linf).unwrap().max(1.0);
        for (a, b) in f.values().iter().zip(back.values()) {
            prop_assert!((a - b).abs() <= 1e-12 * scale);
        }
    }

    #[test]
    fn parseval_identity(values in field_values(16 * 16)) {
        let grid = make_grid(2, 16).unwrap();
        let f = Field::from_values(grid, values);
        let l2 = f.norm(Norm::L2).unwrap();
        let spec = f.to_spectrum().l2();
        prop_assert!((l2 - spec).abs() <= 1e-12 * l2.max(1.0));
    }

    #[test]
    fn interpolation_inequality(values in field_values(8 * 8)) {
        let grid = make_grid(2, 8).unwrap();
        let f = Field::from_values(grid, values);
        let m = f.mean();
        let v = f.map(|x| x - m);
        let l2 = v.norm(Norm::L2).unwrap();
        let hm1 = v.norm(Norm::Hminus1).unwrap();
        let h1 = v.norm(Norm::H1Semi).unwrap();
        prop_assert!(l2 * l2 <= hm1 * h1 * (1.0 + 1e-10) + 1e-300);
    }

    #[test]
    fn frac_laplacian_semigroup(values in field_values(8 * 8), s1 in 0.1f64..1.5, s2 in 0.1f64..1.5) {
        let grid = make_grid(2, 8).unwrap();
        let f = Field::from_values(grid, values);
        let m = f.mean();
        let v = f.map(|x| x - m);
        let a = v.frac_laplacian(s1).unwrap().frac_laplacian(s2).unwrap();
        let b = v.frac_laplacian(s1 + s2).unwrap();
        let scale = b.norm(Norm::L2).unwrap().max(1.0);
        prop_assert!(a.l2_distance(&b) <= 1e-9 * scale);
    }

    #[test]
    fn noise_increment_linearity(draws in prop::collection::vec(-3.0f64..3.0, 36), c in -2.0f64..2.0) {
        // the field is linear in the draws and the mean correction is exact
        let mesh = make_noise_mesh(2, 1.0, 0.2).unwrap(); // m = 6 -> 36 nodes
        let grid = make_grid(2, 8).unwrap();
        let a = increment_from_draws(&mesh, &grid, 1e-4, 1, draws.clone());
        let scaled: Vec<f64> = draws.iter().map(|d| c * d).collect();
        let b = increment_from_draws(&mesh, &grid, 1e-4, 1, scaled);
        for (x, y) in a.raw.values().iter().zip(b.raw.values()) {
            prop_assert!((c * x - y).abs() <= 1e-12 * x.abs().max(1.0));
        }
        prop_assert!(b.corrected.mean().abs() <= 1e-13);
    }
}
