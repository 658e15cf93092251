use std::f64::consts::{PI, TAU};

use approx::assert_relative_eq;
use fraclaws_core::torus::{
    dft, h_lambda_seminorm, idft, l1_translation, lp_norm, read_binary, total_variation, write_binary, Field,
    FourierPlan, TorusGrid,
};
use proptest::prelude::*;

fn field(values: Vec<f64>) -> Field<f64> {
    let grid = TorusGrid::new(values.len()).unwrap();
    Field::new(grid, values).unwrap()
}

fn sized_values() -> impl Strategy<Value = Vec<f64>> {
    (3u32..8).prop_flat_map(|k| prop::collection::vec(-10.0f64..10.0, 1usize << k))
}

#[test]
fn norms_of_sine() {
    let grid = TorusGrid::<f64>::new(512).unwrap();
    let f = Field::from_fn(grid, f64::sin);
    // ∫|sin| = 4, ∫sin² = π, max = 1
    assert_relative_eq!(lp_norm(&f, 1.0).unwrap(), 4.0, max_relative = 1e-4);
    assert_relative_eq!(lp_norm(&f, 2.0).unwrap(), PI.sqrt(), max_relative = 1e-12);
    assert_relative_eq!(lp_norm(&f, f64::INFINITY).unwrap(), 1.0, max_relative = 1e-12);
    // ∫sin⁴ = 3π/4
    assert_relative_eq!(lp_norm(&f, 4.0).unwrap(), (0.75 * PI).powf(0.25), max_relative = 1e-12);
    assert!(lp_norm(&f, 0.5).is_err());
}

#[test]
fn total_variation_of_sine_is_four() {
    let grid = TorusGrid::<f64>::new(256).unwrap();
    assert_relative_eq!(total_variation(&Field::from_fn(grid, f64::sin)), 4.0, max_relative = 1e-3);
    let step = Field::from_fn(grid, |x| if x < PI { 1.0 } else { -1.0 });
    assert_relative_eq!(total_variation(&step), 4.0);
}

#[test]
fn seminorm_of_a_single_mode() {
    // cos(3x) has |û(±3)| = 1/2
    let grid = TorusGrid::<f64>::new(64).unwrap();
    let f = Field::from_fn(grid, |x| (3.0 * x).cos());
    let want = (2.0 * 0.25 * 3f64.powf(0.8)).sqrt();
    assert_relative_eq!(h_lambda_seminorm(&f, 0.4).unwrap(), want, max_relative = 1e-12);
}

#[test]
fn derivative_and_shift_are_spectral() {
    let grid = TorusGrid::<f64>::new(64).unwrap();
    let plan = FourierPlan::new(grid);
    let f = Field::from_fn(grid, |x| (2.0 * x).sin() + 0.5 * x.cos());
    let df = plan.derivative(&f);
    let want = Field::from_fn(grid, |x| 2.0 * (2.0 * x).cos() - 0.5 * x.sin());
    assert!(df.sub(&want).max_abs() < 1e-12);
    let sh = plan.shifted(&f, 0.7);
    let want = Field::from_fn(grid, |x| (2.0 * (x + 0.7)).sin() + 0.5 * (x + 0.7).cos());
    assert!(sh.sub(&want).max_abs() < 1e-12);
    assert!(l1_translation(&plan, &f, TAU) < 1e-10);
}

#[test]
fn binary_rejects_truncated_input() {
    let f = field(vec![1.0; 8]);
    let mut buf = Vec::new();
    write_binary(&f, &mut buf).unwrap();
    buf.truncate(buf.len() - 3);
    assert!(read_binary::<f64, _>(buf.as_slice()).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn dft_roundtrip(values in sized_values()) {
        let f = field(values);
        let back = idft(&dft(&f));
        prop_assert!(back.sub(&f).max_abs() <= 1e-12 * (1.0 + f.max_abs()));
    }

    #[test]
    fn parseval(values in sized_values()) {
        let f = field(values);
        let energy: f64 = dft(&f).coefficients().iter().map(|c| c.norm_sqr()).sum();
        let l2 = lp_norm(&f, 2.0).unwrap();
        prop_assert!((TAU * energy - l2 * l2).abs() <= 1e-9 * (1.0 + l2 * l2));
    }

    #[test]
    fn binary_roundtrip_is_exact(values in sized_values()) {
        let f = field(values);
        let mut buf = Vec::new();
        write_binary(&f, &mut buf).unwrap();
        prop_assert_eq!(buf.len(), 8 * (f.len() + 1));
        let g: Field<f64> = read_binary(buf.as_slice()).unwrap();
        prop_assert_eq!(g.values(), f.values());
    }

    #[test]
    fn norms_are_ordered_and_homogeneous(values in sized_values(), c in -5.0f64..5.0) {
        let f = field(values);
        // |T| = 2π, so ‖f‖_p ≤ (2π)^{1/p - 1/q} ‖f‖_q for p ≤ q
        let n1 = lp_norm(&f, 1.0).unwrap();
        let n2 = lp_norm(&f, 2.0).unwrap();
        let ninf = lp_norm(&f, f64::INFINITY).unwrap();
        prop_assert!(n1 <= TAU.sqrt() * n2 * (1.0 + 1e-12) + 1e-12);
        prop_assert!(n2 <= TAU.sqrt() * ninf * (1.0 + 1e-12) + 1e-12);
        let scaled = lp_norm(&f.scaled(c), 2.0).unwrap();
        prop_assert!((scaled - c.abs() * n2).abs() <= 1e-10 * (1.0 + scaled));
    }

    #[test]
    fn total_variation_is_rotation_invariant(values in sized_values(), k in 0usize..256) {
        let f = field(values);
        let tv = total_variation(&f);
        let tv_rot = total_variation(&f.rotated(k % f.len()));
        prop_assert!((tv - tv_rot).abs() <= 1e-10 * (1.0 + tv));
        // TV bounds the oscillation twice over on a circle
        prop_assert!(2.0 * (f.max_value() - f.min_value()) <= tv * (1.0 + 1e-12) + 1e-12);
    }
}
