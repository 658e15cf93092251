use approx::assert_relative_eq;
use fraclaws_core::coefficients::{
    check_hypotheses, decaying_weights, regularize_flux, tabulated_from_csv, DiffusionSpec, FluxSpec, NoiseSpec,
};
use proptest::prelude::*;

fn xi_grid() -> Vec<f64> {
    (0..=80).map(|i| -2.0 + 0.05 * i as f64).collect()
}

#[test]
fn primitives_of_a_capped_power_are_closed_form() {
    // σ = s min(|ξ|^γ, 1): B = s² sgn ξ |ξ|^{2γ+1}/(2γ+1) and G = s sgn ξ |ξ|^{γ+1}/(γ+1) on |ξ| ≤ 1
    let (s, gamma) = (0.8, 0.6);
    let d = DiffusionSpec::holder(s, gamma);
    for xi in [-0.9, -0.4, 0.05, 0.3, 0.75, 1.0] {
        let sg = f64::signum(xi);
        let b = s * s * sg * xi.abs().powf(2.0 * gamma + 1.0) / (2.0 * gamma + 1.0);
        let g = s * sg * xi.abs().powf(gamma + 1.0) / (gamma + 1.0);
        assert_relative_eq!(d.big_b(xi), b, max_relative = 1e-6, epsilon = 1e-10);
        assert_relative_eq!(d.big_g(xi), g, max_relative = 1e-6, epsilon = 1e-10);
    }
    // beyond the cap both grow linearly
    assert_relative_eq!(d.big_b(3.0) - d.big_b(2.0), s * s, max_relative = 1e-9);
    assert_relative_eq!(d.big_g(3.0) - d.big_g(2.0), s, max_relative = 1e-9);
}

#[test]
fn regularized_linear_flux_is_exact_inside_the_cutoff() {
    let f = regularize_flux(&FluxSpec::linear(1.5), 0.1).unwrap();
    for xi in [-9.0, -1.0, 0.0, 0.4, 9.5] {
        assert_relative_eq!(f.eval(xi), 1.5 * xi, max_relative = 1e-12, epsilon = 1e-14);
        assert_relative_eq!(f.deriv(xi), 1.5, max_relative = 1e-12);
    }
    assert_eq!(f.eval(11.5), 0.0);
    assert_eq!(f.deriv(-11.5), 0.0);
    assert!(f.lipschitz().unwrap() >= 1.5);
}

#[test]
fn noise_weights_are_normalised() {
    let w = decaying_weights::<f64>(12);
    assert_relative_eq!(w.iter().map(|v| v * v).sum::<f64>(), 1.0, max_relative = 1e-14);
    assert!(w.windows(2).all(|p| p[1] < p[0]));
    assert_relative_eq!(w[1] / w[0], 0.25, max_relative = 1e-14);
}

#[test]
fn noise_squared_amplitudes() {
    let m = NoiseSpec::multiplicative(0.4, 6);
    assert_relative_eq!(m.beta_sq(1.0, 2.0), 0.16 * 4.0, max_relative = 1e-12);
    let a = NoiseSpec::additive(0.3, 6);
    assert_relative_eq!(a.beta_sq(0.2, -5.0), 0.09, max_relative = 1e-12);
    // averaging 2cos²(kx) over x recovers the homogeneous amplitude
    let s = NoiseSpec::multiplicative_spatial(0.4, 3, 2.0);
    let n = 720;
    let mean: f64 = (0..n).map(|i| s.beta_sq(i as f64 * std::f64::consts::TAU / n as f64, 1.5)).sum::<f64>() / n as f64;
    assert_relative_eq!(mean, 0.16 * 2.25, max_relative = 1e-10);
}

#[test]
fn hypothesis_checks_flag_each_violation() {
    let grid = xi_grid();
    let none = NoiseSpec::none();
    let good = check_hypotheses(&FluxSpec::burgers(), &DiffusionSpec::porous(0.5), &none, &grid).unwrap();
    assert!(good.all_passed(), "{good:?}");
    let jump = check_hypotheses(&FluxSpec::burgers(), &DiffusionSpec::indicator(1.0, 0.5), &none, &grid).unwrap();
    assert!(!jump.entry("diffusion-holder").unwrap().passed);
    assert!(jump.entry("flux-growth").unwrap().passed);
    // a flux growing faster than declared
    let cubic = FluxSpec::new("cubic", |x: f64| x * x * x, |x: f64| 3.0 * x * x, 2.0, 1.0);
    let rep = check_hypotheses(&cubic, &DiffusionSpec::none(), &none, &grid).unwrap();
    assert!(!rep.entry("flux-growth").unwrap().passed);
    assert!(check_hypotheses(&cubic, &DiffusionSpec::none(), &none, &[]).is_err());
}

#[test]
fn tabulated_tables_reject_bad_input() {
    assert!(tabulated_from_csv::<f64>("xi,F,sigma\n0,0,0\n1,1,1\n").is_err());
    assert!(tabulated_from_csv::<f64>("0,0,0\n1,1,1\n0.5,2,2\n").is_err());
    assert!(tabulated_from_csv::<f64>("0,0,0\n1,1\n2,2,2\n").is_err());
    assert!(tabulated_from_csv::<f64>("0,0,0\n1,x,1\n2,2,2\n").is_err());
    let (f, d) = tabulated_from_csv::<f64>("# comment\nxi,F,sigma\n-1,0.5,1\n0,0,0\n1,0.5,1\n").unwrap();
    assert_relative_eq!(f.eval(1.0), 0.5);
    assert_relative_eq!(d.sigma(0.5), 0.5);
    assert_relative_eq!(d.sigma(7.0), 1.0);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn primitives_are_monotone_with_the_right_slope(scale in 0.05f64..2.0, gamma in 0.05f64..1.0, a in -3.0f64..3.0, b in -3.0f64..3.0) {
        let d = DiffusionSpec::holder(scale, gamma);
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        prop_assert!(d.big_b(lo) <= d.big_b(hi) + 1e-12);
        prop_assert!(d.big_g(lo) <= d.big_g(hi) + 1e-12);
        // B' = A and G' = σ away from the kink at 0
        let x = if a.abs() < 0.1 { a + 0.2 } else { a };
        let e = 1e-5;
        let db = (d.big_b(x + e) - d.big_b(x - e)) / (2.0 * e);
        let dg = (d.big_g(x + e) - d.big_g(x - e)) / (2.0 * e);
        prop_assert!((db - d.a_of(x)).abs() <= 1e-4 * (1.0 + d.a_of(x)));
        prop_assert!((dg - d.sigma(x)).abs() <= 1e-4 * (1.0 + d.sigma(x)));
    }

    #[test]
    fn regularized_burgers_slope_is_the_identity(tau in 0.02f64..0.5, xi in -1.0f64..1.0) {
        // mollifying ξ ↦ ξ with a symmetric kernel is exact
        let f = regularize_flux(&FluxSpec::burgers(), tau).unwrap();
        let x = xi * (1.0 / tau - 0.01);
        prop_assert!((f.deriv(x) - x).abs() <= 1e-10 * (1.0 + x.abs()));
    }

    #[test]
    fn shifted_noise_moves_every_mode(eps in -1.0f64..1.0, u in -3.0f64..3.0) {
        let base = NoiseSpec::multiplicative(0.3, 5);
        let sh = base.shifted(eps);
        let w = decaying_weights::<f64>(5);
        for (k, wk) in w.iter().enumerate() {
            prop_assert!((sh.beta(k, 0.0, u) - base.beta(k, 0.0, u) - eps * wk).abs() < 1e-12);
        }
    }
}
