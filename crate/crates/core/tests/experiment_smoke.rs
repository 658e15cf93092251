use fraclaws_core::coefficients::{DiffusionSpec, FluxSpec, NoiseSpec};
use fraclaws_core::experiments::{
    initial_bump, predicted_exponent, run_bv, run_continuous_dependence, run_contraction, run_kinetic_refinement,
    run_moments, McEstimate, PerturbationKind, RateOptions, RatePrediction, Tolerances,
};
use fraclaws_core::kinetic::default_battery;
use fraclaws_core::solver::{SolverConfig, SolverSettings};
use fraclaws_core::torus::{lp_norm, total_variation, Field, TorusGrid};

fn settings(m: usize, t_end: f64) -> SolverSettings<f64> {
    let mut s = SolverSettings::new(TorusGrid::new(m).unwrap(), t_end);
    s.flux = FluxSpec::burgers();
    s.lambda = Some(0.5);
    s.diffusion = DiffusionSpec::porous(0.4);
    s.noise = NoiseSpec::multiplicative(0.2, 4);
    s.state_bound = 2.0;
    s.seed = 11;
    s
}

#[test]
fn contraction_of_equal_data_is_exact() {
    let cfg = SolverConfig::new(settings(32, 0.2)).unwrap();
    let u0 = Field::from_fn(*cfg.grid(), f64::sin);
    let times = [0.0, 0.1, 0.2];
    let rep = run_contraction(&cfg, &u0, &u0, 4, &times, &Tolerances::default()).unwrap();
    assert!(rep.passed);
    assert_eq!(rep.rows.len(), 3);
    assert!(rep.rows.iter().all(|r| r.estimate.mean == 0.0 && r.bound == 0.0));
    assert!(run_contraction(&cfg, &u0, &u0, 1, &times, &Tolerances::default()).is_err());
}

#[test]
fn contraction_report_starts_at_the_initial_distance() {
    let cfg = SolverConfig::new(settings(32, 0.2)).unwrap();
    let a = Field::from_fn(*cfg.grid(), f64::sin);
    let b = Field::from_fn(*cfg.grid(), |x| 0.5 * x.cos());
    let rep = run_contraction(&cfg, &a, &b, 4, &[0.0, 0.2], &Tolerances::default()).unwrap();
    let d0 = lp_norm(&a.sub(&b), 1.0).unwrap();
    assert!((rep.rows[0].estimate.mean - d0).abs() < 1e-12);
    assert_eq!(rep.rows[0].estimate.std_error, 0.0);
    let mut csv = Vec::new();
    rep.write_csv(&mut csv).unwrap();
    let text = String::from_utf8(csv).unwrap();
    assert!(text.starts_with("t,mean,std_error,bound,allowance,passed\n"));
    assert_eq!(text.lines().count(), 3);
}

#[test]
fn bv_requires_homogeneous_noise() {
    let mut s = settings(32, 0.1);
    s.noise = NoiseSpec::multiplicative_spatial(0.2, 4, 2.0);
    let cfg = SolverConfig::new(s).unwrap();
    let u0 = Field::from_fn(*cfg.grid(), f64::sin);
    assert!(run_bv(&cfg, &u0, 4, &[0.1], &Tolerances::default()).is_err());
}

#[test]
fn bv_starts_at_the_initial_variation() {
    let cfg = SolverConfig::new(settings(32, 0.1)).unwrap();
    let u0 = Field::from_fn(*cfg.grid(), f64::sin);
    let rep = run_bv(&cfg, &u0, 4, &[0.0, 0.1], &Tolerances::default()).unwrap();
    assert!((rep.rows[0].estimate.mean - total_variation(&u0)).abs() < 1e-12);
    assert_eq!(rep.quantity, "total_variation");
}

#[test]
fn noise_free_moments_carry_an_energy_ledger() {
    let mut s = settings(64, 0.2);
    s.noise = NoiseSpec::none();
    let cfg = SolverConfig::new(s).unwrap();
    let u0 = Field::from_fn(*cfg.grid(), f64::sin);
    let rep = run_moments(&cfg, &u0, 2, 2.0).unwrap();
    assert!(rep.finite);
    // without noise every replica is the same path
    assert_eq!(rep.sup_moment.std_error, 0.0);
    let ledger = rep.energy_ledger.unwrap();
    assert!(ledger.relative_closure < 0.05, "{ledger:?}");
    assert!(ledger.final_energy < ledger.initial_energy);
    assert!(run_moments(&cfg, &u0, 2, 1.5).is_err());
}

#[test]
fn rate_prediction_rules() {
    assert!(RatePrediction::new(1.0, 1.0, 0.5).is_err());
    assert!(RatePrediction::new(0.0, 1.0, 1.0).is_err());
    assert_eq!(predicted_exponent(&RatePrediction::new(1.0, 1.0, 1.0).unwrap()), 0.5);
    assert_eq!(predicted_exponent(&RatePrediction::new(0.5, 1.0, 1.0).unwrap()), 0.25);
    assert_eq!(predicted_exponent(&RatePrediction::new(1.0, 0.2, 1.0).unwrap()), 0.2);
    assert_eq!(predicted_exponent(&RatePrediction::new(1.0, 1.0, 0.6).unwrap()), 0.3);
    let rp = RatePrediction::from_coefficients(
        &FluxSpec::<f64>::sqrt_derivative(),
        &NoiseSpec::none(),
        &DiffusionSpec::porous(1.0),
    )
    .unwrap();
    assert_eq!(rp.predicted_exponent(), 0.25);
}

#[test]
fn initial_perturbation_rates_run() {
    let mut s = settings(32, 0.2);
    s.noise = NoiseSpec::none();
    let cfg = SolverConfig::new(s).unwrap();
    let u0 = Field::from_fn(*cfg.grid(), f64::sin);
    let eps = [0.025, 0.05, 0.1, 0.25];
    let rep = run_continuous_dependence(PerturbationKind::Initial, &cfg, &u0, &eps, 4, 0.2, &RateOptions::default())
        .unwrap();
    assert_eq!(rep.rows.len(), 4);
    assert_eq!(rep.num_mc, 4);
    // without noise the scheme contracts L¹, so the distance sits below ε ‖bump‖_{L¹}
    let bump = lp_norm(&Field::from_fn(*cfg.grid(), initial_bump), 1.0).unwrap();
    for r in &rep.rows {
        assert!(r.distance.mean <= r.epsilon * bump * (1.0 + 1e-3));
    }
    assert!(rep.fit.fitted_slope > 0.5, "{}", rep.fit.fitted_slope);
    let mut csv = Vec::new();
    rep.write_csv(&mut csv).unwrap();
    assert!(String::from_utf8(csv).unwrap().lines().count() > 4);
    assert!(run_continuous_dependence(PerturbationKind::Initial, &cfg, &u0, &[-1.0], 4, 0.2, &RateOptions::default())
        .is_err());
    assert!(run_continuous_dependence(PerturbationKind::Initial, &cfg, &u0, &eps, 4, 0.5, &RateOptions::default())
        .is_err());
}

#[test]
fn refinement_report_covers_the_battery() {
    let mut s = settings(16, 0.05);
    s.viscosity = 0.01;
    let battery = default_battery();
    let rep = run_kinetic_refinement(&s, f64::sin, &battery, 2, 2.0).unwrap();
    assert_eq!((rep.coarse_points, rep.fine_points), (16, 32));
    assert!((rep.coarse_dt - 2.0 * rep.fine_dt).abs() < 1e-15);
    assert_eq!(rep.rows.len(), battery.len());
    assert!(rep.rows.iter().all(|r| r.coarse.mean >= 0.0 && r.fine.mean >= 0.0));
    let mut csv = Vec::new();
    rep.write_csv(&mut csv).unwrap();
    let text = String::from_utf8(csv).unwrap();
    assert!(text.starts_with("test_function,coarse_mean,coarse_se,fine_mean,fine_se,ratio,passed\n"));
    assert_eq!(text.lines().count(), 1 + battery.len());
}

#[test]
fn estimates_need_two_samples() {
    assert!(McEstimate::from_samples(&[1.0]).is_err());
    let e = McEstimate::from_samples(&[1.0, 3.0]).unwrap();
    assert_eq!(e.mean, 2.0);
    assert!((e.std_error - 1.0).abs() < 1e-12);
}
