use fraclaws::config::{DiffusionKind, NoiseKind, Regularization, Shape};
use fraclaws::{parse_config, Experiment};
use fraclaws_core::experiments::PerturbationKind;
use fraclaws_core::solver::FluxScheme;
use proptest::prelude::*;

#[test]
fn minimal_config_takes_documented_defaults() {
    let c = parse_config("experiment = simulate\n").unwrap();
    assert_eq!(c.experiment, Experiment::Simulate);
    assert_eq!(c.seed, 0);
    assert_eq!(c.grid_m, 128);
    assert_eq!(c.solver.lambda, Some(0.5));
    assert_eq!(c.solver.tau, 0.01);
    assert_eq!(c.solver.dt, None);
    assert_eq!(c.solver.t_end, 1.0);
    assert_eq!(c.solver.flux_scheme, FluxScheme::LaxFriedrichs);
    assert_eq!(c.solver.regularization, Regularization::Linked);
    assert_eq!(c.solver.snapshot_times.len(), 11);
    assert_eq!(c.diffusion.kind, DiffusionKind::Holder);
    assert_eq!(c.diffusion.gamma, 0.6);
    assert_eq!(c.noise.kind, NoiseKind::Multiplicative);
    assert_eq!((c.noise.amplitude, c.noise.truncation), (0.2, 16));
    assert_eq!(c.initial.shape, Shape::Sin);
    assert_eq!(c.initial_b.shape, Shape::Cos);
    assert_eq!(c.mc.num_mc, 128);
    assert_eq!(c.moments.p, 4.0);
    assert_eq!(c.rates.kind, PerturbationKind::Diffusion);
    assert_eq!(c.rates.t_eval, 1.0);
    assert_eq!(c.kinetic.num_paths, 8);
    assert_eq!(c.sweep.taus, vec![1e-2, 5e-3, 2.5e-3]);
    assert!((c.operator.r - std::f64::consts::TAU / 128.0).abs() < 1e-15);
    assert_eq!(c.operator.z_max, 50.0);
    let t = c.tolerances();
    assert_eq!((t.relative, t.se_multiplier, t.slope), (0.05, 3.0, 0.15));
}

#[test]
fn sections_and_dotted_keys_agree() {
    let a = parse_config("experiment = bv\n[solver]\nlambda = 0.3\n[grid]\nm = 64\n").unwrap();
    let b = parse_config("experiment = bv\nsolver.lambda = 0.3\ngrid.m = 64\n").unwrap();
    assert_eq!(a, b);
}

#[test]
fn comments_brackets_and_keywords() {
    let c = parse_config(
        "# header\nexperiment = rates # trailing\n[solver]\nlambda = off\ndt = 0.001\nregularization = 0.5\n\
         t_end = 2\nsnapshot_times = [1.5, 0.5]\n[rates]\neps = [0.1, 0.2]\nt_eval = 1.5\n",
    )
    .unwrap();
    assert_eq!(c.solver.lambda, None);
    assert_eq!(c.solver.dt, Some(0.001));
    assert_eq!(c.solver.regularization, Regularization::Fixed(0.5));
    assert_eq!(c.solver.snapshot_times, vec![0.0, 0.5, 1.5, 2.0]);
    assert_eq!(c.rates.eps, vec![0.1, 0.2]);
    assert_eq!(c.rates.t_eval, 1.5);
}

#[test]
fn out_of_range_lambda_is_reported_with_its_line() {
    let e = parse_config("experiment = simulate\n\n[solver]\nlambda = 1.5\n").unwrap_err();
    assert_eq!(e.line, Some(4));
    assert_eq!(e.to_string(), "line 4: `solver.lambda` = 1.5 outside allowed range (0, 1)");
}

#[test]
fn typos_get_a_suggestion() {
    let e = parse_config("experiment = simulate\n[solver]\nlamda = 0.5\n").unwrap_err();
    assert_eq!(e.to_string(), "line 3: unknown key `solver.lamda`; did you mean `solver.lambda`?");
    let e = parse_config("experiment = simulate\nzzz = 1\n").unwrap_err();
    assert_eq!(e.to_string(), "line 2: unknown key `zzz`");
}

#[test]
fn duplicates_name_the_first_line() {
    let e = parse_config("experiment = simulate\nseed = 1\n[grid]\nm = 64\n\nseed = 2\n[grid]\nm = 32\n").unwrap_err();
    assert_eq!(e.to_string(), "line 8: key `grid.m` already set on line 4");
}

#[test]
fn malformed_lines() {
    let cases = [
        ("experiment = simulate\njust words\n", "line 2: expected `key = value`, found `just words`"),
        ("experiment = simulate\n[solver\n", "line 2: unterminated section header `[solver`"),
        ("experiment = simulate\nseed =\n", "line 2: missing value for `seed`"),
        ("seed = 3\n", "missing required key `experiment`"),
        ("experiment = dance\n", "line 1: `experiment` = `dance` is not one of: simulate, verify-operator, contraction, bv, moments, rates, kinetic-residual, viscosity-sweep"),
        ("experiment = bv\ngrid.m = 100\n", "line 2: `grid.m` = 100 outside allowed range powers of two ≥ 8"),
        ("experiment = bv\nsolver.tau = abc\n", "line 2: `solver.tau` expects a number, found `abc`"),
        ("experiment = bv\nsweep.taus = 0.01, 0.02\n", "line 2: `sweep.taus` must be nonincreasing"),
        ("experiment = bv\noutput.fields = yes\n", "line 2: `output.fields` expects true or false, found `yes`"),
        ("experiment = rates\nsolver.t_end = 0.5\nrates.t_eval = 0.8\n", "line 3: `rates.t_eval` = 0.8 outside allowed range (0, t_end = 0.5]"),
        ("experiment = bv\ngrid.m = 16\ninitial.mode = 8\n", "line 3: `initial.mode` = 8 outside allowed range [0, m/2)"),
        ("experiment = bv\nsolver.snapshot_times = 0.5, 2\n", "line 2: `solver.snapshot_times` = 2 outside allowed range [0, t_end]"),
    ];
    for (text, want) in cases {
        assert_eq!(parse_config(text).unwrap_err().to_string(), want, "{text:?}");
    }
}

#[test]
fn zero_end_time_has_a_single_snapshot() {
    let c = parse_config("experiment = simulate\nsolver.t_end = 0\n").unwrap();
    assert_eq!(c.solver.snapshot_times, vec![0.0]);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn lambda_accepts_exactly_the_open_unit_interval(x in -2.0f64..3.0) {
        let r = parse_config(&format!("experiment = simulate\nsolver.lambda = {x}\n"));
        prop_assert_eq!(r.is_ok(), x > 0.0 && x < 1.0);
        if let Ok(c) = r {
            prop_assert_eq!(c.solver.lambda, Some(x));
        }
    }

    #[test]
    fn key_order_does_not_matter(seed in any::<u64>(), m_exp in 3u32..10, tau in 0.0f64..1.0) {
        let lines = [
            "experiment = contraction".to_string(),
            format!("seed = {seed}"),
            format!("grid.m = {}", 1usize << m_exp),
            format!("solver.tau = {tau}"),
        ];
        let forward = parse_config(&lines.join("\n")).unwrap();
        let mut rev = lines.to_vec();
        rev.reverse();
        let backward = parse_config(&rev.join("\n")).unwrap();
        prop_assert_eq!(&forward, &backward);
        prop_assert_eq!(forward.seed, seed);
        prop_assert_eq!(forward.grid_m, 1usize << m_exp);
    }

    #[test]
    fn snapshot_times_are_sorted_and_bracketed(ts in prop::collection::vec(0.0f64..1.0, 0..6)) {
        let list: Vec<String> = ts.iter().map(|t| t.to_string()).collect();
        let text = format!("experiment = simulate\nsolver.snapshot_times = [{}]\n", list.join(", "));
        let c = parse_config(&text).unwrap();
        let s = &c.solver.snapshot_times;
        prop_assert_eq!(s[0], 0.0);
        prop_assert_eq!(*s.last().unwrap(), 1.0);
        prop_assert!(s.windows(2).all(|w| w[0] < w[1]));
    }
}
