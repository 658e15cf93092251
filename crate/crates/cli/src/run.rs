//! Experiment dispatch and output writing.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::time::Instant;

use fraclaws_core::experiments::{
    run_bv, run_contraction, run_continuous_dependence, run_kinetic_refinement, run_moments, RateOptions,
};
use fraclaws_core::fractional::{apply_spectral, spectral_symbol, QuadratureOperator, QuadratureRule};
use fraclaws_core::kinetic::{default_battery, KineticMeasureGrid, XiGrid};
use fraclaws_core::solver::{simulate_path, viscosity_sweep, SamplePath, SolverConfig};
use fraclaws_core::torus::{lp_norm, total_variation, write_csv, Field};
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::{Experiment, NoiseKind, RunConfig, Shape};

/// One checked property of an experiment.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Assertion {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Assertion {
    fn new(name: &str, passed: bool, detail: String) -> Self {
        Self { name: name.to_string(), passed, detail }
    }
}

/// Contents of `summary.json`. Only `wall_time_seconds` varies between
/// identical runs.
#[derive(Clone, Debug, Serialize)]
pub struct Summary {
    pub experiment: &'static str,
    pub versions: Value,
    pub seed: u64,
    pub config: RunConfig,
    pub results: Value,
    pub assertions: Vec<Assertion>,
    pub passed: bool,
    pub outputs: Vec<String>,
    pub wall_time_seconds: f64,
}

/// Process exit codes.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Status {
    Passed = 0,
    Fault = 1,
    AssertionFailed = 2,
}

#[derive(Debug)]
pub enum RunError {
    Core(fraclaws_core::Error),
    Io(io::Error),
    Invalid(String),
}

impl std::fmt::Display for RunError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            RunError::Core(e) => write!(f, "{e}"),
            RunError::Io(e) => write!(f, "i/o error: {e}"),
            RunError::Invalid(m) => f.write_str(m),
        }
    }
}

impl std::error::Error for RunError {}

impl From<fraclaws_core::Error> for RunError {
    fn from(e: fraclaws_core::Error) -> Self {
        RunError::Core(e)
    }
}

impl From<io::Error> for RunError {
    fn from(e: io::Error) -> Self {
        RunError::Io(e)
    }
}

type Files = Vec<(String, Vec<u8>)>;

struct Outcome {
    results: Value,
    assertions: Vec<Assertion>,
    files: Files,
}

fn csv<F: FnOnce(&mut Vec<u8>) -> io::Result<()>>(files: &mut Files, name: &str, f: F) -> io::Result<()> {
    let mut buf = Vec::new();
    f(&mut buf)?;
    files.push((name.to_string(), buf));
    Ok(())
}

/// Runs the configured experiment and writes its outputs under
/// `config.output.dir`. Returns the summary and the exit status.
pub fn run(config: &RunConfig) -> Result<(Summary, Status), RunError> {
    let start = Instant::now();
    let dir = config.output.dir.clone();
    fs::create_dir_all(&dir)?;
    let outcome = match config.experiment {
        Experiment::Simulate => simulate(config, &dir)?,
        Experiment::VerifyOperator => verify_operator(config)?,
        Experiment::Contraction => contraction(config)?,
        Experiment::Bv => bv(config)?,
        Experiment::Moments => moments(config)?,
        Experiment::Rates => rates(config)?,
        Experiment::KineticResidual => kinetic(config)?,
        Experiment::ViscositySweep => sweep(config)?,
    };
    let mut outputs = Vec::new();
    for (name, bytes) in &outcome.files {
        fs::write(dir.join(name), bytes)?;
        outputs.push(name.clone());
    }
    if config.output.fields && config.experiment == Experiment::Simulate {
        outputs.push("snapshots.bin".into());
        outputs.push("snapshots.idx.csv".into());
    }
    outputs.push("summary.json".into());
    let passed = outcome.assertions.iter().all(|a| a.passed);
    let summary = Summary {
        experiment: config.experiment.name(),
        versions: json!({ "fraclaws": env!("CARGO_PKG_VERSION"), "fraclaws-core": fraclaws_core::VERSION }),
        seed: config.seed,
        config: config.clone(),
        results: outcome.results,
        assertions: outcome.assertions,
        passed,
        outputs,
        wall_time_seconds: start.elapsed().as_secs_f64(),
    };
    let text = serde_json::to_string_pretty(&summary).map_err(|e| RunError::Invalid(e.to_string()))?;
    fs::write(summary_path(&dir), text + "\n")?;
    Ok((summary, if passed { Status::Passed } else { Status::AssertionFailed }))
}

pub fn summary_path(dir: &Path) -> PathBuf {
    dir.join("summary.json")
}

fn solver(config: &RunConfig, retain_steps: bool) -> Result<SolverConfig<f64>, RunError> {
    let mut s = config.solver_settings();
    s.retain_steps = retain_steps;
    Ok(SolverConfig::new(s)?)
}

fn simulate(config: &RunConfig, dir: &Path) -> Result<Outcome, RunError> {
    let cfg = solver(config, false)?;
    let u0 = config.initial.field(*cfg.grid());
    let times = &config.solver.snapshot_times;
    let path = cfg.sample_path(times)?;
    let traj = simulate_path(&cfg, &u0, &path, times)?;
    let snapshots: Vec<Value> = traj
        .times
        .iter()
        .zip(&traj.states)
        .map(|(&t, u)| {
            Ok(json!({
                "t": t,
                "mass": u.integral(),
                "l1": lp_norm(u, 1.0)?,
                "l2": lp_norm(u, 2.0)?,
                "tv": total_variation(u),
                "max_abs": u.max_abs(),
            }))
        })
        .collect::<Result<_, fraclaws_core::Error>>()?;
    let finite = traj.states.iter().all(Field::is_finite);
    let drift = (traj.last().integral() - u0.integral()).abs();
    let mut files = Files::new();
    csv(&mut files, "diagnostics.csv", |w| traj.write_diagnostics_csv(w))?;
    csv(&mut files, "final_state.csv", |w| write_csv(traj.last(), w))?;
    if config.output.fields {
        traj.write_snapshots(dir, "snapshots")?;
    }
    Ok(Outcome {
        results: json!({
            "dt": cfg.dt(),
            "stable_dt": cfg.stable_dt(),
            "num_steps": traj.diagnostics.len() - 1,
            "mass_drift": drift,
            "snapshots": snapshots,
        }),
        assertions: vec![Assertion::new("finite", finite, "every snapshot is finite".into())],
        files,
    })
}

fn verify_operator(config: &RunConfig) -> Result<Outcome, RunError> {
    let lambda = config
        .solver
        .lambda
        .ok_or_else(|| RunError::Invalid("verify-operator needs `solver.lambda` in (0, 1)".into()))?;
    let grid = config.grid();
    let f = config.initial.field(grid);
    let spectral = apply_spectral(&f, lambda)?;
    let rule = QuadratureRule::with_z_max(&grid, config.operator.r, config.operator.z_max)?;
    let op = QuadratureOperator::new(grid, lambda, &rule)?;
    let quad = op.apply(&f);
    let norm = lp_norm(&spectral, 2.0)?;
    let rel = |a: &Field<f64>, b: &Field<f64>| -> Result<f64, fraclaws_core::Error> {
        let d = lp_norm(&a.sub(b), 2.0)?;
        Ok(if norm > 0.0 { d / norm } else { d })
    };
    let quad_err = rel(&quad, &spectral)?;
    let mut assertions = vec![Assertion::new(
        "quadrature_matches_spectral",
        quad_err <= config.operator.tolerance,
        format!("relative L2 difference {quad_err:e} against tolerance {:e}", config.operator.tolerance),
    )];
    // a single Fourier mode has the closed form ψ(n)·(f - offset)
    let p = &config.initial;
    let mut exact_err = Value::Null;
    if matches!(p.shape, Shape::Sin | Shape::Cos) && p.mode > 0 {
        let psi = spectral_symbol(lambda, p.mode as i64)?;
        let exact = Field::from_fn(grid, |x| psi * (p.eval(x) - p.offset));
        let e = rel(&spectral, &exact)?;
        exact_err = json!(e);
        assertions.push(Assertion::new(
            "spectral_matches_symbol",
            e <= 1e-8,
            format!("relative L2 difference {e:e} against tolerance 1e-8"),
        ));
    }
    let mut files = Files::new();
    csv(&mut files, "operator.csv", |w| {
        use std::io::Write;
        writeln!(w, "x,f,spectral,quadrature")?;
        for i in 0..grid.num_points() {
            writeln!(w, "{:e},{:e},{:e},{:e}", grid.x(i), f.values()[i], spectral.values()[i], quad.values()[i])?;
        }
        Ok(())
    })?;
    Ok(Outcome {
        results: json!({
            "lambda": lambda,
            "quadrature_relative_error": quad_err,
            "spectral_relative_error": exact_err,
            "num_nodes": op.num_nodes(),
            "tail_bound": op.tail_bound(&f),
        }),
        assertions,
        files,
    })
}

fn contraction(config: &RunConfig) -> Result<Outcome, RunError> {
    let cfg = solver(config, false)?;
    let a = config.initial.field(*cfg.grid());
    let b = config.initial_b.field(*cfg.grid());
    let report = run_contraction(&cfg, &a, &b, config.mc.num_mc, &config.solver.snapshot_times, &config.tolerances())?;
    let mut files = Files::new();
    csv(&mut files, "contraction.csv", |w| report.write_csv(w))?;
    let detail = match &report.violation {
        Some(t) => format!("first violation at t = {t}"),
        None => format!("E L1 distance within allowance at all {} times", report.rows.len()),
    };
    Ok(Outcome {
        assertions: vec![Assertion::new("l1_contraction", report.passed, detail)],
        results: to_value(&report)?,
        files,
    })
}

fn bv(config: &RunConfig) -> Result<Outcome, RunError> {
    let cfg = solver(config, false)?;
    let u0 = config.initial.field(*cfg.grid());
    let report = run_bv(&cfg, &u0, config.mc.num_mc, &config.solver.snapshot_times, &config.tolerances())?;
    let mut files = Files::new();
    csv(&mut files, "bv.csv", |w| report.write_csv(w))?;
    let detail = match &report.violation {
        Some(t) => format!("first violation at t = {t}"),
        None => format!("E TV within allowance at all {} times", report.rows.len()),
    };
    Ok(Outcome {
        assertions: vec![Assertion::new("bv_bound", report.passed, detail)],
        results: to_value(&report)?,
        files,
    })
}

fn moments(config: &RunConfig) -> Result<Outcome, RunError> {
    let cfg = solver(config, false)?;
    let u0 = config.initial.field(*cfg.grid());
    let n = config.mc.num_mc;
    let p = config.moments.p;
    let first = run_moments(&cfg, &u0, n, p)?;
    let mut assertions = vec![Assertion::new(
        "moment_finite",
        first.finite,
        format!("E sup_t ||u||_p^p = {:e} ± {:e}", first.sup_moment.mean, first.sup_moment.std_error),
    )];
    let mut doubled = Value::Null;
    if config.moments.check_doubling {
        let second = run_moments(&cfg, &u0, 2 * n, p)?;
        let pooled = first.sup_moment.pooled_std_error(&second.sup_moment);
        let change = (second.sup_moment.mean - first.sup_moment.mean).abs();
        // round-off floor for runs whose sup sits at t = 0 in every replica
        let allowed = (config.tolerances.se_multiplier * pooled).max(1e-12 * (1.0 + first.sup_moment.mean.abs()));
        assertions.push(Assertion::new(
            "moment_stable_under_doubling",
            second.finite && change <= allowed,
            format!("change {change:e} against {allowed:e} ({} pooled SE)", config.tolerances.se_multiplier),
        ));
        doubled = to_value(&second)?;
    }
    // energy budget of the noise-free run
    let mut quiet = config.clone();
    quiet.noise.kind = NoiseKind::None;
    let quiet_cfg = solver(&quiet, false)?;
    let ledger = run_moments(&quiet_cfg, &u0, 2, 2.0)?
        .energy_ledger
        .ok_or_else(|| RunError::Invalid("noise-free run produced no energy ledger".into()))?;
    assertions.push(Assertion::new(
        "energy_ledger_closes",
        ledger.relative_closure <= config.tolerances.relative,
        format!("relative closure {:e} against {:e}", ledger.relative_closure, config.tolerances.relative),
    ));
    Ok(Outcome {
        results: json!({ "moments": to_value(&first)?, "doubled": doubled, "energy_ledger": to_value(&ledger)? }),
        assertions,
        files: Files::new(),
    })
}

fn rates(config: &RunConfig) -> Result<Outcome, RunError> {
    let cfg = solver(config, false)?;
    let u0 = config.initial.field(*cfg.grid());
    let options = RateOptions { r1: config.rates.r1, tolerances: config.tolerances() };
    let report = run_continuous_dependence(
        config.rates.kind,
        &cfg,
        &u0,
        &config.rates.eps,
        config.mc.num_mc,
        config.rates.t_eval,
        &options,
    )?;
    let mut files = Files::new();
    csv(&mut files, "rates.csv", |w| report.write_csv(w))?;
    let floor = report.asserted_exponent - config.tolerances.slope;
    Ok(Outcome {
        assertions: vec![
            Assertion::new(
                "fitted_slope",
                report.slope_passed,
                format!(
                    "slope {:.4} ± {:.4} against {:.4} (predicted exponent {:.4})",
                    report.fit.fitted_slope, report.fit.slope_std_error, floor, report.predicted_exponent
                ),
            ),
            Assertion::new(
                "below_envelope",
                report.envelope_passed,
                format!("C_T = {:e}, fitted at the largest usable size", report.c_t),
            ),
        ],
        results: to_value(&report)?,
        files,
    })
}

fn kinetic(config: &RunConfig) -> Result<Outcome, RunError> {
    let mut settings = config.solver_settings();
    settings.retain_steps = true;
    let battery = default_battery();
    let init = config.initial.clone();
    let report = run_kinetic_refinement(
        &settings,
        move |x| init.eval(x),
        &battery,
        config.kinetic.num_paths,
        config.kinetic.required_factor,
    )?;
    let mut files = Files::new();
    csv(&mut files, "kinetic_refinement.csv", |w| report.write_csv(w))?;
    if config.output.fields {
        // measure densities of one coarse path
        let cfg = SolverConfig::new(settings)?;
        let u0 = config.initial.field(*cfg.grid());
        let times = &config.solver.snapshot_times;
        let path = SamplePath::new(cfg.seed(), cfg.noise().truncation(), cfg.schedule(times)?.dts.len());
        let traj = simulate_path(&cfg, &u0, &path, times)?;
        let refs: Vec<&Field<f64>> = traj.states.iter().collect();
        let xi = XiGrid::covering(&refs, config.kinetic.xi_bins)?;
        let grid = KineticMeasureGrid::accumulate(&traj, &cfg, &xi)?;
        csv(&mut files, "kinetic_measures.csv", |w| grid.write_csv(w))?;
    }
    let worst = report.rows.iter().map(|r| r.ratio).fold(f64::INFINITY, f64::min);
    Ok(Outcome {
        assertions: vec![Assertion::new(
            "defect_refinement_factor",
            report.passed,
            format!("smallest ratio {worst:.4} against {}", report.required_factor),
        )],
        results: to_value(&report)?,
        files,
    })
}

fn sweep(config: &RunConfig) -> Result<Outcome, RunError> {
    let cfg = solver(config, false)?;
    let u0 = config.initial.field(*cfg.grid());
    let rows = viscosity_sweep(&cfg, &config.sweep.taus, &u0, config.mc.num_mc)?;
    let decreasing = rows.windows(2).all(|w| w[1].distance.mean < w[0].distance.mean);
    let mut files = Files::new();
    csv(&mut files, "viscosity_sweep.csv", |w| {
        use std::io::Write;
        writeln!(w, "tau_coarse,tau_fine,mean,std_error")?;
        for r in &rows {
            writeln!(w, "{:e},{:e},{:e},{:e}", r.tau_coarse, r.tau_fine, r.distance.mean, r.distance.std_error)?;
        }
        Ok(())
    })?;
    let means: Vec<String> = rows.iter().map(|r| format!("{:e}", r.distance.mean)).collect();
    Ok(Outcome {
        assertions: vec![Assertion::new(
            "distances_strictly_decreasing",
            decreasing && !rows.is_empty(),
            format!("consecutive E L1 distances [{}]", means.join(", ")),
        )],
        results: json!({ "rows": to_value(&rows)? }),
        files,
    })
}

fn to_value<S: Serialize>(s: &S) -> Result<Value, RunError> {
    serde_json::to_value(s).map_err(|e| RunError::Invalid(e.to_string()))
}
