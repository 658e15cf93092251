//! Monte Carlo experiments confronting the solver with the quantitative
//! estimates: L¹ contraction, BV bound, moment bounds, and continuous
//! dependence rates.
//!
//! Replica `r` is driven by the path seeded with `replica_seed(cfg.seed, r)`;
//! replicas run in parallel and are reduced in ascending order, so every
//! estimate is a deterministic function of the configuration.

use std::io::{self, Write};

use rayon::prelude::*;
use serde::Serialize;

use crate::coefficients::{DiffusionSpec, FluxSpec, NoiseSpec};
use crate::error::{domain, Error, Result};
use crate::fractional::{kernel_difference_second_moment, tail_translation_term};
use crate::kinetic::{kinetic_residual, TestFunction};
use crate::real::{cst, to_f64, Real};
use crate::solver::{coupled_simulate, replica_seed, simulate_path, SamplePath, SolverConfig, SolverSettings};
use crate::stats::linear_fit;
use crate::torus::{lp_norm, total_variation, Field, TorusGrid};

pub use crate::stats::McEstimate;

/// Acceptance allowances: an estimate `e` passes against a bound `b` when
/// `e.mean ≤ b (1 + relative) + se_multiplier · e.std_error`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Tolerances {
    pub relative: f64,
    pub se_multiplier: f64,
    /// Allowed shortfall of a fitted slope below its predicted exponent.
    pub slope: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self { relative: 0.05, se_multiplier: 3.0, slope: 0.15 }
    }
}

impl Tolerances {
    pub fn allowance(&self, bound: f64, e: &McEstimate) -> f64 {
        bound * (1.0 + self.relative) + self.se_multiplier * e.std_error
    }
}

/// Estimate compared against a bound at one time.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct BoundRow {
    pub t: f64,
    pub estimate: McEstimate,
    pub bound: f64,
    pub allowance: f64,
    pub passed: bool,
}

/// Per-time table of a bounded quantity.
#[derive(Clone, Debug, Serialize)]
pub struct BoundReport {
    pub quantity: &'static str,
    pub num_mc: usize,
    pub rows: Vec<BoundRow>,
    pub passed: bool,
    /// First time at which the bound failed.
    pub violation: Option<f64>,
}

impl BoundReport {
    fn new(quantity: &'static str, num_mc: usize, rows: Vec<BoundRow>) -> Self {
        let violation = rows.iter().find(|r| !r.passed).map(|r| r.t);
        Self { quantity, num_mc, passed: violation.is_none(), rows, violation }
    }

    /// CSV `t,mean,std_error,bound,allowance,passed`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "t,mean,std_error,bound,allowance,passed")?;
        for r in &self.rows {
            writeln!(
                w,
                "{:e},{:e},{:e},{:e},{:e},{}",
                r.t, r.estimate.mean, r.estimate.std_error, r.bound, r.allowance, r.passed
            )?;
        }
        Ok(())
    }
}

fn replica_path<T: Real>(cfg: &SolverConfig<T>, steps: usize, truncation: usize, r: usize) -> SamplePath {
    SamplePath::new(replica_seed(cfg.seed(), r as u64), truncation, steps)
}

fn per_time_estimates(samples: &[Vec<f64>], num_times: usize) -> Result<Vec<McEstimate>> {
    (0..num_times)
        .map(|j| McEstimate::from_samples(&samples.iter().map(|s| s[j]).collect::<Vec<_>>()))
        .collect()
}

fn check_mc(num_mc: usize) -> Result<()> {
    if num_mc < 2 {
        return Err(domain("num_mc", num_mc as f64, "[2, ∞)"));
    }
    Ok(())
}

/// `E ‖u_A(t) - u_B(t)‖_{L¹}` against `‖u_{A,0} - u_{B,0}‖_{L¹}` at each snapshot time.
pub fn run_contraction<T: Real>(
    cfg: &SolverConfig<T>,
    u0_a: &Field<T>,
    u0_b: &Field<T>,
    num_mc: usize,
    times: &[T],
    tol: &Tolerances,
) -> Result<BoundReport> {
    check_mc(num_mc)?;
    let schedule = cfg.schedule(times)?;
    let steps = schedule.dts.len();
    let k = cfg.noise().truncation();
    let initial = to_f64(lp_norm(&u0_a.sub(u0_b), T::one())?);
    let samples: Vec<Vec<f64>> = (0..num_mc)
        .into_par_iter()
        .map(|r| {
            let path = replica_path(cfg, steps, k, r);
            let run = coupled_simulate(cfg, cfg, u0_a, u0_b, &path, times)?;
            Ok(run.distances.iter().map(|&d| to_f64(d)).collect())
        })
        .collect::<Result<_>>()?;
    let estimates = per_time_estimates(&samples, schedule.times.len())?;
    let rows = schedule
        .times
        .iter()
        .zip(estimates)
        .map(|(&t, e)| {
            let allowance = tol.allowance(initial, &e);
            BoundRow { t: to_f64(t), estimate: e, bound: initial, allowance, passed: e.mean <= allowance }
        })
        .collect();
    Ok(BoundReport::new("l1_distance", num_mc, rows))
}

fn require_homogeneous<T: Real>(noise: &NoiseSpec<T>) -> Result<()> {
    if !noise.spatially_homogeneous {
        return Err(Error::Incompatible(format!(
            "noise `{}` depends on x; this experiment needs Φ = Φ(u)",
            noise.name()
        )));
    }
    Ok(())
}

/// `E TV(u(t))` against `TV(u₀)`.
pub fn run_bv<T: Real>(
    cfg: &SolverConfig<T>,
    u0: &Field<T>,
    num_mc: usize,
    times: &[T],
    tol: &Tolerances,
) -> Result<BoundReport> {
    check_mc(num_mc)?;
    require_homogeneous(cfg.noise())?;
    let schedule = cfg.schedule(times)?;
    let steps = schedule.dts.len();
    let k = cfg.noise().truncation();
    let initial = to_f64(total_variation(u0));
    let samples: Vec<Vec<f64>> = (0..num_mc)
        .into_par_iter()
        .map(|r| {
            let path = replica_path(cfg, steps, k, r);
            let traj = simulate_path(cfg, u0, &path, times)?;
            Ok(traj.states.iter().map(|s| to_f64(total_variation(s))).collect())
        })
        .collect::<Result<_>>()?;
    let estimates = per_time_estimates(&samples, schedule.times.len())?;
    let rows = schedule
        .times
        .iter()
        .zip(estimates)
        .map(|(&t, e)| {
            let allowance = tol.allowance(initial, &e);
            BoundRow { t: to_f64(t), estimate: e, bound: initial, allowance, passed: e.mean <= allowance }
        })
        .collect();
    Ok(BoundReport::new("total_variation", num_mc, rows))
}

/// Discrete p = 2 energy budget of one deterministic path.
///
/// `final_energy + 2∫(fractional + diffusion + viscous + flux_work) = initial_energy`
/// up to the time-discretization remainder; explicit terms use the pre-step
/// state and implicit terms the post-step state, as the scheme does.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct EnergyLedger {
    pub initial_energy: f64,
    pub final_energy: f64,
    pub fractional: f64,
    pub diffusion: f64,
    pub viscous: f64,
    pub flux_work: f64,
    /// `|final + dissipation - initial| / initial`.
    pub relative_closure: f64,
}

/// Moment and Sobolev estimates of [`run_moments`].
#[derive(Clone, Debug, Serialize)]
pub struct MomentReport {
    pub p: f64,
    pub num_mc: usize,
    /// `E sup_t ‖u(t)‖_p^p`, the sup taken over every step.
    pub sup_moment: McEstimate,
    /// `E ∫₀^T ‖u‖²_{H^λ} dt`.
    pub h_lambda_integral: McEstimate,
    pub initial_moment: f64,
    /// `sup_moment.mean / (1 + ‖u₀‖_p^p)`.
    pub implied_constant: f64,
    pub finite: bool,
    /// Budget of the noise-free path (present when the noise vanishes).
    pub energy_ledger: Option<EnergyLedger>,
}

fn energy_ledger<T: Real>(cfg: &SolverConfig<T>, u0: &Field<T>) -> Result<EnergyLedger> {
    let mut s = cfg.to_settings();
    s.noise = NoiseSpec::none();
    s.diagnostic_p = cst(2.0);
    let det = SolverConfig::new(s)?;
    let path = det.sample_path(&[])?;
    let traj = simulate_path(&det, u0, &path, &[])?;
    let d = &traj.diagnostics;
    let (mut frac, mut diff, mut visc, mut work) = (0.0, 0.0, 0.0, 0.0);
    for w in d.windows(2) {
        let dt = w[1].t - w[0].t;
        diff += 2.0 * dt * w[0].diffusion_dissipation;
        work += 2.0 * dt * w[0].flux_work;
        frac += 2.0 * dt * w[1].fractional_dissipation;
        visc += 2.0 * dt * w[1].viscous_dissipation;
    }
    let initial = d[0].l2 * d[0].l2;
    let last = d[d.len() - 1].l2;
    let final_energy = last * last;
    let relative_closure = if initial > 0.0 {
        (final_energy + frac + diff + visc + work - initial).abs() / initial
    } else {
        0.0
    };
    Ok(EnergyLedger {
        initial_energy: initial,
        final_energy,
        fractional: frac,
        diffusion: diff,
        viscous: visc,
        flux_work: work,
        relative_closure,
    })
}

pub fn run_moments<T: Real>(cfg: &SolverConfig<T>, u0: &Field<T>, num_mc: usize, p: T) -> Result<MomentReport> {
    check_mc(num_mc)?;
    if !(p >= cst(2.0) && p.is_finite()) {
        return Err(domain("p", to_f64(p), "[2, ∞)"));
    }
    let mut s = cfg.to_settings();
    s.diagnostic_p = p;
    let run_cfg = SolverConfig::new(s)?;
    let steps = run_cfg.schedule(&[])?.dts.len();
    let k = run_cfg.noise().truncation();
    let pf = to_f64(p);
    let samples: Vec<(f64, f64)> = (0..num_mc)
        .into_par_iter()
        .map(|r| {
            let path = replica_path(&run_cfg, steps, k, r);
            let traj = simulate_path(&run_cfg, u0, &path, &[])?;
            let d = &traj.diagnostics;
            let sup = d.iter().map(|row| row.lp.powf(pf)).fold(0.0, f64::max);
            let integral: f64 = d.windows(2).map(|w| (w[1].t - w[0].t) * w[0].h_lambda_sq).sum();
            Ok((sup, integral))
        })
        .collect::<Result<_>>()?;
    let sup_moment = McEstimate::from_samples(&samples.iter().map(|s| s.0).collect::<Vec<_>>())?;
    let h_lambda_integral = McEstimate::from_samples(&samples.iter().map(|s| s.1).collect::<Vec<_>>())?;
    let initial_moment = to_f64(lp_norm(u0, p)?).powf(pf);
    let finite = sup_moment.mean.is_finite() && h_lambda_integral.mean.is_finite();
    let energy_ledger = if cfg.noise().is_zero() { Some(energy_ledger(cfg, u0)?) } else { None };
    Ok(MomentReport {
        p: pf,
        num_mc,
        sup_moment,
        h_lambda_integral,
        initial_moment,
        implied_constant: sup_moment.mean / (1.0 + initial_moment),
        finite,
        energy_ledger,
    })
}

/// Structural exponents entering the continuous dependence rate.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct RatePrediction {
    /// Hölder exponent of the second flux derivative modulus.
    pub lambda_g1: f64,
    /// Noise continuity exponent.
    pub lambda_g2: f64,
    /// Hölder exponent of the second diffusion root.
    pub gamma_b: f64,
}

impl RatePrediction {
    pub fn new(lambda_g1: f64, lambda_g2: f64, gamma_b: f64) -> Result<Self> {
        if !(lambda_g1 > 0.0) {
            return Err(domain("lambda_g1", lambda_g1, "(0, ∞)"));
        }
        if !(lambda_g2 > 0.0) {
            return Err(domain("lambda_g2", lambda_g2, "(0, ∞)"));
        }
        if !(gamma_b > 0.5) {
            return Err(domain("gamma_b", gamma_b, "(1/2, ∞)"));
        }
        Ok(Self { lambda_g1, lambda_g2, gamma_b })
    }

    /// Exponents declared by the second equation's coefficients.
    pub fn from_coefficients<T: Real>(flux: &FluxSpec<T>, noise: &NoiseSpec<T>, diffusion: &DiffusionSpec<T>) -> Result<Self> {
        let g1 = flux.holder_exponent_f1.map_or(1.0, to_f64);
        let g2 = noise.lipschitz_exponent.map_or(1.0, to_f64);
        Self::new(g1, g2, to_f64(diffusion.holder_exponent))
    }

    pub fn predicted_exponent(&self) -> f64 {
        predicted_exponent(self)
    }
}

/// `min{1/2, λ_G1/2, λ_G2, γ_b/2}`.
pub fn predicted_exponent(rp: &RatePrediction) -> f64 {
    0.5f64.min(rp.lambda_g1 / 2.0).min(rp.lambda_g2).min(rp.gamma_b / 2.0)
}

/// Which datum of the second equation is perturbed.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum PerturbationKind {
    /// `v₀ = u₀ + ε·bump`.
    Initial,
    /// `β = λ + ε`.
    Lambda,
    /// `G' = F' + ε`.
    Flux,
    /// `Ψ = Φ + ε`.
    Noise,
    /// `τ = σ + ε`.
    Diffusion,
}

impl PerturbationKind {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Initial => "initial",
            Self::Lambda => "lambda",
            Self::Flux => "flux",
            Self::Noise => "noise",
            Self::Diffusion => "diffusion",
        }
    }
}

/// Bump used by [`PerturbationKind::Initial`]: `exp(-4 (x - π)²)`.
pub fn initial_bump<T: Real>(x: T) -> T {
    let d = x - T::PI();
    (cst::<T>(-4.0) * d * d).exp()
}

/// Options of [`run_continuous_dependence`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct RateOptions {
    /// Split radius between the small-jump moment and the tail term.
    pub r1: f64,
    pub tolerances: Tolerances,
}

impl Default for RateOptions {
    fn default() -> Self {
        Self { r1: 1.0, tolerances: Tolerances::default() }
    }
}

/// One perturbation size of a rate study.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct RateRow {
    pub epsilon: f64,
    /// Perturbation size entering the fit (the ε-dependent part of the right side).
    pub size: f64,
    pub distance: McEstimate,
    /// Right side of the estimate with unit constant.
    pub envelope: f64,
    /// `C_T · envelope` plus the standard-error allowance.
    pub envelope_allowance: f64,
    pub below_envelope: bool,
    pub usable: bool,
}

/// Log-log least-squares fit of distance against perturbation size.
#[derive(Clone, Debug, Serialize)]
pub struct RateFit {
    pub sizes: Vec<f64>,
    pub distances: Vec<McEstimate>,
    pub fitted_slope: f64,
    pub slope_std_error: f64,
}

/// Outcome of [`run_continuous_dependence`].
#[derive(Clone, Debug, Serialize)]
pub struct RateReport {
    pub kind: PerturbationKind,
    pub t_eval: f64,
    pub num_mc: usize,
    pub prediction: RatePrediction,
    pub predicted_exponent: f64,
    /// Exponent the fit is held to: 1 for initial data and flux, the predicted exponent otherwise.
    pub asserted_exponent: f64,
    pub rows: Vec<RateRow>,
    pub fit: RateFit,
    /// Fitted constant anchoring the envelope at the largest size.
    pub c_t: f64,
    pub slope_passed: bool,
    pub envelope_passed: bool,
    pub passed: bool,
}

impl RateReport {
    /// CSV `epsilon,size,mean,std_error,envelope`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "epsilon,size,mean,std_error,envelope")?;
        for r in &self.rows {
            writeln!(
                w,
                "{:e},{:e},{:e},{:e},{:e}",
                r.epsilon,
                r.size,
                r.distance.mean,
                r.distance.std_error,
                self.c_t * r.envelope
            )?;
        }
        Ok(())
    }
}

/// Perturbed second equation and the data-difference terms of the right side.
struct Perturbed<T: Real> {
    settings: SolverSettings<T>,
    v0: Field<T>,
    initial_term: f64,
    flux_term: f64,
    composite: f64,
    tail: f64,
}

fn perturb<T: Real>(
    kind: PerturbationKind,
    base: &SolverConfig<T>,
    u0: &Field<T>,
    eps: f64,
    r1: f64,
) -> Result<Perturbed<T>> {
    let mut s = base.to_settings();
    s.dt = None;
    let e = cst::<T>(eps);
    let mut out = Perturbed {
        settings: s.clone(),
        v0: u0.clone(),
        initial_term: 0.0,
        flux_term: 0.0,
        composite: 0.0,
        tail: 0.0,
    };
    match kind {
        PerturbationKind::Initial => {
            let bump = Field::from_fn(*u0.grid(), initial_bump);
            out.v0 = u0.add(&bump.scaled(e));
            out.initial_term = to_f64(lp_norm(&out.v0.sub(u0), T::one())?);
        }
        PerturbationKind::Lambda => {
            let lambda = base
                .lambda()
                .ok_or_else(|| Error::Incompatible("lambda perturbation needs an active fractional term".into()))?;
            let (l, b) = (to_f64(lambda), to_f64(lambda) + eps);
            if !(b > 0.0 && b < 1.0) {
                return Err(domain("lambda + epsilon", b, "(0, 1)"));
            }
            out.settings.lambda = Some(cst(b));
            out.composite = kernel_difference_second_moment(l, b, r1)?.sqrt();
            out.tail = 2.0 * tail_translation_term(u0, l, b, r1)?;
        }
        PerturbationKind::Flux => {
            out.settings.flux = s.flux.tilted(e);
            out.flux_term = eps.abs();
        }
        PerturbationKind::Noise => {
            out.settings.noise = s.noise.shifted(e);
            out.composite = eps.abs();
        }
        PerturbationKind::Diffusion => {
            out.settings.diffusion = s.diffusion.shifted(e);
            out.composite = eps.abs();
        }
    }
    Ok(out)
}

/// Rate study of `E ‖u(t_eval) - v(t_eval)‖_{L¹}` over perturbation sizes `eps_list`.
///
/// Both equations share one step size (the smallest stable one among all
/// configurations) and one Brownian path per replica. The envelope is the
/// right side of the estimate with unit constant; `C_T` is fitted at the
/// largest size.
pub fn run_continuous_dependence<T: Real>(
    kind: PerturbationKind,
    base: &SolverConfig<T>,
    u0: &Field<T>,
    eps_list: &[f64],
    num_mc: usize,
    t_eval: T,
    options: &RateOptions,
) -> Result<RateReport> {
    check_mc(num_mc)?;
    require_homogeneous(base.noise())?;
    if !(t_eval > T::zero() && t_eval <= base.t_end()) {
        return Err(domain("t_eval", to_f64(t_eval), "(0, t_end]"));
    }
    if eps_list.iter().any(|e| !e.is_finite() || *e < 0.0) {
        return Err(Error::Incompatible("perturbation sizes must be finite and nonnegative".into()));
    }
    let perturbed = eps_list
        .iter()
        .map(|&eps| perturb(kind, base, u0, eps, options.r1))
        .collect::<Result<Vec<_>>>()?;
    let mut dt = base.dt();
    for p in &perturbed {
        dt = dt.min(SolverConfig::new(p.settings.clone())?.dt());
    }
    let mut base_settings = base.to_settings();
    base_settings.dt = Some(dt);
    base_settings.retain_steps = false;
    let base_cfg = SolverConfig::new(base_settings)?;
    let configs = perturbed
        .iter()
        .map(|p| {
            let mut s = p.settings.clone();
            s.dt = Some(dt);
            s.retain_steps = false;
            SolverConfig::new(s)
        })
        .collect::<Result<Vec<_>>>()?;
    let prediction = {
        let last = configs.last().unwrap_or(&base_cfg);
        RatePrediction::from_coefficients(last.raw_flux(), last.noise(), last.diffusion())?
    };
    let predicted = prediction.predicted_exponent();
    let asserted = match kind {
        PerturbationKind::Initial | PerturbationKind::Flux => 1.0,
        _ => predicted,
    };
    let times = [t_eval];
    let steps = base_cfg.schedule(&times)?.dts.len();
    let k = configs.iter().map(|c| c.noise().truncation()).chain([base_cfg.noise().truncation()]).max().unwrap_or(0);
    let samples: Vec<Vec<f64>> = (0..num_mc)
        .into_par_iter()
        .map(|r| {
            let path = replica_path(&base_cfg, steps, k, r);
            let reference = simulate_path(&base_cfg, u0, &path, &times)?;
            let u_t = reference.state_at(t_eval).expect("snapshot at t_eval").clone();
            configs
                .iter()
                .zip(&perturbed)
                .map(|(c, p)| {
                    let traj = simulate_path(c, &p.v0, &path, &times)?;
                    let v_t = traj.state_at(t_eval).expect("snapshot at t_eval");
                    Ok(to_f64(lp_norm(&u_t.sub(v_t), T::one())?))
                })
                .collect()
        })
        .collect::<Result<_>>()?;
    let distances = per_time_estimates(&samples, eps_list.len())?;

    let tol = options.tolerances;
    let mut rows: Vec<RateRow> = eps_list
        .iter()
        .zip(&perturbed)
        .zip(&distances)
        .map(|((&eps, p), d)| {
            let size = match kind {
                PerturbationKind::Initial => p.initial_term,
                PerturbationKind::Flux => p.flux_term,
                _ => p.composite,
            };
            let envelope = p.initial_term + p.flux_term + p.composite.powf(predicted) + p.tail;
            let usable = size > 0.0 && d.mean > 1e-14 && d.mean > tol.se_multiplier * d.std_error;
            RateRow {
                epsilon: eps,
                size,
                distance: *d,
                envelope,
                envelope_allowance: 0.0,
                below_envelope: true,
                usable,
            }
        })
        .collect();
    let usable: Vec<&RateRow> = rows.iter().filter(|r| r.usable).collect();
    if usable.len() < 4 {
        return Err(Error::DegenerateFit { usable: usable.len() });
    }
    let (lo, hi) = usable.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), r| (lo.min(r.size), hi.max(r.size)));
    if hi < 10.0 * lo * (1.0 - 1e-9) {
        return Err(Error::Incompatible(format!(
            "usable perturbation sizes span [{lo:e}, {hi:e}], less than one decade"
        )));
    }
    let xs: Vec<f64> = usable.iter().map(|r| r.size.ln()).collect();
    let ys: Vec<f64> = usable.iter().map(|r| r.distance.mean.ln()).collect();
    let line = linear_fit(&xs, &ys)?;
    let fit = RateFit {
        sizes: usable.iter().map(|r| r.size).collect(),
        distances: usable.iter().map(|r| r.distance).collect(),
        fitted_slope: line.slope,
        slope_std_error: line.slope_std_error,
    };
    let anchor = usable
        .iter()
        .max_by(|a, b| a.size.partial_cmp(&b.size).expect("finite sizes"))
        .expect("at least four usable rows");
    let c_t = if anchor.envelope > 0.0 { anchor.distance.mean / anchor.envelope } else { 0.0 };
    for r in rows.iter_mut() {
        r.envelope_allowance = c_t * r.envelope + tol.se_multiplier * r.distance.std_error;
        r.below_envelope = r.distance.mean <= r.envelope_allowance * (1.0 + 1e-12);
    }
    let slope_passed = fit.fitted_slope >= asserted - tol.slope;
    let envelope_passed = rows.iter().all(|r| r.below_envelope);
    Ok(RateReport {
        kind,
        t_eval: to_f64(t_eval),
        num_mc,
        prediction,
        predicted_exponent: predicted,
        asserted_exponent: asserted,
        rows,
        fit,
        c_t,
        slope_passed,
        envelope_passed,
        passed: slope_passed && envelope_passed,
    })
}

/// Normalized kinetic defect of one test function on both grids.
#[derive(Clone, Debug, Serialize)]
pub struct RefinementRow {
    pub test_function: String,
    pub coarse: McEstimate,
    pub fine: McEstimate,
    /// `coarse.mean / fine.mean`.
    pub ratio: f64,
    pub passed: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct RefinementReport {
    pub coarse_points: usize,
    pub fine_points: usize,
    pub coarse_dt: f64,
    pub fine_dt: f64,
    pub num_paths: usize,
    pub required_factor: f64,
    pub rows: Vec<RefinementRow>,
    pub passed: bool,
}

impl RefinementReport {
    /// Columns `test_function,coarse_mean,coarse_se,fine_mean,fine_se,ratio,passed`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "test_function,coarse_mean,coarse_se,fine_mean,fine_se,ratio,passed")?;
        for r in &self.rows {
            writeln!(
                w,
                "{},{:e},{:e},{:e},{:e},{:e},{}",
                r.test_function, r.coarse.mean, r.coarse.std_error, r.fine.mean, r.fine.std_error, r.ratio, r.passed
            )?;
        }
        Ok(())
    }
}

/// Kinetic defect under one simultaneous halving of `h` and `dt`.
///
/// `coarse` fixes the coarse grid; its `dt`, if set, is halved for the fine
/// run, otherwise the fine run takes its stable step and the coarse run twice
/// that. Each replica drives both runs with one Brownian path (the coarse run
/// sums pairs of fine increments). Defects are averaged over `num_paths`
/// replicas per test function.
pub fn run_kinetic_refinement<T: Real>(
    coarse: &SolverSettings<T>,
    u0: impl Fn(T) -> T + Sync,
    test_functions: &[TestFunction],
    num_paths: usize,
    required_factor: f64,
) -> Result<RefinementReport> {
    check_mc(num_paths)?;
    let mut fine_settings = coarse.clone();
    fine_settings.grid = TorusGrid::new(2 * coarse.grid.num_points())?;
    fine_settings.dt = coarse.dt.map(|d| d * cst(0.5));
    fine_settings.retain_steps = true;
    let fine_cfg = SolverConfig::new(fine_settings)?;
    let mut coarse_settings = coarse.clone();
    coarse_settings.dt = Some(fine_cfg.dt() * cst(2.0));
    coarse_settings.retain_steps = true;
    let coarse_cfg = SolverConfig::new(coarse_settings)?;
    let steps = fine_cfg.schedule(&[])?.dts.len().max(2 * coarse_cfg.schedule(&[])?.dts.len());
    let k = fine_cfg.noise().truncation();
    let u0_coarse = Field::from_fn(*coarse_cfg.grid(), &u0);
    let u0_fine = Field::from_fn(*fine_cfg.grid(), &u0);
    let samples: Vec<(Vec<f64>, Vec<f64>)> = (0..num_paths)
        .into_par_iter()
        .map(|r| {
            let path = replica_path(&fine_cfg, steps, k, r);
            let defects = |cfg: &SolverConfig<T>, u0: &Field<T>, path: &SamplePath| -> Result<Vec<f64>> {
                let traj = simulate_path(cfg, u0, path, &[])?;
                let report = kinetic_residual(&traj, cfg, test_functions)?;
                Ok(report.entries.iter().map(|e| e.normalized_defect).collect())
            };
            Ok((defects(&coarse_cfg, &u0_coarse, &path.coarsened(2))?, defects(&fine_cfg, &u0_fine, &path)?))
        })
        .collect::<Result<_>>()?;
    let rows: Vec<RefinementRow> = test_functions
        .iter()
        .enumerate()
        .map(|(j, tf)| {
            let c = McEstimate::from_samples(&samples.iter().map(|s| s.0[j]).collect::<Vec<_>>())?;
            let f = McEstimate::from_samples(&samples.iter().map(|s| s.1[j]).collect::<Vec<_>>())?;
            let ratio = if f.mean > 0.0 { c.mean / f.mean } else if c.mean > 0.0 { f64::INFINITY } else { 1.0 };
            Ok(RefinementRow { test_function: tf.name(), coarse: c, fine: f, ratio, passed: ratio >= required_factor || f.mean == 0.0 })
        })
        .collect::<Result<_>>()?;
    Ok(RefinementReport {
        coarse_points: coarse_cfg.grid().num_points(),
        fine_points: fine_cfg.grid().num_points(),
        coarse_dt: to_f64(coarse_cfg.dt()),
        fine_dt: to_f64(fine_cfg.dt()),
        num_paths,
        required_factor,
        passed: rows.iter().all(|r| r.passed),
        rows,
    })
}
