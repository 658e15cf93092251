//! Semi-implicit Euler–Maruyama stepper for the viscous approximation
//!
//! ```text
//! du + ∂ₓF^τ(u) dt + g^λ[u] dt = ∂ₓ²B(u) dt + τ ∂ₓ²u dt + Σ_k β_k(x, u) dw_k
//! ```
//!
//! Flux, degenerate diffusion and noise are explicit; the fractional and
//! viscous terms are solved implicitly as one diagonal Fourier multiplier.

mod path;

use std::io::{self, Write};
use std::path::Path;

use num_complex::Complex;
use rayon::prelude::*;
use serde::Serialize;

use crate::coefficients::{regularize_flux, DiffusionSpec, FluxSpec, NoiseSpec};
use crate::error::{domain, Error, Result};
use crate::fractional::LevyKernel;
use crate::real::{cst, to_f64, Real};
use crate::stats::McEstimate;
use crate::torus::{lp_norm, total_variation, write_binary, Field, FourierPlan, TorusGrid};

pub use path::{replica_seed, splitmix64, standard_normal, PathCursor, SamplePath};

/// Safety factor applied to both explicit stability limits.
pub const CFL_SAFETY: f64 = 0.4;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum FluxScheme {
    /// Local Lax–Friedrichs (Rusanov) flux.
    LaxFriedrichs,
    EngquistOsher,
}

/// How the flux handed to the solver is regularized.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum FluxRegularization<T> {
    /// Use the flux as given.
    Raw,
    /// Regularize at the viscosity `τ` (nothing happens when `τ = 0`).
    Linked,
    /// Regularize at an independent parameter.
    Fixed(T),
}

/// User-facing solver parameters; [`SolverConfig::new`] validates them.
#[derive(Clone, Debug)]
pub struct SolverSettings<T: Real> {
    pub grid: TorusGrid<T>,
    /// Fractional exponent; `None` switches the nonlocal term off.
    pub lambda: Option<T>,
    pub viscosity: T,
    /// Time step; `None` selects the largest stable step.
    pub dt: Option<T>,
    pub t_end: T,
    pub flux: FluxSpec<T>,
    pub regularization: FluxRegularization<T>,
    pub diffusion: DiffusionSpec<T>,
    pub noise: NoiseSpec<T>,
    pub flux_scheme: FluxScheme,
    pub seed: u64,
    /// Expected bound on `|u|`, used to estimate the flux speed.
    pub state_bound: T,
    /// Keep pre-step states and increments, needed by the kinetic residual.
    pub retain_steps: bool,
    /// Exponent of the `lp` diagnostic column.
    pub diagnostic_p: T,
}

impl<T: Real> SolverSettings<T> {
    /// Inviscid, noise-free, flux-free defaults on `grid`.
    pub fn new(grid: TorusGrid<T>, t_end: T) -> Self {
        Self {
            grid,
            lambda: None,
            viscosity: T::zero(),
            dt: None,
            t_end,
            flux: FluxSpec::zero(),
            regularization: FluxRegularization::Linked,
            diffusion: DiffusionSpec::none(),
            noise: NoiseSpec::none(),
            flux_scheme: FluxScheme::LaxFriedrichs,
            seed: 0,
            state_bound: cst(4.0),
            retain_steps: false,
            diagnostic_p: cst(2.0),
        }
    }
}

/// Validated solver configuration with its derived tables.
#[derive(Clone, Debug)]
pub struct SolverConfig<T: Real> {
    settings: SolverSettings<T>,
    flux: FluxSpec<T>,
    dt: T,
    stable_dt: T,
    flux_speed: T,
    /// `ψ_λ(n) + τ n²` per FFT index.
    implicit_symbol: Vec<T>,
    symbol: Vec<T>,
    plan: FourierPlan<T>,
}

/// `CFL_SAFETY · min(h / L_F, h² / (2 (max A + 2τ)))`; infinite when neither term constrains.
pub fn stability_bound<T: Real>(grid: &TorusGrid<T>, flux_speed: T, a_max: T, viscosity: T) -> T {
    let h = grid.spacing();
    let advective = if flux_speed > T::zero() { h / flux_speed } else { T::infinity() };
    let diffusive_rate = a_max + cst::<T>(2.0) * viscosity;
    let diffusive = if diffusive_rate > T::zero() {
        h * h / (cst::<T>(2.0) * diffusive_rate)
    } else {
        T::infinity()
    };
    cst::<T>(CFL_SAFETY) * advective.min(diffusive)
}

impl<T: Real> SolverConfig<T> {
    pub fn new(settings: SolverSettings<T>) -> Result<Self> {
        let s = &settings;
        if let Some(l) = s.lambda {
            if !(l > T::zero() && l < T::one()) {
                return Err(domain("lambda", to_f64(l), "(0, 1)"));
            }
        }
        if !(s.viscosity >= T::zero() && s.viscosity.is_finite()) {
            return Err(domain("viscosity", to_f64(s.viscosity), "[0, ∞)"));
        }
        if !(s.t_end >= T::zero() && s.t_end.is_finite()) {
            return Err(domain("t_end", to_f64(s.t_end), "[0, ∞)"));
        }
        if !(s.state_bound > T::zero() && s.state_bound.is_finite()) {
            return Err(domain("state_bound", to_f64(s.state_bound), "(0, ∞)"));
        }
        if s.diagnostic_p.is_nan() || s.diagnostic_p < T::one() {
            return Err(domain("diagnostic_p", to_f64(s.diagnostic_p), "[1, ∞]"));
        }
        let reg_tau = match s.regularization {
            FluxRegularization::Raw => None,
            FluxRegularization::Linked => (s.viscosity > T::zero()).then_some(s.viscosity),
            FluxRegularization::Fixed(t) => {
                if !(t > T::zero() && t <= T::one()) {
                    return Err(domain("flux_regularization", to_f64(t), "(0, 1]"));
                }
                Some(t)
            }
        };
        let flux = match reg_tau {
            Some(t) => regularize_flux(&s.flux, t)?,
            None => s.flux.clone(),
        };
        let sampled = flux.max_speed_on(s.state_bound);
        let flux_speed = flux.lipschitz().map_or(sampled, |l| l.min(sampled));
        let stable_dt = stability_bound(&s.grid, flux_speed, s.diffusion.a_max(), s.viscosity);
        let dt = match s.dt {
            Some(dt) => {
                if !(dt > T::zero() && dt.is_finite()) {
                    return Err(domain("dt", to_f64(dt), "(0, ∞)"));
                }
                if dt > stable_dt * cst(1.0 + 1e-12) {
                    return Err(Error::Unstable { dt: to_f64(dt), bound: to_f64(stable_dt) });
                }
                dt
            }
            None if stable_dt.is_finite() => stable_dt,
            None => cst::<T>(CFL_SAFETY) * s.grid.spacing(),
        };
        let symbol = match s.lambda {
            Some(l) => LevyKernel::new(l)?.symbol_table(&s.grid),
            None => vec![T::zero(); s.grid.num_points()],
        };
        let implicit_symbol = (0..s.grid.num_points())
            .map(|k| {
                let n = cst::<T>(s.grid.mode(k) as f64);
                symbol[k] + s.viscosity * n * n
            })
            .collect();
        let plan = FourierPlan::new(s.grid);
        Ok(Self { flux, dt, stable_dt, flux_speed, implicit_symbol, symbol, plan, settings })
    }

    pub fn settings(&self) -> &SolverSettings<T> {
        &self.settings
    }

    /// Copy of the settings with the time step pinned, for building variants.
    pub fn to_settings(&self) -> SolverSettings<T> {
        let mut s = self.settings.clone();
        s.dt = Some(self.dt);
        s
    }

    pub fn grid(&self) -> &TorusGrid<T> {
        &self.settings.grid
    }

    pub fn lambda(&self) -> Option<T> {
        self.settings.lambda
    }

    pub fn viscosity(&self) -> T {
        self.settings.viscosity
    }

    pub fn dt(&self) -> T {
        self.dt
    }

    pub fn t_end(&self) -> T {
        self.settings.t_end
    }

    /// Flux used by the scheme, after regularization.
    pub fn flux(&self) -> &FluxSpec<T> {
        &self.flux
    }

    pub fn raw_flux(&self) -> &FluxSpec<T> {
        &self.settings.flux
    }

    pub fn diffusion(&self) -> &DiffusionSpec<T> {
        &self.settings.diffusion
    }

    pub fn noise(&self) -> &NoiseSpec<T> {
        &self.settings.noise
    }

    pub fn flux_scheme(&self) -> FluxScheme {
        self.settings.flux_scheme
    }

    pub fn seed(&self) -> u64 {
        self.settings.seed
    }

    /// Largest step admitted by the stability bound.
    pub fn stable_dt(&self) -> T {
        self.stable_dt
    }

    /// Speed `L_F` entering the advective limit.
    pub fn flux_speed(&self) -> T {
        self.flux_speed
    }

    /// `ψ_λ(n)` per FFT index (zero when the nonlocal term is off).
    pub fn symbol(&self) -> &[T] {
        &self.symbol
    }

    pub fn plan(&self) -> &FourierPlan<T> {
        &self.plan
    }

    /// Step sizes needed to land on every time in `times`.
    pub fn schedule(&self, times: &[T]) -> Result<Schedule<T>> {
        let times = normalize_times(times, self.t_end())?;
        let mut dts = Vec::new();
        let mut snapshot_steps = Vec::with_capacity(times.len());
        let mut t = T::zero();
        let tol = self.dt * cst(1e-9);
        for &target in &times {
            while target - t > tol {
                let rem = target - t;
                if rem <= self.dt * cst(1.0 + 1e-9) {
                    dts.push(rem);
                    t = target;
                } else {
                    dts.push(self.dt);
                    t = t + self.dt;
                }
            }
            snapshot_steps.push(dts.len());
        }
        Ok(Schedule { times, dts, snapshot_steps })
    }

    /// Sample path of this configuration's seed long enough for `times`.
    pub fn sample_path(&self, times: &[T]) -> Result<SamplePath> {
        let schedule = self.schedule(times)?;
        Ok(SamplePath::new(self.seed(), self.noise().truncation(), schedule.dts.len()))
    }
}

/// Sorted snapshot times with the step sequence reaching them.
#[derive(Clone, Debug)]
pub struct Schedule<T> {
    pub times: Vec<T>,
    pub dts: Vec<T>,
    /// Number of completed steps at each snapshot.
    pub snapshot_steps: Vec<usize>,
}

fn normalize_times<T: Real>(times: &[T], t_end: T) -> Result<Vec<T>> {
    for &t in times {
        if !(t >= T::zero() && t <= t_end) {
            return Err(domain("snapshot time", to_f64(t), "[0, t_end]"));
        }
    }
    let mut out: Vec<T> = Vec::with_capacity(times.len() + 2);
    out.push(T::zero());
    out.extend_from_slice(times);
    out.push(t_end);
    out.sort_by(|a, b| a.partial_cmp(b).expect("finite times"));
    out.dedup();
    Ok(out)
}

/// Reusable buffers for [`SolverConfig`]'s time step.
pub struct Stepper<'a, T: Real> {
    cfg: &'a SolverConfig<T>,
    buf: Vec<Complex<T>>,
    work: Vec<Complex<T>>,
    faces: Vec<T>,
    big_b: Vec<T>,
    xs: Vec<T>,
    pre: Vec<T>,
}

const EO_PANELS: usize = 4;

impl<'a, T: Real> Stepper<'a, T> {
    pub fn new(cfg: &'a SolverConfig<T>) -> Self {
        let m = cfg.grid().num_points();
        let xs = (0..m).map(|i| cfg.grid().x(i)).collect();
        Self {
            cfg,
            buf: Vec::with_capacity(m),
            work: Vec::with_capacity(m),
            faces: vec![T::zero(); m],
            big_b: vec![T::zero(); m],
            xs,
            pre: vec![T::zero(); m],
        }
    }

    /// `∫₀^v max(F', 0)` and `∫₀^v min(F', 0)` by composite Gauss–Legendre.
    fn eo_parts(&self, v: T) -> (T, T) {
        let flux = self.cfg.flux();
        let mut plus = T::zero();
        let mut minus = T::zero();
        let width = v / cst(EO_PANELS as f64);
        for p in 0..EO_PANELS {
            let a = width * cst(p as f64);
            for (z, w) in crate::quadrature::gl4_panel(to_f64(a), to_f64(a + width)) {
                let d = flux.deriv(cst(z));
                let w = cst::<T>(w);
                plus = plus + w * d.max(T::zero());
                minus = minus + w * d.min(T::zero());
            }
        }
        (plus, minus)
    }

    fn numerical_fluxes(&mut self, u: &[T]) {
        let m = u.len();
        let flux = self.cfg.flux();
        match self.cfg.flux_scheme() {
            FluxScheme::LaxFriedrichs => {
                let half = cst::<T>(0.5);
                for i in 0..m {
                    let (a, b) = (u[i], u[(i + 1) % m]);
                    let alpha = flux.deriv(a).abs().max(flux.deriv(b).abs());
                    self.faces[i] = half * (flux.eval(a) + flux.eval(b)) - half * alpha * (b - a);
                }
            }
            FluxScheme::EngquistOsher => {
                let f0 = flux.eval(T::zero());
                let parts: Vec<(T, T)> = u.iter().map(|&v| self.eo_parts(v)).collect();
                for i in 0..m {
                    self.faces[i] = f0 + parts[i].0 + parts[(i + 1) % m].1;
                }
            }
        }
    }

    /// Diffusive part of the numerical flux at each face `i + 1/2`:
    /// `½(F(u_i) + F(u_{i+1})) - H_{i+1/2}`. Zero for a central flux; for a
    /// monotone one it has the sign of `u_{i+1} - u_i`.
    pub fn numerical_diffusive_flux(&mut self, u: &[T]) -> Vec<T> {
        let m = u.len();
        let flux = self.cfg.flux();
        self.numerical_fluxes(u);
        (0..m)
            .map(|i| cst::<T>(0.5) * (flux.eval(u[i]) + flux.eval(u[(i + 1) % m])) - self.faces[i])
            .collect()
    }

    /// Advances `u` by `dt` with increments `ΔW_k`.
    pub fn advance(&mut self, u: &mut [T], dt: T, increments: &[T], step: usize, time: T) -> Result<()> {
        let cfg = self.cfg;
        let m = u.len();
        let h = cfg.grid().spacing();
        let mut pre = std::mem::take(&mut self.pre);
        pre.copy_from_slice(u);

        self.numerical_fluxes(&pre);
        let r = dt / h;
        for i in 0..m {
            let left = self.faces[(i + m - 1) % m];
            u[i] = u[i] - r * (self.faces[i] - left);
        }

        let diffusion = cfg.diffusion();
        if !diffusion.is_zero() {
            for (b, &v) in self.big_b.iter_mut().zip(pre.iter()) {
                *b = diffusion.big_b(v);
            }
            let r2 = dt / (h * h);
            for i in 0..m {
                let lap = self.big_b[(i + 1) % m] - cst::<T>(2.0) * self.big_b[i] + self.big_b[(i + m - 1) % m];
                u[i] = u[i] + r2 * lap;
            }
        }

        let noise = cfg.noise();
        let k_used = noise.truncation().min(increments.len());
        for (k, &dw) in increments.iter().enumerate().take(k_used) {
            if dw == T::zero() {
                continue;
            }
            for i in 0..m {
                u[i] = u[i] + noise.beta(k, self.xs[i], pre[i]) * dw;
            }
        }

        cfg.plan.forward_into(u, &mut self.buf);
        for (c, s) in self.buf.iter_mut().zip(&cfg.implicit_symbol) {
            *c = *c / (T::one() + dt * *s);
        }
        self.work.clear();
        self.work.extend_from_slice(&self.buf);
        cfg.plan.inverse_into(&mut self.work, u);
        self.pre = pre;

        if u.iter().any(|v| !v.is_finite()) {
            return Err(Error::BlowUp { step, time: to_f64(time + dt) });
        }
        Ok(())
    }
}

/// One step of the scheme with the configured `dt`.
pub fn step<T: Real>(u: &Field<T>, cfg: &SolverConfig<T>, increments: &[T]) -> Result<Field<T>> {
    step_with_dt(u, cfg, cfg.dt(), increments)
}

/// One step of length `dt ≤ cfg.dt()`.
pub fn step_with_dt<T: Real>(u: &Field<T>, cfg: &SolverConfig<T>, dt: T, increments: &[T]) -> Result<Field<T>> {
    check_state(u, cfg)?;
    if !(dt > T::zero() && dt <= cfg.dt() * cst(1.0 + 1e-12)) {
        return Err(domain("dt", to_f64(dt), "(0, cfg.dt]"));
    }
    let mut values = u.values().to_vec();
    Stepper::new(cfg).advance(&mut values, dt, increments, 0, T::zero())?;
    Ok(Field::from_raw(*cfg.grid(), values))
}

fn check_state<T: Real>(u: &Field<T>, cfg: &SolverConfig<T>) -> Result<()> {
    if u.grid() != cfg.grid() {
        return Err(Error::Incompatible(format!(
            "field has M = {}, configuration has M = {}",
            u.len(),
            cfg.grid().num_points()
        )));
    }
    if !u.is_finite() {
        return Err(Error::Format("initial state is not finite".into()));
    }
    Ok(())
}

/// Per-step scalar diagnostics of the state at time `t`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct StepDiagnostics {
    pub step: usize,
    pub t: f64,
    pub mass: f64,
    pub l1: f64,
    pub l2: f64,
    pub lp: f64,
    pub tv: f64,
    /// `τ ‖∂ₓu‖²`.
    pub viscous_dissipation: f64,
    /// `⟨g^λ u, u⟩`.
    pub fractional_dissipation: f64,
    /// Discrete `∫ A(u) |∂ₓu|²`, i.e. `Σ (u_{i+1} - u_i)(B_{i+1} - B_i) / h`.
    pub diffusion_dissipation: f64,
    /// `2π Σ (1 + n²)^λ |û(n)|²`.
    pub h_lambda_sq: f64,
    /// `⟨u, D_h H(u)⟩`, the energy removed by the numerical flux (zero for exact transport).
    pub flux_work: f64,
}

/// Pre-step state and increments of one step, kept when `retain_steps` is set.
#[derive(Clone, Debug)]
pub struct StepRecord<T> {
    pub t: T,
    pub dt: T,
    pub state: Field<T>,
    pub increments: Vec<T>,
}

/// Snapshots and diagnostics of one simulated path.
#[derive(Clone, Debug)]
pub struct Trajectory<T> {
    pub times: Vec<T>,
    pub states: Vec<Field<T>>,
    pub diagnostics: Vec<StepDiagnostics>,
    pub records: Option<Vec<StepRecord<T>>>,
    /// Exponent of the `lp` column.
    pub lp_exponent: f64,
}

impl<T: Real> Trajectory<T> {
    pub fn initial(&self) -> &Field<T> {
        &self.states[0]
    }

    pub fn last(&self) -> &Field<T> {
        self.states.last().expect("trajectory holds the initial state")
    }

    pub fn state_at(&self, t: T) -> Option<&Field<T>> {
        self.times.iter().position(|&s| s == t).map(|i| &self.states[i])
    }

    /// CSV with columns `step,t,mass,l1,l2,lp,tv,viscous_dissipation`.
    pub fn write_diagnostics_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "step,t,mass,l1,l2,lp,tv,viscous_dissipation")?;
        for d in &self.diagnostics {
            writeln!(
                w,
                "{},{:e},{:e},{:e},{:e},{:e},{:e},{:e}",
                d.step, d.t, d.mass, d.l1, d.l2, d.lp, d.tv, d.viscous_dissipation
            )?;
        }
        Ok(())
    }

    /// Writes all snapshots into `<dir>/<stem>.bin` back to back and an index
    /// `<dir>/<stem>.idx.csv` of `time,offset` pairs.
    pub fn write_snapshots(&self, dir: &Path, stem: &str) -> io::Result<()> {
        let mut data = Vec::new();
        let mut index = String::from("time,offset\n");
        for (t, s) in self.times.iter().zip(&self.states) {
            index.push_str(&format!("{:e},{}\n", to_f64(*t), data.len()));
            write_binary(s, &mut data)?;
        }
        std::fs::write(dir.join(format!("{stem}.bin")), data)?;
        std::fs::write(dir.join(format!("{stem}.idx.csv")), index)
    }
}

fn diagnostics<T: Real>(stepper: &mut Stepper<'_, T>, u: &[T], step: usize, t: T) -> StepDiagnostics {
    let cfg = stepper.cfg;
    let mut spectral = std::mem::take(&mut stepper.work);
    cfg.plan.forward_into(u, &mut spectral);
    stepper.numerical_fluxes(u);
    let m = u.len();
    let flux_work = (0..m)
        .map(|i| to_f64(u[i]) * to_f64(stepper.faces[i] - stepper.faces[(i + m - 1) % m]))
        .sum::<f64>();
    let grid = cfg.grid();
    let field = Field::from_raw(*grid, u.to_vec());
    let h = to_f64(grid.spacing());
    let tau = to_f64(cfg.viscosity());
    let lambda = cfg.lambda().map_or(0.0, to_f64);
    let mut grad = 0.0;
    let mut frac = 0.0;
    let mut hl = 0.0;
    for (k, c) in spectral.iter().enumerate() {
        let n = grid.mode(k) as f64;
        let e = to_f64(c.norm_sqr());
        grad += n * n * e;
        frac += to_f64(cfg.symbol[k]) * e;
        hl += (1.0 + n * n).powf(lambda) * e;
    }
    let tau2 = std::f64::consts::TAU;
    let diffusion = cfg.diffusion();
    let diffusion_dissipation = if diffusion.is_zero() {
        0.0
    } else {
        let b: Vec<f64> = u.iter().map(|&v| to_f64(diffusion.big_b(v))).collect();
        (0..m)
            .map(|i| (to_f64(u[(i + 1) % m]) - to_f64(u[i])) * (b[(i + 1) % m] - b[i]))
            .sum::<f64>()
            / h
    };
    let p = cfg.settings.diagnostic_p;
    let out = StepDiagnostics {
        step,
        t: to_f64(t),
        mass: to_f64(field.integral()),
        l1: to_f64(lp_norm(&field, T::one()).expect("p = 1")),
        l2: to_f64(lp_norm(&field, cst(2.0)).expect("p = 2")),
        lp: to_f64(lp_norm(&field, p).expect("validated exponent")),
        tv: to_f64(total_variation(&field)),
        viscous_dissipation: tau * tau2 * grad,
        fractional_dissipation: tau2 * frac,
        diffusion_dissipation,
        h_lambda_sq: tau2 * hl,
        flux_work,
    };
    stepper.work = spectral;
    out
}

/// Integrates `u0` along `path`, stopping exactly at every snapshot time.
pub fn simulate_path<T: Real>(
    cfg: &SolverConfig<T>,
    u0: &Field<T>,
    path: &SamplePath,
    snapshot_times: &[T],
) -> Result<Trajectory<T>> {
    check_state(u0, cfg)?;
    let schedule = cfg.schedule(snapshot_times)?;
    let k = cfg.noise().truncation();
    if path.truncation < k {
        return Err(Error::Incompatible(format!(
            "sample path carries {} noise modes, configuration needs {k}",
            path.truncation
        )));
    }
    if path.num_steps < schedule.dts.len() {
        return Err(Error::Incompatible(format!(
            "sample path has {} steps, schedule needs {}",
            path.num_steps,
            schedule.dts.len()
        )));
    }
    let retain = cfg.settings.retain_steps;
    let mut stepper = Stepper::new(cfg);
    let mut cursor = path.cursor();
    let mut u = u0.values().to_vec();
    let mut increments = vec![T::zero(); k];
    let mut diags = Vec::with_capacity(schedule.dts.len() + 1);
    diags.push(diagnostics(&mut stepper, &u, 0, T::zero()));
    let mut records = retain.then(|| Vec::with_capacity(schedule.dts.len()));
    let mut states = vec![u0.clone()];
    let mut t = T::zero();
    let mut next = 1;
    for (m, &dt) in schedule.dts.iter().enumerate() {
        cursor.increments(m, dt, &mut increments);
        if let Some(r) = records.as_mut() {
            r.push(StepRecord {
                t,
                dt,
                state: Field::from_raw(*cfg.grid(), u.clone()),
                increments: increments.clone(),
            });
        }
        stepper.advance(&mut u, dt, &increments, m + 1, t)?;
        t = t + dt;
        while next < schedule.times.len() && schedule.snapshot_steps[next] == m + 1 {
            t = schedule.times[next];
            states.push(Field::from_raw(*cfg.grid(), u.clone()));
            next += 1;
        }
        diags.push(diagnostics(&mut stepper, &u, m + 1, t));
    }
    // snapshots reached without any step (t_end = 0 or repeated zero times)
    while states.len() < schedule.times.len() {
        states.push(Field::from_raw(*cfg.grid(), u.clone()));
    }
    Ok(Trajectory {
        times: schedule.times,
        states,
        diagnostics: diags,
        records,
        lp_exponent: to_f64(cfg.settings.diagnostic_p),
    })
}

/// `K`, dt and grid compatibility of two configurations sharing one path.
fn check_coupling<T: Real>(a: &SolverConfig<T>, b: &SolverConfig<T>) -> Result<()> {
    if a.grid() != b.grid() {
        return Err(Error::Incompatible("coupled runs need the same grid".into()));
    }
    if a.dt() != b.dt() {
        return Err(Error::Incompatible(format!(
            "coupled runs need equal time steps ({} vs {})",
            to_f64(a.dt()),
            to_f64(b.dt())
        )));
    }
    Ok(())
}

/// Two trajectories driven by the same Brownian increments.
#[derive(Clone, Debug)]
pub struct CoupledRun<T> {
    pub a: Trajectory<T>,
    pub b: Trajectory<T>,
    /// `‖u_A(t_j) - u_B(t_j)‖_{L¹}` at every snapshot.
    pub distances: Vec<T>,
}

pub fn coupled_simulate<T: Real>(
    cfg_a: &SolverConfig<T>,
    cfg_b: &SolverConfig<T>,
    u0_a: &Field<T>,
    u0_b: &Field<T>,
    path: &SamplePath,
    snapshot_times: &[T],
) -> Result<CoupledRun<T>> {
    check_coupling(cfg_a, cfg_b)?;
    let a = simulate_path(cfg_a, u0_a, path, snapshot_times)?;
    let b = simulate_path(cfg_b, u0_b, path, snapshot_times)?;
    if a.times != b.times {
        return Err(Error::Incompatible("coupled runs produced different snapshot times".into()));
    }
    let distances = a
        .states
        .iter()
        .zip(&b.states)
        .map(|(x, y)| lp_norm(&x.sub(y), T::one()))
        .collect::<Result<Vec<_>>>()?;
    Ok(CoupledRun { a, b, distances })
}

/// Final-time L¹ distance between consecutive viscosities.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct CauchyRow {
    pub tau_coarse: f64,
    pub tau_fine: f64,
    pub distance: McEstimate,
}

/// `E ‖u^{τ_i}(t_end) - u^{τ_{i+1}}(t_end)‖_{L¹}` for consecutive entries of
/// `taus`, over `num_mc` replicas whose seeds derive from the template seed.
///
/// All viscosities share the smallest stable step so that one path drives them.
pub fn viscosity_sweep<T: Real>(
    template: &SolverConfig<T>,
    taus: &[T],
    u0: &Field<T>,
    num_mc: usize,
) -> Result<Vec<CauchyRow>> {
    for w in taus.windows(2) {
        if w[1] > w[0] {
            return Err(Error::Incompatible("viscosities must be listed in decreasing order".into()));
        }
    }
    for (i, &t) in taus.iter().enumerate() {
        if !(t >= T::zero()) || (t == T::zero() && (i + 1 != taus.len() || template.lambda().is_none())) {
            return Err(domain("tau", to_f64(t), "(0, ∞), or 0 as the last entry with an active fractional term"));
        }
    }
    if taus.len() < 2 {
        return Ok(Vec::new());
    }
    let base = template.to_settings();
    let mut probe = Vec::with_capacity(taus.len());
    for &t in taus {
        let mut s = base.clone();
        s.viscosity = t;
        s.dt = None;
        probe.push(SolverConfig::new(s)?.dt());
    }
    let dt = probe.into_iter().fold(template.dt(), T::min);
    let configs = taus
        .iter()
        .map(|&t| {
            let mut s = base.clone();
            s.viscosity = t;
            s.dt = Some(dt);
            s.retain_steps = false;
            SolverConfig::new(s)
        })
        .collect::<Result<Vec<_>>>()?;
    let times = [template.t_end()];
    let steps = configs[0].schedule(&times)?.dts.len();
    let truncation = template.noise().truncation();
    let per_replica: Vec<Vec<f64>> = (0..num_mc as u64)
        .into_par_iter()
        .map(|r| -> Result<Vec<f64>> {
            let path = SamplePath::new(replica_seed(template.seed(), r), truncation, steps);
            let finals = configs
                .iter()
                .map(|c| simulate_path(c, u0, &path, &times).map(|tr| tr.last().clone()))
                .collect::<Result<Vec<_>>>()?;
            finals
                .windows(2)
                .map(|w| lp_norm(&w[0].sub(&w[1]), T::one()).map(to_f64))
                .collect()
        })
        .collect::<Result<Vec<_>>>()?;
    (0..taus.len() - 1)
        .map(|j| {
            let samples: Vec<f64> = per_replica.iter().map(|row| row[j]).collect();
            Ok(CauchyRow {
                tau_coarse: to_f64(taus[j]),
                tau_fine: to_f64(taus[j + 1]),
                distance: McEstimate::from_samples(&samples)?,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(m: usize) -> TorusGrid<f64> {
        TorusGrid::new(m).unwrap()
    }

    #[test]
    fn rejects_unstable_dt() {
        let mut s = SolverSettings::new(grid(64), 1.0);
        s.flux = FluxSpec::linear(1.0);
        s.dt = Some(1.0);
        assert!(matches!(SolverConfig::new(s), Err(Error::Unstable { .. })));
    }

    #[test]
    fn schedule_lands_on_snapshots() {
        let mut s = SolverSettings::new(grid(16), 1.0);
        s.flux = FluxSpec::linear(1.0);
        s.dt = Some(0.03);
        let cfg = SolverConfig::new(s).unwrap();
        let sch = cfg.schedule(&[0.5, 0.25]).unwrap();
        assert_eq!(sch.times, vec![0.0, 0.25, 0.5, 1.0]);
        let total: f64 = sch.dts.iter().sum();
        assert!((total - 1.0).abs() < 1e-12);
        let at_quarter: f64 = sch.dts[..sch.snapshot_steps[1]].iter().sum();
        assert!((at_quarter - 0.25).abs() < 1e-12);
        assert!(cfg.schedule(&[1.5]).is_err());
    }

    #[test]
    fn blow_up_reports_step() {
        let mut s = SolverSettings::new(grid(16), 1.0);
        s.flux = FluxSpec::new("nan", |_| f64::NAN, |_| 0.0, 1.0, 1.0).with_lipschitz(0.0);
        s.dt = Some(0.01);
        s.regularization = FluxRegularization::Raw;
        let cfg = SolverConfig::new(s).unwrap();
        let u0 = Field::from_fn(*cfg.grid(), f64::sin);
        let path = cfg.sample_path(&[]).unwrap();
        match simulate_path(&cfg, &u0, &path, &[]) {
            Err(Error::BlowUp { step, .. }) => assert_eq!(step, 1),
            other => panic!("{other:?}"),
        }
    }
}
