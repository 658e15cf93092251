//! Kinetic formulation: the kinetic function `f = 𝟙_{u > ξ}`, the dissipation
//! measures `η₁` (nonlocal), `η₂` (parabolic) and `m₁` (viscous), and the weak
//! residual of the kinetic equation along a simulated path.
//!
//! Pairings of the Dirac measures `δ_{u(x) = ξ}` with test functions are taken
//! through ξ-antiderivatives, so the residual needs no ξ-binning; the binned
//! densities are only produced for inspection and dumps.

use std::io::{self, Write};

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::fractional::{LevyKernel, QuadratureRule};
use crate::quadrature::gl4_panel;
use crate::real::{cst, to_f64, Real};
use crate::coefficients::DiffusionSpec;
use crate::solver::{SolverConfig, Stepper, Trajectory};
use crate::torus::{Field, FourierPlan, TorusGrid};

/// Uniform velocity grid with bin centres `ξ_j = ξ_min + (j + ½) Δξ`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct XiGrid {
    pub xi_min: f64,
    pub xi_max: f64,
    pub num_bins: usize,
}

impl XiGrid {
    pub fn new(xi_min: f64, xi_max: f64, num_bins: usize) -> Result<Self> {
        if !(xi_min < xi_max) || !xi_min.is_finite() || !xi_max.is_finite() || num_bins == 0 {
            return Err(Error::Incompatible(format!(
                "velocity grid [{xi_min}, {xi_max}] with {num_bins} bins"
            )));
        }
        Ok(Self { xi_min, xi_max, num_bins })
    }

    /// Grid over `[min u, max u]` widened by 10% of the range (at least 0.1) per side.
    pub fn covering<T: Real>(fields: &[&Field<T>], num_bins: usize) -> Result<Self> {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for f in fields {
            lo = lo.min(to_f64(f.min_value()));
            hi = hi.max(to_f64(f.max_value()));
        }
        if !lo.is_finite() {
            return Err(Error::Incompatible("no fields to cover".into()));
        }
        let margin = (0.1 * (hi - lo)).max(0.1);
        Self::new(lo - margin, hi + margin, num_bins)
    }

    pub fn width(&self) -> f64 {
        (self.xi_max - self.xi_min) / self.num_bins as f64
    }

    pub fn center(&self, j: usize) -> f64 {
        self.xi_min + (j as f64 + 0.5) * self.width()
    }

    pub fn centers(&self) -> Vec<f64> {
        (0..self.num_bins).map(|j| self.center(j)).collect()
    }

    /// Bin containing `v`; the upper edge belongs to the last bin.
    pub fn bin_of(&self, v: f64) -> Result<usize> {
        if !(v >= self.xi_min && v <= self.xi_max) {
            return Err(Error::RangeViolation { value: v, min: self.xi_min, max: self.xi_max });
        }
        let j = ((v - self.xi_min) / self.width()).floor() as usize;
        Ok(j.min(self.num_bins - 1))
    }

    fn check_covers<T: Real>(&self, u: &Field<T>) -> Result<()> {
        self.bin_of(to_f64(u.min_value()))?;
        self.bin_of(to_f64(u.max_value()))?;
        Ok(())
    }
}

/// Row-major `(x_i, ξ_j)` array.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PhaseArray {
    pub num_x: usize,
    pub num_xi: usize,
    pub values: Vec<f64>,
}

impl PhaseArray {
    fn zeros(num_x: usize, num_xi: usize) -> Self {
        Self { num_x, num_xi, values: vec![0.0; num_x * num_xi] }
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.num_xi + j]
    }

    fn add(&mut self, i: usize, j: usize, v: f64) {
        self.values[i * self.num_xi + j] += v;
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.num_xi..(i + 1) * self.num_xi]
    }

    /// `h Δξ Σ values`.
    pub fn mass(&self, h: f64, dxi: f64) -> f64 {
        self.values.iter().sum::<f64>() * h * dxi
    }

    /// `Δξ Σ_j values(i, j)` for every `i`.
    pub fn xi_marginal(&self, dxi: f64) -> Vec<f64> {
        (0..self.num_x).map(|i| self.row(i).iter().sum::<f64>() * dxi).collect()
    }
}

/// Indicator `f(x_i, ξ_j) = 𝟙_{u(x_i) > ξ_j}` and the equilibrium reconstruction of `u`.
#[derive(Clone, Debug)]
pub struct KineticFunction {
    pub xi: XiGrid,
    pub num_x: usize,
    pub indicator: Vec<u8>,
    /// `∫ (f - 𝟙_{0 > ξ}) dξ` per grid point.
    pub reconstruction: Vec<f64>,
}

impl KineticFunction {
    pub fn get(&self, i: usize, j: usize) -> u8 {
        self.indicator[i * self.xi.num_bins + j]
    }
}

pub fn kinetic_function<T: Real>(u: &Field<T>, xi: &XiGrid) -> Result<KineticFunction> {
    xi.check_covers(u)?;
    let centers = xi.centers();
    let dxi = xi.width();
    let below = xi.xi_min.max(0.0) + xi.xi_max.min(0.0);
    let mut indicator = Vec::with_capacity(u.len() * xi.num_bins);
    let mut reconstruction = Vec::with_capacity(u.len());
    for &v in u.values() {
        let v = to_f64(v);
        let mut acc = 0i64;
        for &c in &centers {
            let f = u8::from(v > c);
            indicator.push(f);
            acc += i64::from(f) - i64::from(0.0 > c);
        }
        reconstruction.push(acc as f64 * dxi + below);
    }
    Ok(KineticFunction { xi: *xi, num_x: u.len(), indicator, reconstruction })
}

/// `η₁(x, ξ) = ∫ |u(x+z) - ξ| 𝟙_{ξ ∈ Conv{u(x), u(x+z)}} μ_λ(z) dz` at bin centres.
///
/// Uses the node set of the quadrature operator with inner cutoff `h`; `Conv`
/// is the open interval, so centres equal to an endpoint receive nothing.
pub fn eta1_density<T: Real>(u: &Field<T>, lambda: T, xi: &XiGrid) -> Result<PhaseArray> {
    let kernel = LevyKernel::new(lambda)?;
    let grid = *u.grid();
    let rule = QuadratureRule::new(&grid, to_f64(grid.spacing()))?;
    let plan = FourierPlan::new(grid);
    let centers = xi.centers();
    let dxi = xi.width();
    let base: Vec<f64> = u.values().iter().map(|&v| to_f64(v)).collect();
    let nodes = rule.nodes();
    let m = grid.num_points();
    let partials: Vec<PhaseArray> = nodes
        .par_chunks(64)
        .map(|chunk| {
            let mut acc = PhaseArray::zeros(m, xi.num_bins);
            for &(z, w) in chunk {
                let weight = w * to_f64(kernel.density(cst(z)));
                for sign in [1.0, -1.0] {
                    let shifted = plan.shifted(u, cst(sign * z));
                    for (i, &a) in base.iter().enumerate() {
                        let c = to_f64(shifted.values()[i]);
                        deposit_between(&mut acc, i, a, c, xi, &centers, dxi, weight);
                    }
                }
            }
            acc
        })
        .collect();
    let mut out = PhaseArray::zeros(m, xi.num_bins);
    for p in partials {
        for (o, v) in out.values.iter_mut().zip(p.values) {
            *o += v;
        }
    }
    Ok(out)
}

#[allow(clippy::too_many_arguments)]
fn deposit_between(
    acc: &mut PhaseArray,
    i: usize,
    a: f64,
    c: f64,
    xi: &XiGrid,
    centers: &[f64],
    dxi: f64,
    weight: f64,
) {
    let (lo, hi) = if a < c { (a, c) } else { (c, a) };
    if hi <= lo {
        return;
    }
    let first = (((lo - xi.xi_min) / dxi - 0.5).floor().max(-1.0) + 1.0) as usize;
    for (j, &center) in centers.iter().enumerate().skip(first) {
        if center >= hi {
            break;
        }
        if center > lo {
            acc.add(i, j, weight * (c - center).abs());
        }
    }
}

/// Adds `value / Δξ` to the bin of `v` in row `i`.
fn deposit_dirac(acc: &mut PhaseArray, xi: &XiGrid, i: usize, v: f64, value: f64) -> Result<()> {
    let j = xi.bin_of(v)?;
    acc.add(i, j, value / xi.width());
    Ok(())
}

/// Central difference of `G(u)` with `G' = σ`.
fn central_gradient_of_g<T: Real>(u: &Field<T>, diff: &DiffusionSpec<T>) -> Vec<f64> {
    let m = u.len();
    let h = to_f64(u.grid().spacing());
    let g: Vec<f64> = u.values().iter().map(|&v| to_f64(diff.big_g(v))).collect();
    (0..m).map(|i| (g[(i + 1) % m] - g[(i + m - 1) % m]) / (2.0 * h)).collect()
}

/// `η₂ = |∂ₓ G(u)|² δ_{u = ξ}`, deposited as a binned Dirac.
pub fn eta2_density<T: Real>(u: &Field<T>, diff: &DiffusionSpec<T>, xi: &XiGrid) -> Result<PhaseArray> {
    xi.check_covers(u)?;
    let mut out = PhaseArray::zeros(u.len(), xi.num_bins);
    if diff.is_zero() {
        return Ok(out);
    }
    let grad = central_gradient_of_g(u, diff);
    for (i, (&v, &g)) in u.values().iter().zip(&grad).enumerate() {
        deposit_dirac(&mut out, xi, i, to_f64(v), g * g)?;
    }
    Ok(out)
}

/// `m₁ = τ |∂ₓu|² δ_{u = ξ}` with the spectral derivative.
pub fn m1_density<T: Real>(u: &Field<T>, viscosity: T, xi: &XiGrid) -> Result<PhaseArray> {
    xi.check_covers(u)?;
    let mut out = PhaseArray::zeros(u.len(), xi.num_bins);
    if viscosity == T::zero() {
        return Ok(out);
    }
    let du = FourierPlan::new(*u.grid()).derivative(u);
    let tau = to_f64(viscosity);
    for (i, (&v, &d)) in u.values().iter().zip(du.values()).enumerate() {
        let d = to_f64(d);
        deposit_dirac(&mut out, xi, i, to_f64(v), tau * d * d)?;
    }
    Ok(out)
}

/// Time-integrated measures over `(x_i, t-bin, ξ_j)`.
///
/// Each t-bin spans two consecutive snapshots and uses the density of the
/// earlier one (left-endpoint rule). Entries are `∫_bin density dt`.
#[derive(Clone, Debug, Serialize)]
pub struct KineticMeasureGrid {
    pub xi: XiGrid,
    pub num_x: usize,
    pub spacing: f64,
    pub t_edges: Vec<f64>,
    pub eta1: Vec<PhaseArray>,
    pub eta2: Vec<PhaseArray>,
    pub m1: Vec<PhaseArray>,
}

impl KineticMeasureGrid {
    pub fn accumulate<T: Real>(traj: &Trajectory<T>, cfg: &SolverConfig<T>, xi: &XiGrid) -> Result<Self> {
        let mut out = Self {
            xi: *xi,
            num_x: cfg.grid().num_points(),
            spacing: to_f64(cfg.grid().spacing()),
            t_edges: traj.times.iter().map(|&t| to_f64(t)).collect(),
            eta1: Vec::new(),
            eta2: Vec::new(),
            m1: Vec::new(),
        };
        for (w, u) in traj.times.windows(2).zip(&traj.states) {
            let dt = to_f64(w[1] - w[0]);
            let scale = |mut p: PhaseArray| {
                p.values.iter_mut().for_each(|v| *v *= dt);
                p
            };
            let e1 = match cfg.lambda() {
                Some(l) => eta1_density(u, l, xi)?,
                None => {
                    xi.check_covers(u)?;
                    PhaseArray::zeros(u.len(), xi.num_bins)
                }
            };
            out.eta1.push(scale(e1));
            out.eta2.push(scale(eta2_density(u, cfg.diffusion(), xi)?));
            out.m1.push(scale(m1_density(u, cfg.viscosity(), xi)?));
        }
        Ok(out)
    }

    /// Total `h Δξ Σ` of `m₁ + η₁ + η₂` over bins with `|ξ_j| > r`.
    pub fn mass_outside(&self, r: f64) -> f64 {
        let dxi = self.xi.width();
        let mut total = 0.0;
        for group in [&self.eta1, &self.eta2, &self.m1] {
            for arr in group {
                for i in 0..arr.num_x {
                    for j in 0..arr.num_xi {
                        if self.xi.center(j).abs() > r {
                            total += arr.get(i, j);
                        }
                    }
                }
            }
        }
        total * self.spacing * dxi
    }

    pub fn total_mass(&self) -> f64 {
        self.mass_outside(-1.0)
    }

    pub fn min_entry(&self) -> f64 {
        [&self.eta1, &self.eta2, &self.m1]
            .iter()
            .flat_map(|g| g.iter().flat_map(|a| a.values.iter().copied()))
            .fold(f64::INFINITY, f64::min)
    }

    /// CSV `x,xi,eta1,eta2,m1`, summed over time bins.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "x,xi,eta1,eta2,m1")?;
        let sum = |g: &[PhaseArray], i: usize, j: usize| g.iter().map(|a| a.get(i, j)).sum::<f64>();
        for i in 0..self.num_x {
            let x = i as f64 * self.spacing;
            for j in 0..self.xi.num_bins {
                writeln!(
                    w,
                    "{:e},{:e},{:e},{:e},{:e}",
                    x,
                    self.xi.center(j),
                    sum(&self.eta1, i, j),
                    sum(&self.eta2, i, j),
                    sum(&self.m1, i, j)
                )?;
            }
        }
        Ok(())
    }
}

/// x-profile of a test function.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum XProfile {
    Constant,
    Cos(u32),
    Sin(u32),
}

/// `φ(x, ξ) = a(x) b(ξ)` with a trigonometric `a` and the smooth bump
/// `b(ξ) = exp(1 - 1/(1 - s²))`, `s = (ξ - c)/w`, supported in `(c - w, c + w)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct TestFunction {
    pub profile: XProfile,
    pub center: f64,
    pub half_width: f64,
}

impl TestFunction {
    pub fn name(&self) -> String {
        let a = match self.profile {
            XProfile::Constant => "1".to_string(),
            XProfile::Cos(n) => format!("cos{n}x"),
            XProfile::Sin(n) => format!("sin{n}x"),
        };
        format!("{a}*bump({:+.2},{:.2})", self.center, self.half_width)
    }

    pub fn wavenumber(&self) -> i64 {
        match self.profile {
            XProfile::Constant => 0,
            XProfile::Cos(n) | XProfile::Sin(n) => n as i64,
        }
    }

    /// `(a, a', a'')` at `x`.
    pub fn a(&self, x: f64) -> (f64, f64, f64) {
        match self.profile {
            XProfile::Constant => (1.0, 0.0, 0.0),
            XProfile::Cos(n) => {
                let k = n as f64;
                let (s, c) = (k * x).sin_cos();
                (c, -k * s, -k * k * c)
            }
            XProfile::Sin(n) => {
                let k = n as f64;
                let (s, c) = (k * x).sin_cos();
                (s, k * c, -k * k * s)
            }
        }
    }

    /// `(b, b')` at `ξ`.
    pub fn b(&self, xi: f64) -> (f64, f64) {
        let s = (xi - self.center) / self.half_width;
        if s.abs() >= 1.0 {
            return (0.0, 0.0);
        }
        let q = 1.0 - s * s;
        let b = (1.0 - 1.0 / q).exp();
        let db = b * (-2.0 * s / (q * q)) / self.half_width;
        (b, db)
    }

    pub fn support(&self) -> (f64, f64) {
        (self.center - self.half_width, self.center + self.half_width)
    }
}

/// Twelve products of `{1, cos x, sin x, cos 2x}` with bumps centred at
/// `-0.45, 0.15, 0.6` of half-width `0.6`, covering states in `[-1.05, 1.2]`.
pub fn default_battery() -> Vec<TestFunction> {
    let profiles = [XProfile::Constant, XProfile::Cos(1), XProfile::Sin(1), XProfile::Cos(2)];
    // off-centre so even profiles do not pair to zero by symmetry
    let centers = [-0.45, 0.15, 0.6];
    profiles
        .iter()
        .flat_map(|&profile| centers.iter().map(move |&center| TestFunction { profile, center, half_width: 0.6 }))
        .collect()
}

/// Below this every pairing is round-off and the defect is reported as 0.
pub const NEGLIGIBLE_SCALE: f64 = 1e-12;

/// Antiderivative `v ↦ ∫_{-∞}^v w(ξ) b(ξ) dξ` on a Hermite table over the bump support.
struct XiPrimitive {
    lo: f64,
    step: f64,
    values: Vec<f64>,
    slopes: Vec<f64>,
}

const PRIMITIVE_CELLS: usize = 1024;

impl XiPrimitive {
    fn new(tf: &TestFunction, weight: &dyn Fn(f64) -> f64) -> Self {
        let (lo, hi) = tf.support();
        let step = (hi - lo) / PRIMITIVE_CELLS as f64;
        let integrand = |xi: f64| weight(xi) * tf.b(xi).0;
        let mut values = Vec::with_capacity(PRIMITIVE_CELLS + 1);
        let mut slopes = Vec::with_capacity(PRIMITIVE_CELLS + 1);
        let mut acc = 0.0;
        values.push(0.0);
        slopes.push(integrand(lo));
        for k in 0..PRIMITIVE_CELLS {
            let a = lo + k as f64 * step;
            acc += gl4_panel(a, a + step).map(|(z, w)| w * integrand(z)).sum::<f64>();
            values.push(acc);
            slopes.push(integrand(a + step));
        }
        Self { lo, step, values, slopes }
    }

    fn eval(&self, v: f64) -> f64 {
        let t = (v - self.lo) / self.step;
        if t <= 0.0 {
            return 0.0;
        }
        if t >= PRIMITIVE_CELLS as f64 {
            return self.values[PRIMITIVE_CELLS];
        }
        let k = (t.floor() as usize).min(PRIMITIVE_CELLS - 1);
        let s = t - k as f64;
        let (y0, y1) = (self.values[k], self.values[k + 1]);
        let (m0, m1) = (self.slopes[k] * self.step, self.slopes[k + 1] * self.step);
        let s2 = s * s;
        let s3 = s2 * s;
        (2.0 * s3 - 3.0 * s2 + 1.0) * y0 + (s3 - 2.0 * s2 + s) * m0 + (-2.0 * s3 + 3.0 * s2) * y1 + (s3 - s2) * m1
    }
}

/// Terms of the approximate kinetic formulation paired with one test function.
///
/// The identity reads `time_increment = flux + diffusion + fractional +
/// viscous + martingale + ito_correction + measure`, where `measure` is the
/// sum of the `measure_*` entries. `numerical_viscous` and
/// `measure_numerical` split the diffusive part of the upwinded flux into its
/// transport and dissipation pieces; both vanish with the mesh.
#[derive(Clone, Debug, Serialize)]
pub struct ResidualTerms {
    pub test_function: String,
    pub time_increment: f64,
    pub flux: f64,
    pub diffusion: f64,
    pub fractional: f64,
    pub viscous: f64,
    pub numerical_viscous: f64,
    pub martingale: f64,
    pub ito_correction: f64,
    pub measure: f64,
    pub measure_m1: f64,
    pub measure_eta1: f64,
    pub measure_eta2: f64,
    pub measure_numerical: f64,
    pub defect: f64,
    pub normalized_defect: f64,
}

impl ResidualTerms {
    fn finish(mut self) -> Self {
        let rhs = self.flux
            + self.diffusion
            + self.fractional
            + self.viscous
            + self.numerical_viscous
            + self.martingale
            + self.ito_correction
            + self.measure;
        self.defect = self.time_increment - rhs;
        let scale = [
            self.time_increment,
            self.flux,
            self.diffusion,
            self.fractional,
            self.viscous,
            self.numerical_viscous,
            self.martingale,
            self.ito_correction,
            self.measure,
        ]
        .iter()
        .fold(0.0f64, |m, v| m.max(v.abs()));
        self.normalized_defect = if scale > NEGLIGIBLE_SCALE { self.defect.abs() / scale } else { 0.0 };
        self
    }

    fn empty(name: String) -> Self {
        Self {
            test_function: name,
            time_increment: 0.0,
            flux: 0.0,
            diffusion: 0.0,
            fractional: 0.0,
            viscous: 0.0,
            numerical_viscous: 0.0,
            martingale: 0.0,
            ito_correction: 0.0,
            measure: 0.0,
            measure_m1: 0.0,
            measure_eta1: 0.0,
            measure_eta2: 0.0,
            measure_numerical: 0.0,
            defect: 0.0,
            normalized_defect: 0.0,
        }
    }
}

/// Residual report for a family of test functions.
#[derive(Clone, Debug, Serialize)]
pub struct ResidualReport {
    pub num_steps: usize,
    pub t_end: f64,
    pub entries: Vec<ResidualTerms>,
}

impl ResidualReport {
    pub fn max_normalized_defect(&self) -> f64 {
        self.entries.iter().map(|e| e.normalized_defect).fold(0.0, f64::max)
    }
}

/// Time quadrature of the residual integrals.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum TimeRule {
    /// Every term at the pre-step state.
    LeftEndpoint,
    /// Explicit and stochastic terms at the pre-step state, the implicitly
    /// treated fractional and viscous contributions (including `η₁` and `m₁`)
    /// at the post-step state, as the scheme evaluates them.
    #[default]
    SchemeConsistent,
}

/// Per-state quantities shared by all test functions.
struct StateData {
    u: Vec<f64>,
    /// `g^λ[u]`.
    gu: Vec<f64>,
    /// `τ |∂ₓu|²`.
    m1: Vec<f64>,
    /// `|∂ₓ G(u)|²`.
    eta2: Vec<f64>,
    /// Diffusive part of the numerical flux per face.
    numerical: Vec<f64>,
}

/// Assembly choices for [`kinetic_residual_with`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct ResidualOptions {
    pub time_rule: TimeRule,
    /// Account for the diffusive part of the upwinded flux.
    pub numerical_flux_terms: bool,
}

impl Default for ResidualOptions {
    fn default() -> Self {
        Self { time_rule: TimeRule::default(), numerical_flux_terms: true }
    }
}

/// Pairings of one state with one test function, before the `dt h` factor.
#[derive(Clone, Copy, Default)]
struct StatePairing {
    flux: f64,
    diffusion: f64,
    viscous: f64,
    fractional: f64,
    m1: f64,
    eta1: f64,
    eta2: f64,
    numerical_viscous: f64,
    numerical: f64,
}

/// Every term of the approximate kinetic formulation, integrated over the
/// recorded steps, for each test function.
pub fn kinetic_residual<T: Real>(
    traj: &Trajectory<T>,
    cfg: &SolverConfig<T>,
    test_functions: &[TestFunction],
) -> Result<ResidualReport> {
    kinetic_residual_with(traj, cfg, test_functions, ResidualOptions::default())
}

pub fn kinetic_residual_with<T: Real>(
    traj: &Trajectory<T>,
    cfg: &SolverConfig<T>,
    test_functions: &[TestFunction],
    options: ResidualOptions,
) -> Result<ResidualReport> {
    let rule = options.time_rule;
    let records = traj.records.as_ref().ok_or(Error::MissingNoiseRecord)?;
    let grid: TorusGrid<T> = *cfg.grid();
    let m = grid.num_points();
    let h = to_f64(grid.spacing());
    let plan = cfg.plan();
    let symbol: Vec<T> = cfg.symbol().to_vec();
    let fractional_on = cfg.lambda().is_some();
    let tau = to_f64(cfg.viscosity());
    let x: Vec<f64> = (0..m).map(|i| to_f64(grid.x(i))).collect();
    let noise = cfg.noise();
    let diff = cfg.diffusion();

    let mut fields: Vec<&Field<T>> = records.iter().map(|r| &r.state).collect();
    fields.push(traj.last());
    let states: Vec<StateData> = fields
        .par_iter()
        .map(|&u| {
            let gu = if fractional_on {
                plan.apply_multiplier(u, &symbol).values().iter().map(|&v| to_f64(v)).collect()
            } else {
                vec![0.0; m]
            };
            let m1 = if tau > 0.0 {
                plan.derivative(u).values().iter().map(|&d| tau * to_f64(d) * to_f64(d)).collect()
            } else {
                vec![0.0; m]
            };
            let eta2 = if diff.is_zero() {
                vec![0.0; m]
            } else {
                central_gradient_of_g(u, diff).into_iter().map(|g| g * g).collect()
            };
            let numerical = if options.numerical_flux_terms {
                Stepper::new(cfg).numerical_diffusive_flux(u.values()).into_iter().map(to_f64).collect()
            } else {
                vec![0.0; m]
            };
            StateData { u: u.values().iter().map(|&v| to_f64(v)).collect(), gu, m1, eta2, numerical }
        })
        .collect();
    // `Σ_k β_k(x, u) ΔW_k` per step
    let noise_sums: Vec<Vec<f64>> = records
        .par_iter()
        .map(|rec| {
            let u = rec.state.values();
            (0..m)
                .map(|i| {
                    rec.increments
                        .iter()
                        .enumerate()
                        .take(noise.truncation())
                        .map(|(k, &dw)| to_f64(noise.beta(k, grid.x(i), u[i]) * dw))
                        .sum()
                })
                .collect()
        })
        .collect();

    let flux = cfg.flux();
    let entries = test_functions
        .par_iter()
        .map(|tf| {
            let theta = XiPrimitive::new(tf, &|_| 1.0);
            let theta_flux = XiPrimitive::new(tf, &|xi| to_f64(flux.deriv(cst(xi))));
            let theta_diff = XiPrimitive::new(tf, &|xi| to_f64(diff.a_of(cst(xi))));
            let psi_a = if fractional_on {
                to_f64(symbol[grid.index_of_mode(tf.wavenumber()).expect("battery modes fit the grid")])
            } else {
                0.0
            };
            let a: Vec<(f64, f64, f64)> = x.iter().map(|&xv| tf.a(xv)).collect();
            let mut theta_u = vec![T::zero(); m];
            let pairings: Vec<StatePairing> = states
                .iter()
                .map(|s| {
                    let mut p = StatePairing::default();
                    let mut b_gu = 0.0;
                    for i in 0..m {
                        let (ai, dai, d2ai) = a[i];
                        let ui = s.u[i];
                        let (b, db) = tf.b(ui);
                        let th = theta.eval(ui);
                        theta_u[i] = cst(th);
                        p.flux += dai * theta_flux.eval(ui);
                        p.diffusion += d2ai * theta_diff.eval(ui);
                        p.viscous += tau * d2ai * th;
                        p.fractional -= psi_a * ai * th;
                        p.m1 -= ai * db * s.m1[i];
                        p.eta2 -= ai * db * s.eta2[i];
                        // a_j b_j - a_i b_i = (a_j - a_i) b̄ + ā (b_j - b_i) across face i + 1/2
                        let j = (i + 1) % m;
                        let bj = tf.b(s.u[j]).0;
                        let d = s.numerical[i] / h;
                        p.numerical_viscous -= d * (a[j].0 - ai) * 0.5 * (b + bj);
                        p.numerical -= d * 0.5 * (ai + a[j].0) * (bj - b);
                        b_gu += ai * b * s.gu[i];
                    }
                    if fractional_on {
                        // ∫ η₁ ∂_ξφ dξ = b(u) g[u] - g[Θ(u)] pointwise
                        let g_theta = plan.apply_multiplier(&Field::from_raw(grid, theta_u.clone()), &symbol);
                        let ag: f64 = (0..m).map(|i| a[i].0 * to_f64(g_theta.values()[i])).sum();
                        p.eta1 = -(b_gu - ag);
                    }
                    p
                })
                .collect();
            let mut r = ResidualTerms::empty(tf.name());
            let first = &states[0].u;
            let last = &states[states.len() - 1].u;
            r.time_increment =
                h * (0..m).map(|i| a[i].0 * (theta.eval(last[i]) - theta.eval(first[i]))).sum::<f64>();
            for (n, rec) in records.iter().enumerate() {
                let dt = to_f64(rec.dt) * h;
                let left = &pairings[n];
                let implicit = match rule {
                    TimeRule::LeftEndpoint => left,
                    TimeRule::SchemeConsistent => &pairings[n + 1],
                };
                r.flux += dt * left.flux;
                r.diffusion += dt * left.diffusion;
                r.measure_eta2 += dt * left.eta2;
                r.measure_numerical += dt * left.numerical;
                r.numerical_viscous += dt * left.numerical_viscous;
                r.viscous += dt * implicit.viscous;
                r.fractional += dt * implicit.fractional;
                r.measure_m1 += dt * implicit.m1;
                r.measure_eta1 += dt * implicit.eta1;
                let u = &states[n].u;
                let dw = &noise_sums[n];
                for i in 0..m {
                    let (b, db) = tf.b(u[i]);
                    r.martingale += h * a[i].0 * b * dw[i];
                    r.ito_correction += 0.5 * h * a[i].0 * db * dw[i] * dw[i];
                }
            }
            r.measure = r.measure_m1 + r.measure_eta1 + r.measure_eta2 + r.measure_numerical;
            r.finish()
        })
        .collect();
    Ok(ResidualReport { num_steps: records.len(), t_end: to_f64(cfg.t_end()), entries })
}
