//! The nonlocal operator `g^λ[φ](x) = -P.V.∫_ℝ (φ(x+z) - φ(x)) |z|^{-1-2λ} dz`
//! on periodic fields.
//!
//! Two realizations are provided: an exact Fourier multiplier built from the
//! symbol of the (unnormalized) kernel, and a singular-integral quadrature in
//! `z`. They compute the same operator and are cross-checked against each other.

use std::collections::HashMap;
use std::sync::{Mutex, OnceLock};

use crate::error::{domain, Result};
use crate::quadrature;
use crate::real::{cst, to_f64, Real};
use crate::torus::{l1_translation, lp_norm, Field, FourierPlan, TorusGrid};

fn check_lambda(name: &'static str, lambda: f64) -> Result<()> {
    if lambda > 0.0 && lambda < 1.0 {
        Ok(())
    } else {
        Err(domain(name, lambda, "(0, 1)"))
    }
}

/// `∫_ℝ (1 - cos z) |z|^{-1-2λ} dz`, computed once per `λ` and cached.
///
/// `[0, 1]` uses the Taylor series of `1 - cos z` termwise, `[1, Z]` an
/// adaptive Gauss–Kronrod rule per period, and the tail beyond `Z = 2πN`
/// two terms of its asymptotic expansion.
pub fn symbol_constant(lambda: f64) -> Result<f64> {
    check_lambda("lambda", lambda)?;
    static CACHE: OnceLock<Mutex<HashMap<u64, f64>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    if let Some(&c) = cache.lock().unwrap().get(&lambda.to_bits()) {
        return Ok(c);
    }
    let c = compute_symbol_constant(lambda);
    cache.lock().unwrap().insert(lambda.to_bits(), c);
    Ok(c)
}

fn compute_symbol_constant(lambda: f64) -> f64 {
    let a = 1.0 + 2.0 * lambda;
    // ∫_0^1 (1 - cos z) z^{-a} dz = Σ_k (-1)^{k+1} / ((2k)! (2k - 2λ))
    let mut inner = 0.0;
    let mut fact = 1.0;
    for k in 1..=20 {
        fact *= ((2 * k - 1) * (2 * k)) as f64;
        let term = 1.0 / (fact * (2 * k) as f64 - fact * 2.0 * lambda);
        inner += if k % 2 == 1 { term } else { -term };
    }
    let periods = 400;
    let tau = std::f64::consts::TAU;
    let f = |z: f64| z.cos() * z.powf(-a);
    let mut osc = quadrature::integrate(f, 1.0, tau, 1e-16, 1e-14);
    for j in 1..periods {
        osc += quadrature::integrate(f, tau * j as f64, tau * (j + 1) as f64, 1e-17, 1e-13);
    }
    let z = tau * periods as f64;
    osc += a * z.powf(-a - 1.0) - a * (a + 1.0) * (a + 2.0) * z.powf(-a - 3.0);
    let outer = 1.0 / (2.0 * lambda) - osc;
    2.0 * (inner + outer)
}

/// Kernel `μ_λ(z) = |z|^{-1-2λ}` and its Fourier symbol `ψ_λ(n) = c(λ) |n|^{2λ}`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LevyKernel<T> {
    lambda: T,
    symbol_constant: T,
}

impl<T: Real> LevyKernel<T> {
    pub fn new(lambda: T) -> Result<Self> {
        let c = symbol_constant(to_f64(lambda))?;
        Ok(Self { lambda, symbol_constant: cst(c) })
    }

    pub fn lambda(&self) -> T {
        self.lambda
    }

    pub fn symbol_constant(&self) -> T {
        self.symbol_constant
    }

    /// `μ_λ(z)`, with `μ_λ(0) = 0`.
    pub fn density(&self, z: T) -> T {
        if z == T::zero() {
            T::zero()
        } else {
            z.abs().powf(-(T::one() + cst::<T>(2.0) * self.lambda))
        }
    }

    /// `ψ_λ(n)`.
    pub fn symbol(&self, n: i64) -> T {
        if n == 0 {
            return T::zero();
        }
        self.symbol_constant * cst::<T>(n.unsigned_abs() as f64).powf(cst::<T>(2.0) * self.lambda)
    }

    /// `ψ_λ` per FFT index of `grid`.
    pub fn symbol_table(&self, grid: &TorusGrid<T>) -> Vec<T> {
        (0..grid.num_points()).map(|k| self.symbol(grid.mode(k))).collect()
    }
}

/// `ψ_λ(n) = ∫_ℝ (1 - cos(n z)) |z|^{-1-2λ} dz`.
pub fn spectral_symbol<T: Real>(lambda: T, n: i64) -> Result<T> {
    Ok(LevyKernel::new(lambda)?.symbol(n))
}

/// `g^λ[f]` as the Fourier multiplier `ψ_λ`.
pub fn apply_spectral<T: Real>(f: &Field<T>, lambda: T) -> Result<Field<T>> {
    let kernel = LevyKernel::new(lambda)?;
    let plan = FourierPlan::new(*f.grid());
    Ok(plan.apply_multiplier(f, &kernel.symbol_table(f.grid())))
}

/// Panelling of `(0, Z_max]` for the `z`-quadrature.
///
/// Panels double geometrically from `z_min` and never exceed `panel_width`;
/// the inner cutoff `r` and `z = 1` are always breakpoints. Each panel carries
/// a four-point Gauss–Legendre rule.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QuadratureRule {
    pub inner_cutoff: f64,
    pub z_max: f64,
    pub panel_width: f64,
    /// Smallest node scale, as a fraction of `inner_cutoff`.
    pub z_min_ratio: f64,
}

/// Default truncation of the outer integral.
pub const DEFAULT_Z_MAX: f64 = 50.0;

impl QuadratureRule {
    /// Rule with cutoff `r`, `Z_max = 50` and panels no wider than the grid spacing.
    pub fn new<T: Real>(grid: &TorusGrid<T>, inner_cutoff: f64) -> Result<Self> {
        Self::with_z_max(grid, inner_cutoff, DEFAULT_Z_MAX)
    }

    pub fn with_z_max<T: Real>(grid: &TorusGrid<T>, inner_cutoff: f64, z_max: f64) -> Result<Self> {
        if !(inner_cutoff > 0.0 && inner_cutoff < std::f64::consts::PI) {
            return Err(domain("r", inner_cutoff, "(0, π)"));
        }
        if !(z_max > inner_cutoff) {
            return Err(domain("z_max", z_max, "(r, ∞)"));
        }
        Ok(Self { inner_cutoff, z_max, panel_width: to_f64(grid.spacing()), z_min_ratio: 2f64.powi(-40) })
    }

    /// Nodes and weights `(z_j, w_j)` covering `[z_min, Z_max]`.
    pub fn nodes(&self) -> Vec<(f64, f64)> {
        let mut breaks = vec![self.inner_cutoff * self.z_min_ratio];
        let mut fixed = vec![self.inner_cutoff, 1.0, self.z_max];
        fixed.retain(|&b| b > breaks[0] && b <= self.z_max);
        fixed.sort_by(f64::total_cmp);
        fixed.dedup();
        let mut a = breaks[0];
        for &target in &fixed {
            while a < target {
                let b = (2.0 * a).min(a + self.panel_width).min(target);
                breaks.push(b);
                a = b;
            }
        }
        breaks
            .windows(2)
            .flat_map(|w| quadrature::gl4_panel(w[0], w[1]).collect::<Vec<_>>())
            .collect()
    }

    pub fn z_min(&self) -> f64 {
        self.inner_cutoff * self.z_min_ratio
    }
}

/// Quadrature realization of `g^λ` on one grid.
///
/// For every node `z_j` the symmetric difference `f(x+z_j) + f(x-z_j) - 2f(x)`
/// is formed with `f` extended by trigonometric interpolation; these shifts
/// act diagonally on Fourier modes, so the whole node sum is precomputed as a
/// per-mode table. Below `z_min` the difference is replaced by its quadratic
/// Taylor term. Beyond `Z_max` the shifted value is replaced by the spatial
/// mean and the remainder is accounted for in [`QuadratureOperator::tail_bound`].
#[derive(Clone, Debug)]
pub struct QuadratureOperator<T: Real> {
    plan: FourierPlan<T>,
    multiplier: Vec<T>,
    tail_mass: f64,
    nodes: usize,
}

impl<T: Real> QuadratureOperator<T> {
    pub fn new(grid: TorusGrid<T>, lambda: T, rule: &QuadratureRule) -> Result<Self> {
        let lam = to_f64(lambda);
        check_lambda("lambda", lam)?;
        let a = 1.0 + 2.0 * lam;
        let nodes = rule.nodes();
        let weighted: Vec<(f64, f64)> = nodes.iter().map(|&(z, w)| (z, w * z.powf(-a))).collect();
        let tail_mass = rule.z_max.powf(-2.0 * lam) / lam;
        let z0 = rule.z_min();
        let head = z0.powf(2.0 - 2.0 * lam) / (2.0 - 2.0 * lam);
        let m = grid.num_points();
        let mut by_mode: HashMap<u64, f64> = HashMap::new();
        let multiplier = (0..m)
            .map(|k| {
                let n = grid.mode(k).unsigned_abs();
                if n == 0 {
                    return T::zero();
                }
                let q = *by_mode.entry(n).or_insert_with(|| {
                    let nf = n as f64;
                    let body: f64 = weighted.iter().map(|&(z, w)| w * (2.0 - 2.0 * (nf * z).cos())).sum();
                    body + nf * nf * head + tail_mass
                });
                cst::<T>(q)
            })
            .collect();
        Ok(Self { plan: FourierPlan::new(grid), multiplier, tail_mass, nodes: nodes.len() })
    }

    pub fn apply(&self, f: &Field<T>) -> Field<T> {
        self.plan.apply_multiplier(f, &self.multiplier)
    }

    /// Bound on the neglected far field: `2 max|f| ∫_{|z|>Z_max} μ_λ`.
    pub fn tail_bound(&self, f: &Field<T>) -> f64 {
        self.tail_mass * 2.0 * to_f64(f.max_abs())
    }

    pub fn num_nodes(&self) -> usize {
        self.nodes
    }

    /// Effective multiplier per FFT index.
    pub fn multiplier(&self) -> &[T] {
        &self.multiplier
    }
}

/// `g^λ[f]` by singular-integral quadrature with inner cutoff `r` and `Z_max = 50`.
pub fn apply_quadrature<T: Real>(f: &Field<T>, lambda: T, r: T) -> Result<Field<T>> {
    let rule = QuadratureRule::new(f.grid(), to_f64(r))?;
    Ok(QuadratureOperator::new(*f.grid(), lambda, &rule)?.apply(f))
}

fn power_primitive(gamma: f64, a: f64, b: f64) -> f64 {
    let e = 2.0 - 2.0 * gamma;
    (b.powf(e) - a.powf(e)) / e
}

/// `∫_{|z| ≤ r₁} |z|² d|μ_λ - μ_β|(z)` in closed form.
///
/// The densities `z^{-1-2λ}` and `z^{-1-2β}` cross only at `z = 1`, so the
/// absolute value is resolved by splitting there.
pub fn kernel_difference_second_moment(lambda: f64, beta: f64, r1: f64) -> Result<f64> {
    check_lambda("lambda", lambda)?;
    check_lambda("beta", beta)?;
    if !(r1 > 0.0) {
        return Err(domain("r1", r1, "(0, ∞)"));
    }
    let piece = |a: f64, b: f64| (power_primitive(lambda, a, b) - power_primitive(beta, a, b)).abs();
    let half = if r1 <= 1.0 { piece(0.0, r1) } else { piece(0.0, 1.0) + piece(1.0, r1) };
    Ok(2.0 * half)
}

/// `∫_{|z| > r₁} ‖u₀(·+z) - u₀‖_{L¹} d|μ_λ - μ_β|(z)`.
///
/// See [`tail_translation_term_with_bound`]; this returns only the estimate.
pub fn tail_translation_term<T: Real>(u0: &Field<T>, lambda: f64, beta: f64, r1: f64) -> Result<f64> {
    Ok(tail_translation_term_with_bound(u0, lambda, beta, r1)?.0)
}

/// Estimate of the tail translation term and a bound on its far-field error.
///
/// The translation modulus is integrated by quadrature up to `Z_max = 50`.
/// It is `2π`-periodic in `z`, so beyond `Z_max` it is replaced by its mean
/// over one period; the returned bound uses `‖u₀(·+z) - u₀‖_{L¹} ≤ 2‖u₀‖_{L¹}`.
pub fn tail_translation_term_with_bound<T: Real>(
    u0: &Field<T>,
    lambda: f64,
    beta: f64,
    r1: f64,
) -> Result<(f64, f64)> {
    check_lambda("lambda", lambda)?;
    check_lambda("beta", beta)?;
    if !(r1 > 0.0) {
        return Err(domain("r1", r1, "(0, ∞)"));
    }
    if lambda == beta {
        return Ok((0.0, 0.0));
    }
    let z_max = DEFAULT_Z_MAX.max(2.0 * r1);
    let plan = FourierPlan::new(*u0.grid());
    let width = to_f64(u0.grid().spacing());
    let omega = |z: f64| to_f64(l1_translation(&plan, u0, cst(z)));
    let density = |z: f64| (z.powf(-1.0 - 2.0 * lambda) - z.powf(-1.0 - 2.0 * beta)).abs();
    let panels = |from: f64, to: f64| {
        let mut breaks = vec![from];
        let targets: Vec<f64> = [1.0, to].into_iter().filter(|&t| t > from).collect();
        for target in targets {
            let mut a = *breaks.last().unwrap();
            while a < target {
                let b = (2.0 * a).min(a + width).min(target);
                breaks.push(b);
                a = b;
            }
        }
        breaks
    };
    let mut body = 0.0;
    for w in panels(r1, z_max).windows(2) {
        for (z, wt) in quadrature::gl4_panel(w[0], w[1]) {
            body += wt * density(z) * omega(z);
        }
    }
    let tau = std::f64::consts::TAU;
    let mut period_mean = 0.0;
    let mut a = 0.0;
    while a < tau {
        let b = (a + width).min(tau);
        period_mean += quadrature::gl4_panel(a, b).map(|(z, wt)| wt * omega(z)).sum::<f64>();
        a = b;
    }
    period_mean /= tau;
    let far = (z_max.powf(-2.0 * lambda) / (2.0 * lambda) - z_max.powf(-2.0 * beta) / (2.0 * beta)).abs();
    let l1 = to_f64(lp_norm(u0, T::one())?);
    // both half-lines contribute equally
    Ok((2.0 * (body + period_mean * far), 2.0 * 2.0 * l1 * far))
}
