//! Flux, diffusion and noise coefficients together with sampled checks of the
//! structural hypotheses they are expected to satisfy.

use std::fmt;
use std::sync::Arc;

use serde::Serialize;

use crate::error::{domain, Error, Result};
use crate::quadrature;
use crate::real::{cst, to_f64, Real};

pub type ScalarFn<T> = Arc<dyn Fn(T) -> T + Send + Sync>;
pub type NoiseFn<T> = Arc<dyn Fn(T, T) -> T + Send + Sync>;

/// Scalar flux `F` with its derivative and growth metadata.
#[derive(Clone)]
pub struct FluxSpec<T> {
    name: String,
    eval: ScalarFn<T>,
    deriv: ScalarFn<T>,
    /// Exponent `q*` in `|F'(ξ)| ≤ C (1 + |ξ|^{q*-1})`.
    pub growth_exponent: T,
    pub growth_constant: T,
    /// Hölder exponent of the derivative modulus, when declared.
    pub holder_exponent_f1: Option<T>,
    lipschitz: Option<T>,
}

impl<T: Real> fmt::Debug for FluxSpec<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FluxSpec")
            .field("name", &self.name)
            .field("growth_exponent", &self.growth_exponent)
            .field("growth_constant", &self.growth_constant)
            .field("lipschitz", &self.lipschitz)
            .finish()
    }
}

impl<T: Real> FluxSpec<T> {
    pub fn new(
        name: impl Into<String>,
        eval: impl Fn(T) -> T + Send + Sync + 'static,
        deriv: impl Fn(T) -> T + Send + Sync + 'static,
        growth_exponent: T,
        growth_constant: T,
    ) -> Self {
        Self {
            name: name.into(),
            eval: Arc::new(eval),
            deriv: Arc::new(deriv),
            growth_exponent,
            growth_constant,
            holder_exponent_f1: None,
            lipschitz: None,
        }
    }

    pub fn with_holder_exponent(mut self, exponent: T) -> Self {
        self.holder_exponent_f1 = Some(exponent);
        self
    }

    pub fn with_lipschitz(mut self, l: T) -> Self {
        self.lipschitz = Some(l);
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    #[inline]
    pub fn eval(&self, xi: T) -> T {
        (self.eval)(xi)
    }

    #[inline]
    pub fn deriv(&self, xi: T) -> T {
        (self.deriv)(xi)
    }

    /// Global Lipschitz constant, known for regularized and linear fluxes.
    pub fn lipschitz(&self) -> Option<T> {
        self.lipschitz
    }

    /// `max |F'|` sampled on `[-bound, bound]`.
    pub fn max_speed_on(&self, bound: T) -> T {
        let n = 2048;
        (0..=n)
            .map(|i| {
                let xi = -bound + cst::<T>(2.0 * i as f64 / n as f64) * bound;
                self.deriv(xi).abs()
            })
            .fold(T::zero(), T::max)
    }

    /// `F ≡ 0`.
    pub fn zero() -> Self {
        Self::new("zero", |_| T::zero(), |_| T::zero(), T::one(), T::zero())
            .with_lipschitz(T::zero())
            .with_holder_exponent(T::one())
    }

    /// `F(ξ) = c ξ`.
    pub fn linear(speed: T) -> Self {
        Self::new("linear", move |xi| speed * xi, move |_| speed, T::one(), speed.abs())
            .with_lipschitz(speed.abs())
            .with_holder_exponent(T::one())
    }

    /// Burgers flux `F(ξ) = ξ²/2`.
    pub fn burgers() -> Self {
        Self::new("burgers", |xi: T| cst::<T>(0.5) * xi * xi, |xi| xi, cst(2.0), T::one())
            .with_holder_exponent(T::one())
    }

    /// `F(ξ) = (2/3) sign(ξ) |ξ|^{3/2}`, whose derivative `|ξ|^{1/2}` is only Hölder-1/2.
    pub fn sqrt_derivative() -> Self {
        Self::new(
            "sqrt-derivative",
            |xi: T| cst::<T>(2.0 / 3.0) * xi.signum() * xi.abs().powf(cst(1.5)),
            |xi: T| xi.abs().sqrt(),
            cst(1.5),
            T::one(),
        )
        .with_holder_exponent(cst(0.5))
    }

    /// `F + ε ξ`, so that `G' = F' + ε`.
    pub fn tilted(&self, eps: T) -> Self {
        let (f, d) = (self.eval.clone(), self.deriv.clone());
        let mut out = Self::new(
            format!("{}+tilt", self.name),
            move |xi| f(xi) + eps * xi,
            move |xi| d(xi) + eps,
            self.growth_exponent,
            self.growth_constant + eps.abs(),
        );
        out.holder_exponent_f1 = self.holder_exponent_f1;
        out.lipschitz = self.lipschitz.map(|l| l + eps.abs());
        out
    }
}

/// Number of mollifier nodes on each side of the centre (grid step `τ/8`).
const MOLLIFIER_HALF_WIDTH: usize = 8;

fn bump(s: f64) -> f64 {
    if s.abs() >= 1.0 {
        0.0
    } else {
        (-1.0 / (1.0 - s * s)).exp()
    }
}

/// Smooth truncation: 1 on `|ξ| ≤ a`, 0 on `|ξ| ≥ a + 1`, C² in between.
fn truncation<T: Real>(xi: T, a: T) -> (T, T) {
    let t = xi.abs() - a;
    if t <= T::zero() {
        return (T::one(), T::zero());
    }
    if t >= T::one() {
        return (T::zero(), T::zero());
    }
    let s = T::one() - t;
    let six = cst::<T>(6.0);
    let value = s * s * s * (s * (s * six - cst(15.0)) + cst(10.0));
    let slope = cst::<T>(30.0) * s * s * (s - T::one()) * (s - T::one());
    (value, -slope * xi.signum())
}

/// `F^τ = (F * κ_τ) · S_τ`.
///
/// `κ_τ` is the unit-mass bump of half-width `τ`, discretised on a grid of
/// step `τ/8`; the convolution is evaluated directly at the query point.
/// The recorded Lipschitz constant bounds `|(F*κ_τ)' S_τ| + |(F*κ_τ) S_τ'|`
/// from samples of `F'` and `F` over the support.
pub fn regularize_flux<T: Real>(spec: &FluxSpec<T>, tau: T) -> Result<FluxSpec<T>> {
    if !(tau > T::zero()) || !tau.is_finite() {
        return Err(domain("tau", to_f64(tau), "(0, ∞)"));
    }
    let raw: Vec<f64> = (0..=MOLLIFIER_HALF_WIDTH)
        .map(|i| bump(i as f64 / MOLLIFIER_HALF_WIDTH as f64))
        .collect();
    let mass = raw[0] + 2.0 * raw[1..].iter().sum::<f64>();
    let weights: Arc<Vec<(T, T)>> = Arc::new(
        raw.iter()
            .enumerate()
            .map(|(i, w)| (cst::<T>(i as f64 / MOLLIFIER_HALF_WIDTH as f64) * tau, cst::<T>(w / mass)))
            .collect(),
    );
    let cutoff = tau.recip();

    let mollify = |g: ScalarFn<T>, weights: Arc<Vec<(T, T)>>| {
        move |xi: T| {
            let mut acc = weights[0].1 * g(xi);
            for &(s, w) in &weights[1..] {
                if w > T::zero() {
                    acc = acc + w * (g(xi - s) + g(xi + s));
                }
            }
            acc
        }
    };
    let f_conv = mollify(spec.eval.clone(), weights.clone());
    let d_conv = mollify(spec.deriv.clone(), weights.clone());
    let f_conv2 = f_conv.clone();

    let eval = move |xi: T| {
        let (s, _) = truncation(xi, cutoff);
        if s == T::zero() {
            T::zero()
        } else {
            s * f_conv(xi)
        }
    };
    let deriv = move |xi: T| {
        let (s, ds) = truncation(xi, cutoff);
        if s == T::zero() {
            T::zero()
        } else {
            s * d_conv(xi) + ds * f_conv2(xi)
        }
    };

    // Lipschitz bound from samples of the raw flux over the support.
    let outer = cutoff + T::one() + tau;
    let n = 4096;
    let mut max_d = T::zero();
    let mut max_f_edge = T::zero();
    for i in 0..=n {
        let xi = -outer + cst::<T>(2.0 * i as f64 / n as f64) * outer;
        max_d = max_d.max(spec.deriv(xi).abs());
        if xi.abs() >= cutoff - tau {
            max_f_edge = max_f_edge.max(spec.eval(xi).abs());
        }
    }
    for xi in [outer, -outer, cutoff - tau, tau - cutoff] {
        max_d = max_d.max(spec.deriv(xi).abs());
        max_f_edge = max_f_edge.max(spec.eval(xi).abs());
    }
    let lipschitz = max_d + cst::<T>(15.0 / 8.0) * max_f_edge;

    let mut out = FluxSpec::new(
        format!("{}~reg({})", spec.name, to_f64(tau)),
        eval,
        deriv,
        spec.growth_exponent,
        spec.growth_constant,
    )
    .with_lipschitz(lipschitz);
    out.holder_exponent_f1 = spec.holder_exponent_f1;
    Ok(out)
}

/// `max_{ξ, |ζ| ≤ δ} |F'(ξ) - F'(ξ+ζ)| / (1 + |ξ|^{q*-1})` over the sampled grid.
pub fn flux_modulus<T: Real>(spec: &FluxSpec<T>, delta: T, xi_grid: &[T]) -> Result<T> {
    if !(delta > T::zero()) {
        return Err(domain("delta", to_f64(delta), "(0, ∞)"));
    }
    let q1 = spec.growth_exponent - T::one();
    let offsets = 32;
    let mut worst = T::zero();
    for &xi in xi_grid {
        let d0 = spec.deriv(xi);
        let weight = T::one() + xi.abs().powf(q1);
        for j in 0..=offsets {
            let zeta = -delta + cst::<T>(2.0 * j as f64 / offsets as f64) * delta;
            worst = worst.max((d0 - spec.deriv(xi + zeta)).abs() / weight);
        }
    }
    Ok(worst)
}

/// Cumulative integral of a bounded integrand on a uniform table, evaluated by
/// cubic Hermite interpolation with the integrand as slope.
#[derive(Clone, Debug)]
struct PrimitiveTable {
    bound: f64,
    step: f64,
    values: Vec<f64>,
    slopes: Vec<f64>,
}

impl PrimitiveTable {
    fn build(integrand: &dyn Fn(f64) -> f64, bound: f64, cells_per_side: usize) -> Self {
        let step = bound / cells_per_side as f64;
        let n = 2 * cells_per_side;
        let node = |i: usize| -bound + step * i as f64;
        let mut values = vec![0.0; n + 1];
        for i in cells_per_side..n {
            let part = quadrature::integrate(integrand, node(i), node(i + 1), 1e-15, 1e-13);
            values[i + 1] = values[i] + part;
        }
        for i in (0..cells_per_side).rev() {
            let part = quadrature::integrate(integrand, node(i), node(i + 1), 1e-15, 1e-13);
            values[i] = values[i + 1] - part;
        }
        let slopes = (0..=n).map(|i| integrand(node(i))).collect();
        Self { bound, step, values, slopes }
    }

    fn eval(&self, x: f64) -> f64 {
        let n = self.values.len() - 1;
        if x >= self.bound {
            return self.values[n] + self.slopes[n] * (x - self.bound);
        }
        if x <= -self.bound {
            return self.values[0] + self.slopes[0] * (x + self.bound);
        }
        let pos = (x + self.bound) / self.step;
        let i = (pos.floor() as usize).min(n - 1);
        let t = pos - i as f64;
        let (y0, y1) = (self.values[i], self.values[i + 1]);
        let (m0, m1) = (self.slopes[i] * self.step, self.slopes[i + 1] * self.step);
        let t2 = t * t;
        let t3 = t2 * t;
        (2.0 * t3 - 3.0 * t2 + 1.0) * y0
            + (t3 - 2.0 * t2 + t) * m0
            + (-2.0 * t3 + 3.0 * t2) * y1
            + (t3 - t2) * m1
    }
}

/// Scalar diffusion `A = σ²` with its primitives `B = ∫₀ A` and `G = ∫₀ σ`.
#[derive(Clone)]
pub struct DiffusionSpec<T> {
    name: String,
    sigma: ScalarFn<T>,
    /// Hölder exponent `γ` of `σ`.
    pub holder_exponent: T,
    pub holder_constant: T,
    /// Declared bound `sup |σ|`.
    pub sigma_sup: T,
    big_b: Arc<PrimitiveTable>,
    big_g: Arc<PrimitiveTable>,
}

impl<T: Real> fmt::Debug for DiffusionSpec<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("DiffusionSpec")
            .field("name", &self.name)
            .field("holder_exponent", &self.holder_exponent)
            .field("sigma_sup", &self.sigma_sup)
            .finish()
    }
}

/// Half-width of the primitive tables; beyond it `B` and `G` continue linearly.
const PRIMITIVE_BOUND: f64 = 16.0;
const PRIMITIVE_CELLS: usize = 2048;

impl<T: Real> DiffusionSpec<T> {
    pub fn new(
        name: impl Into<String>,
        sigma: impl Fn(T) -> T + Send + Sync + 'static,
        holder_exponent: T,
        holder_constant: T,
        sigma_sup: T,
    ) -> Self {
        let sigma: ScalarFn<T> = Arc::new(sigma);
        let s1 = sigma.clone();
        let a64 = move |x: f64| {
            let s = to_f64(s1(cst(x)));
            s * s
        };
        let s2 = sigma.clone();
        let s64 = move |x: f64| to_f64(s2(cst(x)));
        Self {
            name: name.into(),
            big_b: Arc::new(PrimitiveTable::build(&a64, PRIMITIVE_BOUND, PRIMITIVE_CELLS)),
            big_g: Arc::new(PrimitiveTable::build(&s64, PRIMITIVE_BOUND, PRIMITIVE_CELLS)),
            sigma,
            holder_exponent,
            holder_constant,
            sigma_sup,
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    #[inline]
    pub fn sigma(&self, xi: T) -> T {
        (self.sigma)(xi)
    }

    #[inline]
    pub fn a_of(&self, xi: T) -> T {
        let s = self.sigma(xi);
        s * s
    }

    /// `B(ξ) = ∫₀^ξ A`.
    #[inline]
    pub fn big_b(&self, xi: T) -> T {
        cst(self.big_b.eval(to_f64(xi)))
    }

    /// `G(ξ) = ∫₀^ξ σ`.
    #[inline]
    pub fn big_g(&self, xi: T) -> T {
        cst(self.big_g.eval(to_f64(xi)))
    }

    /// Upper bound on `A`, used by the explicit stability limit.
    pub fn a_max(&self) -> T {
        self.sigma_sup * self.sigma_sup
    }

    pub fn is_zero(&self) -> bool {
        self.sigma_sup == T::zero()
    }

    /// `σ ≡ 0`.
    pub fn none() -> Self {
        Self::new("none", |_| T::zero(), T::one(), T::zero(), T::zero())
    }

    /// `σ ≡ s`.
    pub fn constant(s: T) -> Self {
        Self::new("constant", move |_| s, T::one(), T::zero(), s.abs())
    }

    /// `σ(ξ) = s · min(|ξ|^γ, 1)`: degenerate at 0 and `γ`-Hölder.
    pub fn holder(scale: T, gamma: T) -> Self {
        Self::new(
            "holder",
            move |xi: T| scale * xi.abs().powf(gamma).min(T::one()),
            gamma,
            scale.abs(),
            scale.abs(),
        )
    }

    /// `σ(ξ) = s · min(|ξ|, 1)`, a capped porous-medium diffusion.
    pub fn porous(scale: T) -> Self {
        Self::new(
            "degenerate-porous",
            move |xi: T| scale * xi.abs().min(T::one()),
            T::one(),
            scale.abs(),
            scale.abs(),
        )
    }

    /// `σ(ξ) = s · 1_{|ξ| > a}`; violates continuity at `±a`.
    pub fn indicator(scale: T, threshold: T) -> Self {
        Self::new(
            "indicator",
            move |xi: T| if xi.abs() > threshold { scale } else { T::zero() },
            T::one(),
            scale.abs(),
            scale.abs(),
        )
    }

    /// `σ + ε`, the root of the perturbed diffusion.
    pub fn shifted(&self, eps: T) -> Self {
        let s = self.sigma.clone();
        Self::new(
            format!("{}+{}", self.name, to_f64(eps)),
            move |xi| s(xi) + eps,
            self.holder_exponent,
            self.holder_constant,
            self.sigma_sup + eps.abs(),
        )
    }
}

/// Finite family `β_k(x, u)` of noise coefficients.
#[derive(Clone)]
pub struct NoiseSpec<T> {
    name: String,
    betas: Vec<NoiseFn<T>>,
    /// Per-mode profile `w_k` with `Σ w_k² = 1`, used for additive perturbations.
    weights: Vec<T>,
    pub d0: T,
    pub d1: T,
    modulus: ScalarFn<T>,
    pub spatially_homogeneous: bool,
    /// Exponent `λ_2` with `|Φ(ξ) - Φ(ζ)|² ≤ |ξ - ζ|^{λ_2 + 1}`, when declared.
    pub lipschitz_exponent: Option<T>,
}

impl<T: Real> fmt::Debug for NoiseSpec<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("NoiseSpec")
            .field("name", &self.name)
            .field("truncation", &self.betas.len())
            .field("d0", &self.d0)
            .field("d1", &self.d1)
            .field("spatially_homogeneous", &self.spatially_homogeneous)
            .finish()
    }
}

/// `w_k = k^{-2} / (Σ_j j^{-4})^{1/2}`, `k = 1..=K`.
pub fn decaying_weights<T: Real>(truncation: usize) -> Vec<T> {
    let raw: Vec<f64> = (1..=truncation).map(|k| (k as f64).powi(-2)).collect();
    let norm = raw.iter().map(|w| w * w).sum::<f64>().sqrt();
    raw.into_iter().map(|w| cst(w / norm)).collect()
}

impl<T: Real> NoiseSpec<T> {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        name: impl Into<String>,
        betas: Vec<NoiseFn<T>>,
        weights: Vec<T>,
        d0: T,
        d1: T,
        spatially_homogeneous: bool,
    ) -> Self {
        Self {
            name: name.into(),
            betas,
            weights,
            d0,
            d1,
            modulus: Arc::new(|z: T| z.min(T::one())),
            spatially_homogeneous,
            lipschitz_exponent: None,
        }
    }

    pub fn with_modulus(mut self, h: impl Fn(T) -> T + Send + Sync + 'static) -> Self {
        self.modulus = Arc::new(h);
        self
    }

    pub fn with_lipschitz_exponent(mut self, e: T) -> Self {
        self.lipschitz_exponent = Some(e);
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn truncation(&self) -> usize {
        self.betas.len()
    }

    pub fn is_zero(&self) -> bool {
        self.betas.is_empty()
    }

    #[inline]
    pub fn beta(&self, k: usize, x: T, u: T) -> T {
        (self.betas[k])(x, u)
    }

    /// `β²(x, u) = Σ_k β_k(x, u)²`.
    pub fn beta_sq(&self, x: T, u: T) -> T {
        self.betas.iter().map(|b| {
            let v = b(x, u);
            v * v
        }).sum()
    }

    pub fn modulus(&self, z: T) -> T {
        (self.modulus)(z)
    }

    pub fn weights(&self) -> &[T] {
        &self.weights
    }

    /// `Φ = 0`.
    pub fn none() -> Self {
        Self::new("none", Vec::new(), Vec::new(), T::zero(), T::zero(), true)
            .with_lipschitz_exponent(T::one())
    }

    /// `β_k(u) = c w_k`: bounded, state-independent forcing.
    pub fn additive(c: T, truncation: usize) -> Self {
        let weights = decaying_weights::<T>(truncation);
        let betas = weights
            .iter()
            .map(|&w| Arc::new(move |_x: T, _u: T| c * w) as NoiseFn<T>)
            .collect();
        Self::new("additive", betas, weights, c * c, T::zero(), true)
            .with_lipschitz_exponent(T::one())
    }

    /// `β_k(u) = a w_k u`, so that `β²(u) = a² u²`.
    pub fn multiplicative(a: T, truncation: usize) -> Self {
        let weights = decaying_weights::<T>(truncation);
        let betas = weights
            .iter()
            .map(|&w| Arc::new(move |_x: T, u: T| a * w * u) as NoiseFn<T>)
            .collect();
        Self::new("multiplicative", betas, weights, a * a, a * a, true)
            .with_lipschitz_exponent(T::one())
    }

    /// `β_k(x, u) = a w_k u √2 cos(k x)`: x-dependent multiplicative noise.
    ///
    /// `d1` is declared for states with `|u| ≤ state_bound`.
    pub fn multiplicative_spatial(a: T, truncation: usize, state_bound: T) -> Self {
        let weights = decaying_weights::<T>(truncation);
        let sqrt2 = T::SQRT_2();
        let betas = weights
            .iter()
            .enumerate()
            .map(|(i, &w)| {
                let k = cst::<T>((i + 1) as f64);
                Arc::new(move |x: T, u: T| a * w * u * sqrt2 * (k * x).cos()) as NoiseFn<T>
            })
            .collect();
        let k2w2: T = weights
            .iter()
            .enumerate()
            .map(|(i, &w)| cst::<T>(((i + 1) * (i + 1)) as f64) * w * w)
            .sum();
        let d1 = cst::<T>(4.0) * a * a * (T::one() + state_bound * state_bound * k2w2);
        Self::new("multiplicative-spatial", betas, weights, cst::<T>(2.0) * a * a, d1, false)
            .with_lipschitz_exponent(T::one())
    }

    /// `Ψ = Φ + ε`, i.e. `β_k + ε w_k`, so that `‖Φ - Ψ‖_∞ = |ε|`.
    pub fn shifted(&self, eps: T) -> Self {
        let k = self.betas.len();
        let weights = if self.weights.len() == k { self.weights.clone() } else { decaying_weights(k) };
        let betas = self
            .betas
            .iter()
            .zip(&weights)
            .map(|(b, &w)| {
                let b = b.clone();
                Arc::new(move |x: T, u: T| b(x, u) + eps * w) as NoiseFn<T>
            })
            .collect();
        let mut out = Self::new(
            format!("{}+{}", self.name, to_f64(eps)),
            betas,
            weights,
            // (a + b)² ≤ 2a² + 2b²
            cst::<T>(2.0) * (self.d0 + eps * eps),
            self.d1,
            self.spatially_homogeneous,
        );
        out.modulus = self.modulus.clone();
        out.lipschitz_exponent = self.lipschitz_exponent;
        out
    }

    /// `sup_u ‖Φ(u) - Ψ(u)‖` sampled over `xi_grid` (and a fixed x-sample).
    pub fn sup_distance(&self, other: &Self, xi_grid: &[T]) -> T {
        let xs = sample_points::<T>();
        let k = self.truncation().max(other.truncation());
        let get = |s: &Self, j: usize, x: T, u: T| if j < s.truncation() { s.beta(j, x, u) } else { T::zero() };
        let mut worst = T::zero();
        for &x in &xs {
            for &u in xi_grid {
                let d: T = (0..k)
                    .map(|j| {
                        let v = get(self, j, x, u) - get(other, j, x, u);
                        v * v
                    })
                    .sum();
                worst = worst.max(d.sqrt());
            }
        }
        worst
    }
}

fn sample_points<T: Real>() -> Vec<T> {
    (0..16).map(|i| cst::<T>(i as f64) * T::TAU() / cst(16.0)).collect()
}

/// One sampled hypothesis and its worst observed ratio to the claimed bound.
#[derive(Clone, Debug, Serialize)]
pub struct HypothesisCheck {
    pub name: &'static str,
    pub worst_ratio: f64,
    pub passed: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct HypothesisReport {
    pub entries: Vec<HypothesisCheck>,
}

impl HypothesisReport {
    pub fn all_passed(&self) -> bool {
        self.entries.iter().all(|e| e.passed)
    }

    pub fn entry(&self, name: &str) -> Option<&HypothesisCheck> {
        self.entries.iter().find(|e| e.name == name)
    }
}

const RATIO_TOLERANCE: f64 = 1e-9;

fn check(name: &'static str, worst: f64) -> HypothesisCheck {
    let worst = if worst.is_nan() { f64::INFINITY } else { worst };
    HypothesisCheck { name, worst_ratio: worst, passed: worst <= 1.0 + RATIO_TOLERANCE }
}

fn ratio(observed: f64, bound: f64) -> f64 {
    if observed == 0.0 {
        0.0
    } else if bound <= 0.0 {
        f64::INFINITY
    } else {
        observed / bound
    }
}

/// Samples every structural hypothesis on `xi_grid` and reports worst ratios.
///
/// Pair checks (Hölder continuity of `σ`, continuity of the noise) use pairs
/// of grid points closer than 1.
pub fn check_hypotheses<T: Real>(
    flux: &FluxSpec<T>,
    diff: &DiffusionSpec<T>,
    noise: &NoiseSpec<T>,
    xi_grid: &[T],
) -> Result<HypothesisReport> {
    if xi_grid.is_empty() {
        return Err(Error::Format("hypothesis check needs a nonempty ξ-grid".into()));
    }
    let xi: Vec<f64> = xi_grid.iter().map(|&v| to_f64(v)).collect();
    let q1 = to_f64(flux.growth_exponent) - 1.0;
    let c = to_f64(flux.growth_constant);
    let growth = |x: f64| 1.0 + x.abs().powf(q1);
    let fd = |x: f64| to_f64(flux.deriv(cst(x)));
    let mut entries = Vec::new();

    let worst = xi.iter().map(|&x| ratio(fd(x).abs(), c * growth(x))).fold(0.0, f64::max);
    entries.push(check("flux-growth", worst));

    let deltas = [1e-3, 1e-2, 1e-1];
    let modulus_ratio = |exponent: f64| {
        let mut worst: f64 = 0.0;
        for &delta in &deltas {
            for &x in &xi {
                for j in 0..=8 {
                    let zeta = -delta + 2.0 * delta * j as f64 / 8.0;
                    let obs = (fd(x) - fd(x + zeta)).abs();
                    worst = worst.max(ratio(obs, c * growth(x) * delta.powf(exponent)));
                }
            }
        }
        worst
    };
    entries.push(check("flux-modulus", modulus_ratio(1.0)));
    if let Some(e) = flux.holder_exponent_f1 {
        entries.push(check("flux-holder-modulus", modulus_ratio(to_f64(e))));
    }

    let sig = |x: f64| to_f64(diff.sigma(cst(x)));
    let neg = xi.iter().any(|&x| sig(x) < 0.0);
    entries.push(check("diffusion-nonnegative", if neg { f64::INFINITY } else { 0.0 }));
    let sup = to_f64(diff.sigma_sup);
    let worst = xi.iter().map(|&x| ratio(sig(x).abs(), sup)).fold(0.0, f64::max);
    entries.push(check("diffusion-bounded", worst));

    let gamma = to_f64(diff.holder_exponent);
    let hc = to_f64(diff.holder_constant);
    let sig_vals: Vec<f64> = xi.iter().map(|&x| sig(x)).collect();
    let mut worst: f64 = if gamma > 0.5 { 0.0 } else { f64::INFINITY };
    for i in 0..xi.len() {
        for j in (i + 1)..xi.len() {
            let d = (xi[i] - xi[j]).abs();
            if d >= 1.0 || d == 0.0 {
                continue;
            }
            worst = worst.max(ratio((sig_vals[i] - sig_vals[j]).abs(), hc * d.powf(gamma)));
        }
    }
    entries.push(check("diffusion-holder", worst));

    let xs = sample_points::<T>();
    let d0 = to_f64(noise.d0);
    let mut worst: f64 = 0.0;
    for &x in &xs {
        for &u in &xi {
            let b2 = to_f64(noise.beta_sq(x, cst(u)));
            worst = worst.max(ratio(b2, d0 * (1.0 + u * u)));
        }
    }
    entries.push(check("noise-growth", worst));

    let d1 = to_f64(noise.d1);
    let k = noise.truncation();
    let mut worst: f64 = 0.0;
    let xs_pairs: Vec<(T, T)> = if noise.spatially_homogeneous {
        vec![(T::zero(), T::zero())]
    } else {
        xs.iter().flat_map(|&a| xs.iter().map(move |&b| (a, b))).collect()
    };
    for &(x, y) in &xs_pairs {
        let dx = to_f64(x - y);
        let dx = dx.abs().min(std::f64::consts::TAU - dx.abs());
        for i in 0..xi.len() {
            for j in i..xi.len() {
                let du = (xi[i] - xi[j]).abs();
                if du >= 1.0 {
                    continue;
                }
                let (u, v) = (cst::<T>(xi[i]), cst::<T>(xi[j]));
                let obs: f64 = (0..k)
                    .map(|m| {
                        let diff = to_f64(noise.beta(m, x, u) - noise.beta(m, y, v));
                        diff * diff
                    })
                    .sum();
                let bound = d1 * (dx * dx + du * to_f64(noise.modulus(cst(du))));
                worst = worst.max(ratio(obs, bound));
            }
        }
    }
    entries.push(check("noise-continuity", worst));

    Ok(HypothesisReport { entries })
}

/// Tabulated coefficients `(ξ, F(ξ), σ(ξ))`.
///
/// `F` is a cubic Hermite interpolant with centred-difference slopes, `σ` is
/// piecewise linear; both extend with their end behaviour outside the table.
pub fn tabulated_from_csv<T: Real>(text: &str) -> Result<(FluxSpec<T>, DiffusionSpec<T>)> {
    let mut rows: Vec<(f64, f64, f64)> = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let cols: Vec<&str> = line.split(',').map(str::trim).collect();
        let parsed: std::result::Result<Vec<f64>, _> = cols.iter().map(|c| c.parse::<f64>()).collect();
        match parsed {
            Ok(v) if v.len() == 3 => rows.push((v[0], v[1], v[2])),
            Ok(_) => return Err(Error::Format(format!("line {}: expected 3 columns", lineno + 1))),
            // header line
            Err(_) if rows.is_empty() => continue,
            Err(e) => return Err(Error::Format(format!("line {}: {e}", lineno + 1))),
        }
    }
    if rows.len() < 3 {
        return Err(Error::Format("tabulated coefficients need at least 3 rows".into()));
    }
    if rows.windows(2).any(|w| w[1].0 <= w[0].0) {
        return Err(Error::Format("ξ column must be strictly increasing".into()));
    }
    let xs: Arc<Vec<f64>> = Arc::new(rows.iter().map(|r| r.0).collect());
    let fs: Arc<Vec<f64>> = Arc::new(rows.iter().map(|r| r.1).collect());
    let ss: Arc<Vec<f64>> = Arc::new(rows.iter().map(|r| r.2).collect());
    let n = xs.len();
    let slopes: Arc<Vec<f64>> = Arc::new(
        (0..n)
            .map(|i| {
                let (a, b) = (i.saturating_sub(1), (i + 1).min(n - 1));
                (fs[b] - fs[a]) / (xs[b] - xs[a])
            })
            .collect(),
    );
    let locate = |xs: &[f64], x: f64| -> usize {
        match xs.binary_search_by(|v| v.total_cmp(&x)) {
            Ok(i) => i.min(xs.len() - 2),
            Err(i) => i.saturating_sub(1).min(xs.len() - 2),
        }
    };
    let hermite = {
        let (xs, fs, slopes) = (xs.clone(), fs.clone(), slopes.clone());
        move |x: f64| -> (f64, f64) {
            let n = xs.len();
            if x <= xs[0] {
                return (fs[0] + slopes[0] * (x - xs[0]), slopes[0]);
            }
            if x >= xs[n - 1] {
                return (fs[n - 1] + slopes[n - 1] * (x - xs[n - 1]), slopes[n - 1]);
            }
            let i = locate(&xs, x);
            let h = xs[i + 1] - xs[i];
            let t = (x - xs[i]) / h;
            let (y0, y1, m0, m1) = (fs[i], fs[i + 1], slopes[i] * h, slopes[i + 1] * h);
            let (t2, t3) = (t * t, t * t * t);
            let v = (2.0 * t3 - 3.0 * t2 + 1.0) * y0 + (t3 - 2.0 * t2 + t) * m0 + (-2.0 * t3 + 3.0 * t2) * y1 + (t3 - t2) * m1;
            let d = ((6.0 * t2 - 6.0 * t) * y0 + (3.0 * t2 - 4.0 * t + 1.0) * m0 + (-6.0 * t2 + 6.0 * t) * y1 + (3.0 * t2 - 2.0 * t) * m1) / h;
            (v, d)
        }
    };
    let h1 = hermite.clone();
    let max_speed = rows.iter().map(|r| hermite(r.0).1.abs()).fold(0.0, f64::max);
    let flux = FluxSpec::new(
        "tabulated",
        move |x: T| cst(hermite(to_f64(x)).0),
        move |x: T| cst(h1(to_f64(x)).1),
        T::one(),
        cst(max_speed),
    );
    let sigma_sup = ss.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let xs2 = xs.clone();
    let sigma = move |x: T| -> T {
        let x = to_f64(x);
        let n = xs2.len();
        if x <= xs2[0] {
            return cst(ss[0]);
        }
        if x >= xs2[n - 1] {
            return cst(ss[n - 1]);
        }
        let i = locate(&xs2, x);
        let t = (x - xs2[i]) / (xs2[i + 1] - xs2[i]);
        cst(ss[i] * (1.0 - t) + ss[i + 1] * t)
    };
    let lip = (1..n)
        .map(|i| (rows[i].2 - rows[i - 1].2).abs() / (rows[i].0 - rows[i - 1].0))
        .fold(0.0f64, f64::max);
    let diffusion = DiffusionSpec::new("tabulated", sigma, T::one(), cst(lip), cst(sigma_sup));
    Ok((flux, diffusion))
}
