//! Periodic grid on the one-dimensional torus of length 2π, grid functions,
//! their discrete Fourier images, and the norms used throughout the crate.

use std::fmt;
use std::io::{self, Read, Write};
use std::sync::Arc;

use num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use crate::error::{domain, Error, Result};
use crate::real::{cst, to_f64, Real};

/// Uniform periodic grid with `M` points on `[0, 2π)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TorusGrid<T> {
    num_points: usize,
    length: T,
    spacing: T,
}

impl<T: Real> TorusGrid<T> {
    /// `num_points` must be a power of two and at least 8.
    pub fn new(num_points: usize) -> Result<Self> {
        if num_points < 8 || !num_points.is_power_of_two() {
            return Err(Error::InvalidGrid(format!(
                "M = {num_points} must be a power of two and at least 8"
            )));
        }
        let length = T::TAU();
        let spacing = length / cst::<T>(num_points as f64);
        Ok(Self { num_points, length, spacing })
    }

    pub fn num_points(&self) -> usize {
        self.num_points
    }

    pub fn length(&self) -> T {
        self.length
    }

    pub fn spacing(&self) -> T {
        self.spacing
    }

    /// Node `x_i = i h`.
    pub fn x(&self, i: usize) -> T {
        cst::<T>(i as f64) * self.spacing
    }

    /// Signed Fourier mode stored at FFT index `k`, in `{-M/2+1, …, M/2}`.
    pub fn mode(&self, k: usize) -> i64 {
        let m = self.num_points as i64;
        let k = k as i64;
        if k <= m / 2 {
            k
        } else {
            k - m
        }
    }

    /// FFT index holding signed mode `n`, if representable.
    pub fn index_of_mode(&self, n: i64) -> Option<usize> {
        let m = self.num_points as i64;
        if n > m / 2 || n <= -m / 2 {
            return None;
        }
        Some(n.rem_euclid(m) as usize)
    }
}

/// Real grid function on the torus.
#[derive(Clone, Debug, PartialEq)]
pub struct Field<T> {
    grid: TorusGrid<T>,
    values: Vec<T>,
}

impl<T: Real> Field<T> {
    pub fn new(grid: TorusGrid<T>, values: Vec<T>) -> Result<Self> {
        if values.len() != grid.num_points() {
            return Err(Error::LengthMismatch { expected: grid.num_points(), found: values.len() });
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Format(format!("non-finite field value at index {i}")));
        }
        Ok(Self { grid, values })
    }

    /// Builds a field without the finiteness scan; callers guarantee the invariant.
    pub(crate) fn from_raw(grid: TorusGrid<T>, values: Vec<T>) -> Self {
        debug_assert_eq!(values.len(), grid.num_points());
        Self { grid, values }
    }

    pub fn from_fn(grid: TorusGrid<T>, f: impl Fn(T) -> T) -> Self {
        let values = (0..grid.num_points()).map(|i| f(grid.x(i))).collect();
        Self { grid, values }
    }

    pub fn constant(grid: TorusGrid<T>, c: T) -> Self {
        Self { grid, values: vec![c; grid.num_points()] }
    }

    pub fn zeros(grid: TorusGrid<T>) -> Self {
        Self::constant(grid, T::zero())
    }

    pub fn grid(&self) -> &TorusGrid<T> {
        &self.grid
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [T] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<T> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    /// Spatial average `(1/M) Σ f_i`.
    pub fn mean(&self) -> T {
        self.values.iter().copied().sum::<T>() / cst::<T>(self.len() as f64)
    }

    /// `∫ f dx ≈ h Σ f_i`.
    pub fn integral(&self) -> T {
        self.grid.spacing() * self.values.iter().copied().sum::<T>()
    }

    pub fn max_abs(&self) -> T {
        self.values.iter().fold(T::zero(), |m, v| m.max(v.abs()))
    }

    pub fn min_value(&self) -> T {
        self.values.iter().copied().fold(T::infinity(), T::min)
    }

    pub fn max_value(&self) -> T {
        self.values.iter().copied().fold(T::neg_infinity(), T::max)
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self { grid: self.grid, values: self.values.iter().map(|&v| f(v)).collect() }
    }

    pub fn scaled(&self, c: T) -> Self {
        self.map(|v| c * v)
    }

    /// Pointwise difference; panics if the grids differ in size.
    pub fn sub(&self, other: &Self) -> Self {
        assert_eq!(self.len(), other.len(), "field sizes differ");
        let values = self.values.iter().zip(&other.values).map(|(a, b)| *a - *b).collect();
        Self { grid: self.grid, values }
    }

    pub fn add(&self, other: &Self) -> Self {
        assert_eq!(self.len(), other.len(), "field sizes differ");
        let values = self.values.iter().zip(&other.values).map(|(a, b)| *a + *b).collect();
        Self { grid: self.grid, values }
    }

    /// Discrete `L²` inner product `h Σ f_i g_i`.
    pub fn inner(&self, other: &Self) -> T {
        assert_eq!(self.len(), other.len(), "field sizes differ");
        self.grid.spacing() * self.values.iter().zip(&other.values).map(|(a, b)| *a * *b).sum::<T>()
    }

    /// Cyclic shift of the value vector by `k` cells: `out_i = f_{i+k}`.
    pub fn rotated(&self, k: usize) -> Self {
        let mut values = self.values.clone();
        values.rotate_left(k % self.len());
        Self { grid: self.grid, values }
    }
}

/// Discrete Fourier image of a field, stored in FFT order.
#[derive(Clone, Debug, PartialEq)]
pub struct SpectralField<T> {
    grid: TorusGrid<T>,
    coefficients: Vec<Complex<T>>,
}

impl<T: Real> SpectralField<T> {
    pub fn new(grid: TorusGrid<T>, coefficients: Vec<Complex<T>>) -> Result<Self> {
        if coefficients.len() != grid.num_points() {
            return Err(Error::LengthMismatch {
                expected: grid.num_points(),
                found: coefficients.len(),
            });
        }
        Ok(Self { grid, coefficients })
    }

    pub fn grid(&self) -> &TorusGrid<T> {
        &self.grid
    }

    /// Coefficients in FFT order (index `k` holds mode `grid.mode(k)`).
    pub fn coefficients(&self) -> &[Complex<T>] {
        &self.coefficients
    }

    pub fn coefficients_mut(&mut self) -> &mut [Complex<T>] {
        &mut self.coefficients
    }

    /// Coefficient of signed mode `n`, zero when the mode is not represented.
    pub fn coefficient(&self, n: i64) -> Complex<T> {
        self.grid
            .index_of_mode(n)
            .map(|k| self.coefficients[k])
            .unwrap_or_else(|| Complex::new(T::zero(), T::zero()))
    }

    /// `(mode, coefficient)` pairs in FFT order.
    pub fn modes(&self) -> impl Iterator<Item = (i64, Complex<T>)> + '_ {
        self.coefficients.iter().enumerate().map(|(k, c)| (self.grid.mode(k), *c))
    }
}

/// Cached forward/inverse FFT plans for one grid size.
#[derive(Clone)]
pub struct FourierPlan<T: Real> {
    grid: TorusGrid<T>,
    forward: Arc<dyn Fft<T>>,
    inverse: Arc<dyn Fft<T>>,
}

impl<T: Real> fmt::Debug for FourierPlan<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FourierPlan").field("num_points", &self.grid.num_points()).finish()
    }
}

impl<T: Real> FourierPlan<T> {
    pub fn new(grid: TorusGrid<T>) -> Self {
        let mut planner = FftPlanner::new();
        let m = grid.num_points();
        Self { grid, forward: planner.plan_fft_forward(m), inverse: planner.plan_fft_inverse(m) }
    }

    pub fn grid(&self) -> &TorusGrid<T> {
        &self.grid
    }

    /// Forward transform of raw values into `buf` with the `1/M` normalization.
    pub fn forward_into(&self, values: &[T], buf: &mut Vec<Complex<T>>) {
        buf.clear();
        buf.extend(values.iter().map(|&v| Complex::new(v, T::zero())));
        self.forward.process(buf);
        let inv_m = T::one() / cst::<T>(values.len() as f64);
        for c in buf.iter_mut() {
            *c = *c * inv_m;
        }
    }

    /// Inverse transform of `buf` (consumed in place); writes the real part to `out`.
    pub fn inverse_into(&self, buf: &mut [Complex<T>], out: &mut [T]) {
        self.inverse.process(buf);
        for (o, c) in out.iter_mut().zip(buf.iter()) {
            *o = c.re;
        }
    }

    pub fn forward(&self, f: &Field<T>) -> SpectralField<T> {
        let mut buf = Vec::with_capacity(f.len());
        self.forward_into(f.values(), &mut buf);
        SpectralField { grid: self.grid, coefficients: buf }
    }

    pub fn inverse(&self, s: &SpectralField<T>) -> Field<T> {
        let mut buf = s.coefficients.clone();
        let mut out = vec![T::zero(); buf.len()];
        self.inverse_into(&mut buf, &mut out);
        Field::from_raw(self.grid, out)
    }

    /// Applies a real, even Fourier multiplier given per FFT index.
    pub fn apply_multiplier(&self, f: &Field<T>, multiplier: &[T]) -> Field<T> {
        let mut buf = Vec::with_capacity(f.len());
        self.forward_into(f.values(), &mut buf);
        for (c, m) in buf.iter_mut().zip(multiplier) {
            *c = *c * *m;
        }
        let mut out = vec![T::zero(); f.len()];
        self.inverse_into(&mut buf, &mut out);
        Field::from_raw(self.grid, out)
    }

    /// Trigonometric interpolant of `f` shifted by `z`: `x_i ↦ f(x_i + z)`.
    ///
    /// The Nyquist mode is treated as `cos(M x / 2)` so the result stays real.
    pub fn shifted(&self, f: &Field<T>, z: T) -> Field<T> {
        let mut buf = Vec::with_capacity(f.len());
        self.forward_into(f.values(), &mut buf);
        let m = self.grid.num_points();
        for (k, c) in buf.iter_mut().enumerate() {
            let n = self.grid.mode(k);
            let phase = cst::<T>(n as f64) * z;
            if 2 * k == m {
                *c = *c * phase.cos();
            } else {
                *c = *c * Complex::new(phase.cos(), phase.sin());
            }
        }
        let mut out = vec![T::zero(); m];
        self.inverse_into(&mut buf, &mut out);
        Field::from_raw(self.grid, out)
    }

    /// Spectral derivative `∂ₓ f`.
    pub fn derivative(&self, f: &Field<T>) -> Field<T> {
        let mut buf = Vec::with_capacity(f.len());
        self.forward_into(f.values(), &mut buf);
        let m = self.grid.num_points();
        for (k, c) in buf.iter_mut().enumerate() {
            let n = if 2 * k == m { 0 } else { self.grid.mode(k) };
            *c = *c * Complex::new(T::zero(), cst::<T>(n as f64));
        }
        let mut out = vec![T::zero(); m];
        self.inverse_into(&mut buf, &mut out);
        Field::from_raw(self.grid, out)
    }
}

/// Forward DFT, `û(n) = (1/M) Σ_i f(x_i) e^{-i n x_i}`.
pub fn dft<T: Real>(f: &Field<T>) -> SpectralField<T> {
    FourierPlan::new(*f.grid()).forward(f)
}

/// Inverse of [`dft`]; returns the real part.
pub fn idft<T: Real>(s: &SpectralField<T>) -> Field<T> {
    FourierPlan::new(*s.grid()).inverse(s)
}

/// `(h Σ |f_i|^p)^{1/p}`; `p = ∞` yields `max |f_i|`.
pub fn lp_norm<T: Real>(f: &Field<T>, p: T) -> Result<T> {
    if p.is_nan() || p < T::one() {
        return Err(domain("p", to_f64(p), "[1, ∞]"));
    }
    if p.is_infinite() {
        return Ok(f.max_abs());
    }
    let h = f.grid().spacing();
    if p == T::one() {
        return Ok(h * f.values().iter().map(|v| v.abs()).sum::<T>());
    }
    if p == cst(2.0) {
        return Ok((h * f.values().iter().map(|v| *v * *v).sum::<T>()).sqrt());
    }
    let s: T = f.values().iter().map(|v| v.abs().powf(p)).sum();
    Ok((h * s).powf(p.recip()))
}

/// `h Σ |f_i|^p`, the `p`-th power of [`lp_norm`] without the root.
pub fn lp_norm_pow<T: Real>(f: &Field<T>, p: T) -> T {
    f.grid().spacing() * f.values().iter().map(|v| v.abs().powf(p)).sum::<T>()
}

/// `Σ_i |f_{i+1} - f_i|` with periodic wraparound.
pub fn total_variation<T: Real>(f: &Field<T>) -> T {
    let v = f.values();
    let m = v.len();
    (0..m).map(|i| (v[(i + 1) % m] - v[i]).abs()).sum()
}

/// `(Σ_n |n|^{2λ} |û(n)|²)^{1/2}`.
pub fn h_lambda_seminorm<T: Real>(f: &Field<T>, lambda: T) -> Result<T> {
    if !(lambda > T::zero() && lambda < T::one()) {
        return Err(domain("lambda", to_f64(lambda), "(0, 1)"));
    }
    Ok(weighted_energy(&dft(f), |n| n.abs().powf(cst::<T>(2.0) * lambda)).sqrt())
}

/// `Σ_n w(|n|) |û(n)|²`.
pub fn weighted_energy<T: Real>(s: &SpectralField<T>, w: impl Fn(T) -> T) -> T {
    s.modes().map(|(n, c)| w(cst::<T>(n as f64)) * c.norm_sqr()).sum()
}

/// `‖f(· + z) - f‖_{L¹}` with `f` extended by trigonometric interpolation.
pub fn l1_translation<T: Real>(plan: &FourierPlan<T>, f: &Field<T>, z: T) -> T {
    let shifted = plan.shifted(f, z);
    let h = f.grid().spacing();
    h * shifted.values().iter().zip(f.values()).map(|(a, b)| (*a - *b).abs()).sum::<T>()
}

/// Writes `M` as little-endian `u64` followed by `M` little-endian `f64` values.
pub fn write_binary<T: Real, W: Write>(f: &Field<T>, mut w: W) -> io::Result<()> {
    w.write_all(&(f.len() as u64).to_le_bytes())?;
    for v in f.values() {
        w.write_all(&to_f64(*v).to_le_bytes())?;
    }
    Ok(())
}

/// Reads one field written by [`write_binary`].
pub fn read_binary<T: Real, R: Read>(mut r: R) -> Result<Field<T>> {
    let mut word = [0u8; 8];
    r.read_exact(&mut word)?;
    let m = u64::from_le_bytes(word) as usize;
    let grid = TorusGrid::new(m)?;
    let mut values = Vec::with_capacity(m);
    for _ in 0..m {
        r.read_exact(&mut word)?;
        values.push(cst::<T>(f64::from_le_bytes(word)));
    }
    Field::new(grid, values)
}

/// Writes `index,x,value` rows with a header line.
pub fn write_csv<T: Real, W: Write>(f: &Field<T>, mut w: W) -> io::Result<()> {
    writeln!(w, "index,x,value")?;
    for (i, v) in f.values().iter().enumerate() {
        writeln!(w, "{},{:e},{:e}", i, to_f64(f.grid().x(i)), to_f64(*v))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{PI, TAU};

    fn grid(m: usize) -> TorusGrid<f64> {
        TorusGrid::new(m).unwrap()
    }

    #[test]
    fn grid_validation() {
        assert!(TorusGrid::<f64>::new(4).is_err());
        assert!(TorusGrid::<f64>::new(48).is_err());
        let g = grid(64);
        assert!((g.spacing() * 64.0 - TAU).abs() < 1e-15);
        assert_eq!(g.mode(32), 32);
        assert_eq!(g.mode(33), -31);
        assert_eq!(g.index_of_mode(-1), Some(63));
        assert_eq!(g.index_of_mode(-32), None);
    }

    #[test]
    fn field_rejects_bad_input() {
        let g = grid(8);
        assert!(Field::new(g, vec![0.0; 7]).is_err());
        let mut v = vec![0.0; 8];
        v[3] = f64::NAN;
        assert!(Field::new(g, v).is_err());
    }

    #[test]
    fn dft_of_constant_and_cosine() {
        let g = grid(16);
        let s = dft(&Field::constant(g, 2.5));
        assert!((s.coefficient(0).re - 2.5).abs() < 1e-14);
        for n in 1..=8 {
            assert!(s.coefficient(n).norm() < 1e-14);
        }
        let s = dft(&Field::from_fn(g, f64::cos));
        for n in -7..=8i64 {
            let want = if n.abs() == 1 { 0.5 } else { 0.0 };
            assert!((s.coefficient(n).re - want).abs() < 1e-14, "mode {n}");
            assert!(s.coefficient(n).im.abs() < 1e-14);
        }
    }

    #[test]
    fn lp_norm_cases() {
        let g = grid(32);
        let c = Field::constant(g, -3.0);
        assert!((lp_norm(&c, 2.0).unwrap() - 3.0 * TAU.sqrt()).abs() < 1e-12);
        assert_eq!(lp_norm(&Field::zeros(g), 3.0).unwrap(), 0.0);
        assert_eq!(lp_norm(&c, f64::INFINITY).unwrap(), 3.0);
        assert!(lp_norm(&c, 0.5).is_err());
        let s = Field::from_fn(grid(1024), f64::sin);
        assert!((lp_norm(&s, 1.0).unwrap() - 4.0).abs() < 1e-3);
    }

    #[test]
    fn total_variation_cases() {
        let g = grid(1024);
        assert_eq!(total_variation(&Field::constant(g, 1.0)), 0.0);
        assert!((total_variation(&Field::from_fn(g, f64::sin)) - 4.0).abs() < 1e-3);
        let sq = Field::from_fn(grid(64), |x| if x < PI { 2.0 } else { -0.5 });
        assert!((total_variation(&sq) - 5.0).abs() < 1e-14);
    }

    #[test]
    fn seminorm_cases() {
        let g = grid(64);
        assert!(h_lambda_seminorm(&Field::constant(g, 4.0), 0.3).unwrap() < 1e-12);
        let c1 = Field::from_fn(g, f64::cos);
        assert!((h_lambda_seminorm(&c1, 0.5).unwrap() - 0.5f64.sqrt()).abs() < 1e-13);
        // modes ±2 with amplitude 1/2 each: sqrt(2 · 2^{0.5} · 1/4)
        let c2 = Field::from_fn(g, |x| (2.0 * x).cos());
        let oracle = (2.0 * 2f64.powf(0.5) * 0.25).sqrt();
        assert!((h_lambda_seminorm(&c2, 0.25).unwrap() - oracle).abs() < 1e-13);
        assert!((oracle - 2f64.powf(-0.25)).abs() < 1e-15);
        assert!(h_lambda_seminorm(&c2, 1.0).is_err());
        assert!(h_lambda_seminorm(&c2, 0.0).is_err());
    }

    #[test]
    fn shift_interpolates_band_limited_fields() {
        let g = grid(32);
        let plan = FourierPlan::new(g);
        let f = Field::from_fn(g, |x| (3.0 * x).sin() + 0.5 * x.cos());
        let z = 0.123;
        let s = plan.shifted(&f, z);
        for i in 0..32 {
            let x = g.x(i) + z;
            assert!((s.values()[i] - ((3.0 * x).sin() + 0.5 * x.cos())).abs() < 1e-13);
        }
        assert!((l1_translation(&plan, &Field::constant(g, 2.0), 0.7)).abs() < 1e-13);
    }

    #[test]
    fn binary_and_csv_layout() {
        let g = grid(8);
        let f = Field::from_fn(g, |x| x * 0.5 - 1.0);
        let mut bytes = Vec::new();
        write_binary(&f, &mut bytes).unwrap();
        assert_eq!(bytes.len(), 8 + 8 * 8);
        assert_eq!(&bytes[..8], &8u64.to_le_bytes());
        assert_eq!(&bytes[16..24], &f.values()[1].to_le_bytes());
        let back: Field<f64> = read_binary(bytes.as_slice()).unwrap();
        assert_eq!(back, f);
        let mut csv = Vec::new();
        write_csv(&f, &mut csv).unwrap();
        let text = String::from_utf8(csv).unwrap();
        assert_eq!(text.lines().count(), 9);
        assert!(text.starts_with("index,x,value\n0,"));
    }

    #[test]
    fn single_precision_grid_works() {
        let g = TorusGrid::<f32>::new(16).unwrap();
        let f = Field::from_fn(g, |x| x.cos());
        let back = idft(&dft(&f));
        for (a, b) in back.values().iter().zip(f.values()) {
            assert!((a - b).abs() < 1e-5);
        }
    }
}
