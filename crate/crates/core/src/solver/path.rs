//! Reproducible Brownian increments for the truncated cylindrical Wiener process.
//!
//! Draws are addressed by `(seed, k, m)`: the seed keys a ChaCha8 generator,
//! the noise index `k` selects its stream and the step index `m` its word
//! position, so any increment can be regenerated without replaying the path.
//! Replicas derive their seed from `(base seed, replica index)` with
//! [`replica_seed`].

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::real::{cst, Real};

/// 64-bit finalizer of SplitMix64.
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of Monte Carlo replica `replica` under `base`.
pub fn replica_seed(base: u64, replica: u64) -> u64 {
    splitmix64(base ^ splitmix64(replica.wrapping_add(0xD1B5_4A32_D192_ED03)))
}

fn box_muller(a: u64, b: u64) -> f64 {
    let u1 = ((a >> 11) + 1) as f64 * (1.0 / (1u64 << 53) as f64);
    let u2 = (b >> 11) as f64 * (1.0 / (1u64 << 53) as f64);
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

/// Standard normal draw number `m` of stream `k`.
pub fn standard_normal(seed: u64, k: usize, m: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(k as u64);
    rng.set_word_pos(4 * m as u128);
    let a = rng.next_u64();
    let b = rng.next_u64();
    box_muller(a, b)
}

/// Seeded description of one Brownian sample path.
///
/// With `substeps = s > 1` the normal for step `m` is `Σ_{j<s} Z_{ms+j} / √s`,
/// so a path with `s = 2` is the exact coarsening of the `s = 1` path driven
/// by the same seed.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SamplePath {
    pub seed: u64,
    pub num_steps: usize,
    pub truncation: usize,
    pub substeps: usize,
}

impl SamplePath {
    pub fn new(seed: u64, truncation: usize, num_steps: usize) -> Self {
        Self { seed, num_steps, truncation, substeps: 1 }
    }

    /// Same Brownian motion sampled on a grid `factor` times coarser.
    pub fn coarsened(mut self, factor: usize) -> Self {
        self.substeps *= factor.max(1);
        self.num_steps /= factor.max(1);
        self
    }

    /// Standard normal driving noise mode `k` during step `m`.
    pub fn normal(&self, k: usize, m: usize) -> f64 {
        if self.substeps == 1 {
            return standard_normal(self.seed, k, m as u64);
        }
        let s = self.substeps as u64;
        let sum: f64 = (0..s).map(|j| standard_normal(self.seed, k, m as u64 * s + j)).sum();
        sum / (s as f64).sqrt()
    }

    pub fn cursor(&self) -> PathCursor {
        PathCursor::new(*self)
    }
}

/// Sequential reader over a [`SamplePath`]; equivalent to repeated
/// [`SamplePath::normal`] calls but without reseeding per draw.
#[derive(Clone, Debug)]
pub struct PathCursor {
    path: SamplePath,
    streams: Vec<ChaCha8Rng>,
    next_draw: Vec<u64>,
}

impl PathCursor {
    fn new(path: SamplePath) -> Self {
        let streams = (0..path.truncation)
            .map(|k| {
                let mut rng = ChaCha8Rng::seed_from_u64(path.seed);
                rng.set_stream(k as u64);
                rng
            })
            .collect();
        Self { path, streams, next_draw: vec![0; path.truncation] }
    }

    fn draw(&mut self, k: usize, index: u64) -> f64 {
        let rng = &mut self.streams[k];
        if self.next_draw[k] != index {
            rng.set_word_pos(4 * index as u128);
        }
        self.next_draw[k] = index + 1;
        let a = rng.next_u64();
        let b = rng.next_u64();
        box_muller(a, b)
    }

    /// Writes `ΔW_k = Z_{k,m} √dt` for `k < out.len()`.
    pub fn increments<T: Real>(&mut self, m: usize, dt: T, out: &mut [T]) {
        let s = self.path.substeps as u64;
        let scale = dt.sqrt();
        for (k, o) in out.iter_mut().enumerate() {
            let z = if s == 1 {
                self.draw(k, m as u64)
            } else {
                (0..s).map(|j| self.draw(k, m as u64 * s + j)).sum::<f64>() / (s as f64).sqrt()
            };
            *o = cst::<T>(z) * scale;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn regeneration_is_bit_exact() {
        let p = SamplePath::new(17, 4, 100);
        let a: Vec<f64> = (0..50).map(|m| p.normal(2, m)).collect();
        let b: Vec<f64> = (0..50).map(|m| p.normal(2, m)).collect();
        assert_eq!(a, b);
        let mut c = p.cursor();
        let mut out = [0.0f64; 4];
        for m in 0..50 {
            c.increments(m, 1.0, &mut out);
            assert_eq!(out[2].to_bits(), a[m].to_bits());
        }
        // random access after sequential reads
        c.increments(7, 1.0, &mut out);
        assert_eq!(out[2].to_bits(), a[7].to_bits());
    }

    #[test]
    fn streams_and_seeds_differ() {
        let p = SamplePath::new(1, 2, 10);
        assert_ne!(p.normal(0, 3), p.normal(1, 3));
        assert_ne!(p.normal(0, 3), SamplePath::new(2, 2, 10).normal(0, 3));
        assert_ne!(replica_seed(5, 0), replica_seed(5, 1));
    }

    #[test]
    fn coarsening_sums_fine_increments() {
        let fine = SamplePath::new(99, 1, 64);
        let coarse = fine.coarsened(2);
        let dt = 0.01f64;
        let mut cf = fine.cursor();
        let mut cc = coarse.cursor();
        let (mut a, mut b, mut w) = ([0.0], [0.0], [0.0]);
        for m in 0..32 {
            cf.increments(2 * m, dt, &mut a);
            cf.increments(2 * m + 1, dt, &mut b);
            cc.increments(m, 2.0 * dt, &mut w);
            assert!((w[0] - (a[0] + b[0])).abs() < 1e-14);
        }
    }

    #[test]
    fn moments_are_standard() {
        let n = 40_000;
        let p = SamplePath::new(2024, 1, n);
        let draws: Vec<f64> = (0..n).map(|m| p.normal(0, m)).collect();
        let mean = draws.iter().sum::<f64>() / n as f64;
        let var = draws.iter().map(|z| (z - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        assert!(mean.abs() < 0.03, "{mean}");
        assert!((var - 1.0).abs() < 0.03, "{var}");
    }
}
