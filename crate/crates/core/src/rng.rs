//! Seeded random streams used everywhere randomness enters the engine.
//!
//! The generator is ChaCha8 (`rand_chacha`), seeded through
//! `SeedableRng::seed_from_u64`, which makes draws reproducible across
//! platforms. Independent consumers use distinct ChaCha stream ids on the same
//! key, so e.g. the frequency matrix and the phase vector never share words.
//!
//! Uniform draws are `(next_u64() >> 11) * 2^-53`, i.e. the 53 high bits,
//! giving values in `[0, 1)`. Gaussian draws use the Box–Muller transform on
//! two consecutive uniforms `u1, u2`:
//! `r = sqrt(-2 ln(1 - u1))`, emitting `r cos(2π u2)` then `r sin(2π u2)`.

use core::f64::consts::TAU;

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

/// Stream ids reserved by the crate.
pub mod streams {
    pub const RFF_FREQUENCIES: u64 = 0;
    pub const RFF_PHASES: u64 = 1;
    pub const SYNTHETIC_NOISE: u64 = 2;
    pub const SEARCH: u64 = 3;
}

#[derive(Debug, Clone)]
pub struct SeededStream {
    rng: ChaCha8Rng,
    spare_normal: Option<f64>,
}

impl SeededStream {
    pub fn new(seed: u64, stream: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        Self {
            rng,
            spare_normal: None,
        }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    /// Uniform in `[0, 1)` with 53 bits of resolution.
    pub fn uniform(&mut self) -> f64 {
        (self.rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform in `[lo, hi)`.
    pub fn uniform_range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    /// Uniform integer in `[lo, hi]` (inclusive), by rejection to avoid modulo bias.
    pub fn uniform_int(&mut self, lo: usize, hi: usize) -> usize {
        debug_assert!(lo <= hi);
        let span = (hi - lo) as u64 + 1;
        let zone = u64::MAX - (u64::MAX % span);
        loop {
            let v = self.rng.next_u64();
            if v < zone {
                return lo + (v % span) as usize;
            }
        }
    }

    /// Standard normal draw via Box–Muller.
    pub fn standard_normal(&mut self) -> f64 {
        if let Some(z) = self.spare_normal.take() {
            return z;
        }
        let u1 = self.uniform();
        let u2 = self.uniform();
        let r = libm::sqrt(-2.0 * libm::log(1.0 - u1));
        let angle = TAU * u2;
        self.spare_normal = Some(r * libm::sin(angle));
        r * libm::cos(angle)
    }

    /// Phase in `[0, 2π)`.
    pub fn phase(&mut self) -> f64 {
        let theta = TAU * self.uniform();
        if theta >= TAU {
            0.0
        } else {
            theta
        }
    }
}
