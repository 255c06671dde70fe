//! Seeded, platform-independent random numbers.
//!
//! The bit stream is xoshiro256++ seeded through SplitMix64
//! (`Xoshiro256PlusPlus::seed_from_u64`). Gaussian variates use the basic
//! Box–Muller transform with `libm` transcendentals, so a given seed yields
//! the same values on every platform:
//!
//! ```text
//! u1 = 1 - uniform()            in (0, 1]
//! u2 = uniform()                in [0, 1)
//! r  = sqrt(-2 ln u1)
//! z0 = r cos(2π u2),  z1 = r sin(2π u2)
//! ```
//!
//! `z0` is returned first and `z1` is cached for the next call.
//! `uniform()` takes the top 53 bits of one `next_u64`.

use rand_xoshiro::rand_core::{RngCore, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;

/// Sub-seed streams derived from a master seed.
pub mod stream {
    pub const SPLIT: u64 = 1;
    pub const PROJECTION: u64 = 2;
    pub const CROSS_VALIDATION: u64 = 3;
    pub const SCHEDULE: u64 = 4;
    pub const SYNTH: u64 = 5;
    pub const THEORY: u64 = 6;
}

/// Derive an independent seed for `stream` from `master`.
///
/// One SplitMix64 finalisation round over `master ^ (stream * φ64)`.
pub fn derive_seed(master: u64, stream: u64) -> u64 {
    let mut z = master ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Clone, Debug)]
pub struct Rng {
    inner: Xoshiro256PlusPlus,
    spare: Option<f64>,
}

impl Rng {
    pub fn new(seed: u64) -> Self {
        Rng { inner: Xoshiro256PlusPlus::seed_from_u64(seed), spare: None }
    }

    /// Generator for sub-stream `stream` of `master`.
    pub fn derived(master: u64, stream: u64) -> Self {
        Rng::new(derive_seed(master, stream))
    }

    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Uniform in `[0, 1)`.
    #[inline]
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Standard normal variate (Box–Muller, see module docs).
    pub fn gaussian(&mut self) -> f64 {
        if let Some(z) = self.spare.take() {
            return z;
        }
        let u1 = 1.0 - self.uniform();
        let u2 = self.uniform();
        let r = libm::sqrt(-2.0 * libm::log(u1));
        let theta = 2.0 * core::f64::consts::PI * u2;
        self.spare = Some(r * libm::sin(theta));
        r * libm::cos(theta)
    }

    /// `-1` or `+1` with equal probability (top bit of one draw).
    #[inline]
    pub fn bipolar(&mut self) -> f64 {
        if self.next_u64() >> 63 == 0 {
            -1.0
        } else {
            1.0
        }
    }

    /// Uniform integer in `[0, n)` by rejection, `n > 0`.
    pub fn below(&mut self, n: u64) -> u64 {
        assert!(n > 0, "below(0)");
        let zone = u64::MAX - (u64::MAX % n);
        loop {
            let x = self.next_u64();
            if x < zone {
                return x % n;
            }
        }
    }

    /// Fisher–Yates shuffle, iterating from the back.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i as u64 + 1) as usize;
            items.swap(i, j);
        }
    }
}
