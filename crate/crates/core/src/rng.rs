//! SplitMix64 stream with Box-Muller normals.
//!
//! The generator is fixed so weight perturbations and synthetic scenes are
//! bit-reproducible on every platform. A Gaussian always consumes exactly
//! two `u64` draws; nothing is cached between calls.

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;
const MIX1: u64 = 0xBF58_476D_1CE4_E5B9;
const MIX2: u64 = 0x94D0_49BB_1331_11EB;

/// 2^-53, the spacing of the 53-bit uniform grid.
const UNIT: f64 = 1.0 / (1u64 << 53) as f64;

/// Purpose tags used when deriving independent streams.
pub mod purpose {
    pub const BASE_WEIGHTS: u64 = 0x4241_5345; // "BASE"
    pub const PERTURBATION: u64 = 0x5045_5254; // "PERT"
    pub const SCENE: u64 = 0x5343_454e; // "SCEN"
    pub const SPECKLE: u64 = 0x5350_4b4c; // "SPKL"
    pub const SAMPLING: u64 = 0x5341_4d50; // "SAMP"
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RngStream {
    state: u64,
}

#[inline]
fn mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(MIX1);
    z = (z ^ (z >> 27)).wrapping_mul(MIX2);
    z ^ (z >> 31)
}

impl RngStream {
    pub fn new(seed: u64) -> Self {
        RngStream { state: seed }
    }

    /// Stream keyed by a tuple of integers, e.g. `(seed, k, purpose)`.
    ///
    /// Each part is folded in with one SplitMix64 step:
    /// `acc <- next_u64(SplitMix64(acc ^ part))`, starting from `acc = 0`.
    pub fn derive(parts: &[u64]) -> Self {
        let acc = parts
            .iter()
            .fold(0u64, |acc, &part| RngStream::new(acc ^ part).next_u64());
        RngStream::new(acc)
    }

    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(GOLDEN_GAMMA);
        mix(self.state)
    }

    /// Uniform deviate on the 53-bit grid in [0, 1).
    #[inline]
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * UNIT
    }

    /// Uniform integer in `0..bound` (`bound > 0`), by multiply-shift.
    pub fn next_below(&mut self, bound: u64) -> u64 {
        debug_assert!(bound > 0);
        ((self.next_u64() as u128 * bound as u128) >> 64) as u64
    }

    /// Uniform float in `[lo, hi)`.
    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.next_f64()
    }

    /// Normal deviate via Box-Muller; `u1 = 0` is remapped to 2^-53 so the
    /// logarithm stays finite.
    pub fn next_gaussian(&mut self, mean: f64, std: f64) -> f64 {
        let mut u1 = self.next_f64();
        if u1 == 0.0 {
            u1 = UNIT;
        }
        let u2 = self.next_f64();
        let z = (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos();
        if std == 0.0 {
            mean
        } else {
            mean + std * z
        }
    }

    /// Gamma(shape, scale) for integral shape, as a sum of exponentials.
    pub fn next_gamma_int(&mut self, shape: u32, scale: f64) -> f64 {
        let mut acc = 0.0;
        for _ in 0..shape {
            let mut u = self.next_f64();
            if u == 0.0 {
                u = UNIT;
            }
            acc -= u.ln();
        }
        acc * scale
    }
}
