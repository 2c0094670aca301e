//! Deterministic seed derivation for per-trial random substreams.
//!
//! Every trial draws from its own ChaCha20 stream. The stream seed is
//! derived from the master seed and the trial coordinates by chaining the
//! SplitMix64 finaliser:
//!
//! ```text
//! h0 = mix(master)
//! h1 = mix(h0 ^ mix(domain + GOLDEN))
//! h2 = mix(h1 ^ mix(scenario + 2·GOLDEN))
//! seed = mix(h2 ^ mix(replicate + 3·GOLDEN))
//! ```
//!
//! where `mix` is the SplitMix64 output function and `GOLDEN` is
//! `0x9E3779B97F4A7C15`. The `domain` tag separates the coefficient-field
//! stream from the design/noise stream so a randomised and a systematic trial
//! can share a field while drawing their own allocation and errors.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

/// Random stream used throughout the simulator.
pub type SimRng = ChaCha20Rng;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

/// Stream domain for a derived seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StreamDomain {
    /// Spatially varying coefficients (shared by the design pair).
    CoefficientField = 1,
    /// Treatment allocation and plot-level errors.
    Trial = 2,
}

#[inline]
fn mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn derive_seed(master: u64, domain: StreamDomain, scenario: u64, replicate: u64) -> u64 {
    let h0 = mix(master);
    let h1 = mix(h0 ^ mix((domain as u64).wrapping_add(GOLDEN)));
    let h2 = mix(h1 ^ mix(scenario.wrapping_add(GOLDEN.wrapping_mul(2))));
    mix(h2 ^ mix(replicate.wrapping_add(GOLDEN.wrapping_mul(3))))
}

pub fn rng_from_seed(seed: u64) -> SimRng {
    ChaCha20Rng::seed_from_u64(seed)
}
