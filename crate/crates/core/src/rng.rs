//! Seed threading. Every random quantity is drawn from its own ChaCha8
//! substream so results do not depend on scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::linalg::C64;

/// Substream namespaces.
pub mod stream {
    pub const USER_CHANNEL: u64 = 0x0100_0000;
    pub const SYMBOLS: u64 = 0x0200_0000;
    pub const PHASE_ERRORS: u64 = 0x0300_0000;
    pub const NOISE: u64 = 0x0400_0000;
    pub const RANDOM_PS: u64 = 0x0500_0000;
    pub const TEST: u64 = 0x0f00_0000;
}

pub fn substream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Circularly-symmetric complex Gaussian with the given total variance.
pub fn complex_normal<R: rand::Rng + ?Sized>(rng: &mut R, variance: f64) -> C64 {
    let s = (variance / 2.0).sqrt();
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    C64::new(re * s, im * s)
}

pub fn normal<R: rand::Rng + ?Sized>(rng: &mut R, std: f64) -> f64 {
    let z: f64 = StandardNormal.sample(rng);
    z * std
}
