//! Counter-style seeded random streams.
//!
//! Every consumer of randomness addresses its stream by a tuple of integers,
//! so results never depend on thread scheduling or on the order in which
//! streams are created.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Separates unrelated consumers that might share numeric tags.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u64)]
pub enum Domain {
    Haar = 0x6861_6172,
    Sampler = 0x7361_6d70,
}

/// Stream addressed by `(master_seed, domain, tag, index)`.
pub fn stream(master_seed: u64, domain: Domain, tag: u64, index: u64) -> ChaCha8Rng {
    let mut seed = [0u8; 32];
    seed[..8].copy_from_slice(&master_seed.to_le_bytes());
    seed[8..16].copy_from_slice(&tag.to_le_bytes());
    seed[16..24].copy_from_slice(&(domain as u64).to_le_bytes());
    let mut rng = ChaCha8Rng::from_seed(seed);
    rng.set_stream(index);
    rng
}
