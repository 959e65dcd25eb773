use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_xoshiro::Xoshiro256PlusPlus;

/// Generators owned by a single path.
///
/// A ChaCha stream keyed by `(seed, index)` seeds three fast generators, so a
/// path's randomness depends on nothing but its own coordinates. `main`
/// drives the kill time and Gaussian increments, `jumps` the compound Poisson
/// part, `aux` anything else (bridge refinements).
pub(crate) struct PathRng {
    pub main: Xoshiro256PlusPlus,
    pub jumps: Xoshiro256PlusPlus,
    pub aux: Xoshiro256PlusPlus,
}

impl PathRng {
    pub fn new(seed: u64, index: u64) -> Self {
        let mut root = ChaCha8Rng::seed_from_u64(seed);
        root.set_stream(index);
        Self {
            main: Xoshiro256PlusPlus::from_rng(&mut root),
            jumps: Xoshiro256PlusPlus::from_rng(&mut root),
            aux: Xoshiro256PlusPlus::from_rng(&mut root),
        }
    }
}

/// Seed of an auxiliary stream family, disjoint from the primary paths of
/// `seed` for every `domain`.
pub(crate) fn derive_seed(seed: u64, domain: u64) -> u64 {
    let mut root = ChaCha8Rng::seed_from_u64(seed);
    root.set_stream(u64::MAX - domain);
    root.next_u64()
}

pub(crate) const DOMAIN_TILTED: u64 = 1;
pub(crate) const DOMAIN_POST_RHO: u64 = 2;
