//! Seed derivation.
//!
//! Every random draw in a trial comes from a stream keyed by
//! `(trial seed, role, round, client)`. Streams are independent of execution
//! order, so parallel client training cannot perturb each other's draws.

/// Purpose of a random stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Role {
    Init = 1,
    Split = 2,
    KShot = 3,
    Select = 4,
    Local = 5,
    Central = 6,
    Network = 7,
    TestData = 8,
    Arrival = 9,
    TrainData = 10,
}

/// SplitMix64 finalizer.
pub fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed for `role` in `round` on `client` of a trial seeded with `base`.
pub fn derive_seed(base: u64, role: Role, round: u64, client: u64) -> u64 {
    let mut h = mix(base);
    h = mix(h ^ role as u64);
    h = mix(h ^ round);
    mix(h ^ client)
}

/// Child seed `index` of `seed` (e.g. one per epoch).
pub fn sub_seed(seed: u64, index: u64) -> u64 {
    mix(mix(seed) ^ index.wrapping_mul(0xA24B_AED4_963E_E407))
}

pub(crate) fn rng(seed: u64) -> rand_chacha::ChaCha8Rng {
    use rand::SeedableRng;
    rand_chacha::ChaCha8Rng::seed_from_u64(seed)
}
