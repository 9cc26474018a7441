//! Seed-stream discipline.
//!
//! One master seed fans out into independent, named streams (parameter init,
//! shuffling, augmentation, attack starts). A stream is a pure function of
//! `(master, name, indices)`, so skipping one consumer never shifts another.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

const fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

const fn fnv1a(tag: &str) -> u64 {
    let bytes = tag.as_bytes();
    let mut h: u64 = 0xCBF2_9CE4_8422_2325;
    let mut i = 0;
    while i < bytes.len() {
        h ^= bytes[i] as u64;
        h = h.wrapping_mul(0x0100_0000_01B3);
        i += 1;
    }
    h
}

/// Derives a child seed from `master`, a stream name, and an index path.
pub fn derive_seed(master: u64, stream: &str, path: &[u64]) -> u64 {
    let mut h = splitmix64(master ^ fnv1a(stream));
    for &p in path {
        h = splitmix64(h ^ splitmix64(p));
    }
    h
}

pub fn rng_from_seed(seed: u64) -> Rng {
    Rng::seed_from_u64(seed)
}

/// Named streams under one master seed.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SeedStreams {
    pub master: u64,
}

impl SeedStreams {
    pub const INIT: &'static str = "init";
    pub const SHUFFLE: &'static str = "shuffle";
    pub const AUGMENT: &'static str = "augment";
    pub const ATTACK: &'static str = "attack";
    pub const VALIDATION_ATTACK: &'static str = "validation-attack";

    pub fn new(master: u64) -> Self {
        Self { master }
    }

    pub fn init(&self) -> u64 {
        derive_seed(self.master, Self::INIT, &[])
    }

    pub fn shuffle(&self, epoch: usize) -> u64 {
        derive_seed(self.master, Self::SHUFFLE, &[epoch as u64])
    }

    pub fn augment(&self, epoch: usize) -> u64 {
        derive_seed(self.master, Self::AUGMENT, &[epoch as u64])
    }

    pub fn attack(&self, epoch: usize, batch: usize) -> u64 {
        derive_seed(self.master, Self::ATTACK, &[epoch as u64, batch as u64])
    }

    pub fn validation_attack(&self, epoch: usize) -> u64 {
        derive_seed(self.master, Self::VALIDATION_ATTACK, &[epoch as u64])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::RngCore;

    #[test]
    fn streams_are_distinct_and_stable() {
        let s = SeedStreams::new(7);
        assert_ne!(s.shuffle(0), s.augment(0));
        assert_ne!(s.shuffle(0), s.shuffle(1));
        assert_ne!(s.attack(0, 1), s.attack(1, 0));
        assert_eq!(s.attack(3, 4), SeedStreams::new(7).attack(3, 4));
        let mut a = rng_from_seed(s.init());
        let mut b = rng_from_seed(s.init());
        assert_eq!(a.next_u64(), b.next_u64());
    }
}
