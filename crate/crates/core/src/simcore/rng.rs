use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Stable seed derivation: same inputs give the same seed on every platform.
pub fn derive_seed(base: u64, index: u64) -> u64 {
    splitmix64(splitmix64(base) ^ index.wrapping_mul(0xD6E8_FEB8_6659_FD93))
}

fn name_hash(name: &str) -> u64 {
    // FNV-1a
    let mut h: u64 = 0xCBF2_9CE4_8422_2325;
    for b in name.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0100_0000_01B3);
    }
    h
}

/// One master seed split into independent named streams, so drawing more
/// numbers in one subsystem never shifts another subsystem's sequence.
#[derive(Debug, Clone, Copy)]
pub struct RngStreams {
    seed: u64,
}

impl RngStreams {
    pub fn new(seed: u64) -> Self {
        Self { seed }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream(&self, name: &str) -> SimRng {
        SimRng::seed_from_u64(derive_seed(self.seed, name_hash(name)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn streams_are_reproducible_and_distinct() {
        let s = RngStreams::new(7);
        let a: u64 = s.stream("channel").random();
        let b: u64 = s.stream("channel").random();
        let c: u64 = s.stream("per").random();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_ne!(derive_seed(1, 0), derive_seed(1, 1));
        assert_ne!(derive_seed(1, 0), derive_seed(2, 0));
    }

    #[test]
    fn derived_seed_is_frozen() {
        // Guards against accidental changes to the derivation, which would
        // silently change every published grid result.
        assert_eq!(derive_seed(0, 0), splitmix64(splitmix64(0)));
        let first: u64 = RngStreams::new(1).stream("x").random();
        let again: u64 = RngStreams::new(1).stream("x").random();
        assert_eq!(first, again);
    }
}
