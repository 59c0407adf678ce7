//! Seed derivation for replicated experiments.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

/// One round of the SplitMix64 output function.
pub fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(GOLDEN);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Which random object a derived seed drives.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    Graph = 0,
    Simulation = 1,
}

/// Seed of stream `stream` for replica `replica`.
///
/// Distinct `(replica, stream)` pairs map to distinct SplitMix64 inputs, and
/// SplitMix64 is a bijection, so derived seeds never collide for a fixed base.
pub fn derive(base: u64, replica: u64, stream: Stream) -> u64 {
    let index = 2 * replica + stream as u64 + 1;
    splitmix64(base.wrapping_add(index.wrapping_mul(GOLDEN)))
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    #[test]
    fn splitmix_reference_values() {
        // First outputs of the reference generator seeded with 0.
        assert_eq!(splitmix64(0), 0xE220_A839_7B1D_CDAF);
        assert_eq!(splitmix64(GOLDEN), 0x6E78_9E6A_A1B9_65F4);
    }

    #[test]
    fn derived_seeds_are_distinct() {
        let mut seen = HashSet::new();
        for r in 0..5000 {
            assert!(seen.insert(derive(42, r, Stream::Graph)));
            assert!(seen.insert(derive(42, r, Stream::Simulation)));
        }
        assert_eq!(derive(7, 3, Stream::Graph), derive(7, 3, Stream::Graph));
    }
}
