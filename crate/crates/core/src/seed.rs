//! Deterministic seed derivation and per-worker random streams.

use std::collections::HashMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{PamError, Result};

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

/// SplitMix64 finalizer; a bijection on `u64`.
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// FNV-1a hash, used to turn string labels into chain elements.
pub fn label_hash(s: &str) -> u64 {
    s.bytes().fold(0xcbf2_9ce4_8422_2325u64, |h, b| {
        (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01B3)
    })
}

/// Hash chain `base -> mix(base ^ mix(l0 + φ)) -> …`.
///
/// For a fixed prefix the map from the final label to the seed is injective.
pub fn seed_derive(base: u64, labels: &[u64]) -> u64 {
    labels
        .iter()
        .fold(base, |acc, &l| mix64(acc ^ mix64(l.wrapping_add(GOLDEN))))
}

/// Tracks every label path derived during a run and rejects duplicates and
/// seed collisions.
#[derive(Debug, Default)]
pub struct SeedRegistry {
    base: u64,
    issued: HashMap<u64, Vec<u64>>,
}

impl SeedRegistry {
    pub fn new(base: u64) -> Self {
        Self {
            base,
            issued: HashMap::new(),
        }
    }

    pub fn base(&self) -> u64 {
        self.base
    }

    pub fn derive(&mut self, labels: &[u64]) -> Result<u64> {
        let seed = seed_derive(self.base, labels);
        if let Some(prev) = self.issued.get(&seed) {
            if prev.as_slice() == labels {
                return Err(PamError::DuplicateLabel(labels.to_vec()));
            }
            return Err(PamError::Format(format!(
                "seed collision between label paths {prev:?} and {labels:?}"
            )));
        }
        self.issued.insert(seed, labels.to_vec());
        Ok(seed)
    }

    pub fn len(&self) -> usize {
        self.issued.len()
    }

    pub fn is_empty(&self) -> bool {
        self.issued.is_empty()
    }
}

pub fn rng_from_seed(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Independent stream `stream` of the generator keyed by `seed`.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}
