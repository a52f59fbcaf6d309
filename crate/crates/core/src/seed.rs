//! Deterministic per-(learner, period) random substreams.
//!
//! Every random draw in the toolkit comes from a substream keyed by
//! `(master_seed, learner_id, period, domain)`. The key is hashed (FNV-1a
//! over the learner id, then a SplitMix64 avalanche chain over the parts),
//! expanded to 32 bytes with SplitMix64 and used as a ChaCha8 key. Draws for
//! one learner-period therefore never depend on processing order or thread
//! count, and the whole construction is made of fixed published algorithms,
//! so streams are stable across toolkit releases.

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

const FNV_OFFSET: u64 = 0xcbf29ce484222325;
const FNV_PRIME: u64 = 0x00000100000001b3;
const SPLITMIX_GAMMA: u64 = 0x9e3779b97f4a7c15;

/// SplitMix64 finalizer: a fixed 64-bit avalanche permutation.
fn mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h = FNV_OFFSET;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(FNV_PRIME);
    }
    h
}

/// Which consumer of randomness a substream feeds. Separating domains keeps
/// e.g. assignment draws identical whether or not outcomes are simulated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StreamDomain {
    /// Arm assignment at a decision point.
    Assignment,
    /// Simulated activity outcome of a period.
    Activity,
}

impl StreamDomain {
    fn tag(self) -> u64 {
        match self {
            StreamDomain::Assignment => 1,
            StreamDomain::Activity => 2,
        }
    }
}

/// Master seed plus the derivation rule for all substreams.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SeedSpec {
    master_seed: u64,
}

impl SeedSpec {
    pub fn new(master_seed: u64) -> Self {
        SeedSpec { master_seed }
    }

    pub fn master_seed(&self) -> u64 {
        self.master_seed
    }

    /// Child seed for Monte-Carlo replication `index`. Children are
    /// independent of each other and of direct substreams of the parent.
    pub fn replication(&self, index: u64) -> SeedSpec {
        SeedSpec {
            master_seed: mix(self.master_seed ^ mix(index.wrapping_add(SPLITMIX_GAMMA))),
        }
    }

    /// The ChaCha8 stream for one (learner, period, domain) cell.
    pub fn substream(&self, learner_id: &str, period: u32, domain: StreamDomain) -> ChaCha8Rng {
        let mut k = mix(self.master_seed ^ SPLITMIX_GAMMA);
        k = mix(k ^ fnv1a(learner_id.as_bytes()));
        k = mix(k ^ ((domain.tag() << 32) | period as u64));

        // SplitMix64 expansion of k into the 256-bit ChaCha key.
        let mut seed = [0u8; 32];
        let mut state = k;
        for chunk in seed.chunks_exact_mut(8) {
            state = state.wrapping_add(SPLITMIX_GAMMA);
            chunk.copy_from_slice(&mix(state).to_le_bytes());
        }
        ChaCha8Rng::from_seed(seed)
    }

    /// Single uniform draw on [0, 1) for the given cell.
    pub fn uniform(&self, learner_id: &str, period: u32, domain: StreamDomain) -> f64 {
        u64_to_unit(self.substream(learner_id, period, domain).next_u64())
    }
}

/// Map a u64 to [0, 1) using the top 53 bits, so every value is an exactly
/// representable double and 1.0 is never produced.
pub fn u64_to_unit(x: u64) -> f64 {
    (x >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn substreams_are_deterministic() {
        let spec = SeedSpec::new(42);
        let a: Vec<u64> = {
            let mut r = spec.substream("learner-7", 2, StreamDomain::Assignment);
            (0..4).map(|_| r.next_u64()).collect()
        };
        let b: Vec<u64> = {
            let mut r = spec.substream("learner-7", 2, StreamDomain::Assignment);
            (0..4).map(|_| r.next_u64()).collect()
        };
        assert_eq!(a, b);
    }

    #[test]
    fn cells_are_separated() {
        let spec = SeedSpec::new(42);
        let base = spec.uniform("L1", 1, StreamDomain::Assignment);
        assert_ne!(base, spec.uniform("L2", 1, StreamDomain::Assignment));
        assert_ne!(base, spec.uniform("L1", 2, StreamDomain::Assignment));
        assert_ne!(base, spec.uniform("L1", 1, StreamDomain::Activity));
        assert_ne!(base, SeedSpec::new(43).uniform("L1", 1, StreamDomain::Assignment));
    }

    #[test]
    fn replication_children_differ_from_parent_and_each_other() {
        let spec = SeedSpec::new(7);
        let r0 = spec.replication(0);
        let r1 = spec.replication(1);
        assert_ne!(r0.master_seed(), spec.master_seed());
        assert_ne!(r0.master_seed(), r1.master_seed());
        // Same index twice gives the same child.
        assert_eq!(spec.replication(1).master_seed(), r1.master_seed());
    }

    #[test]
    fn unit_mapping_stays_in_range() {
        assert_eq!(u64_to_unit(0), 0.0);
        let top = u64_to_unit(u64::MAX);
        assert!(top < 1.0 && top > 0.999_999_999);
        let spec = SeedSpec::new(1);
        for i in 0..1000 {
            let u = spec.uniform(&format!("L{i}"), 1, StreamDomain::Assignment);
            assert!((0.0..1.0).contains(&u));
        }
    }

    // Frozen stream values: the substream construction is part of the
    // reproducibility contract, so an accidental change must fail loudly.
    // Values recorded from the initial implementation.
    #[test]
    fn golden_stream_values() {
        let spec = SeedSpec::new(0xDEADBEEF);
        let mut r = spec.substream("golden", 3, StreamDomain::Activity);
        let got: Vec<u64> = (0..2).map(|_| r.next_u64()).collect();
        let expect = golden_expected();
        assert_eq!(got, expect, "substream construction changed; this breaks every recorded manifest");
    }

    fn golden_expected() -> Vec<u64> {
        // cargo test -p srt-core golden -- --nocapture prints the current
        // values if this ever needs re-deriving after an intentional break.
        vec![5591686008814687968, 9530636566532337112]
    }
}
