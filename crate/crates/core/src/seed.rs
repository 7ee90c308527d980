//! Deterministic seed derivation.
//!
//! Every pipeline stage draws randomness from a stage seed derived from the
//! single experiment seed and the stage name, so changing one stage's
//! consumption pattern never perturbs another stage. Within the simulator,
//! each (burst, anchor) pair additionally gets its own ChaCha stream.

/// FNV-1a over the stage name, mixed into the global seed.
pub fn derive_seed(global: u64, stage: &str) -> u64 {
    const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
    const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;
    let mut h = FNV_OFFSET;
    for b in stage.as_bytes() {
        h ^= u64::from(*b);
        h = h.wrapping_mul(FNV_PRIME);
    }
    splitmix64(global ^ h)
}

/// Stream identifier for one (burst, anchor) pair.
pub fn record_stream(time_idx: u64, anchor_id: u32) -> u64 {
    splitmix64(time_idx.wrapping_mul(0x9e37_79b9_7f4a_7c15) ^ u64::from(anchor_id))
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    #[test]
    fn stage_seeds_are_stable_and_distinct() {
        let a = derive_seed(42, "simulate");
        let b = derive_seed(42, "simulate");
        assert_eq!(a, b);
        assert_ne!(derive_seed(42, "simulate"), derive_seed(42, "pretrain"));
        assert_ne!(derive_seed(42, "simulate"), derive_seed(43, "simulate"));
    }

    #[test]
    fn record_streams_do_not_collide_on_a_realistic_grid() {
        let mut seen = HashSet::new();
        for t in 0..3000u64 {
            for a in 0..16u32 {
                assert!(seen.insert(record_stream(t, a)));
            }
        }
    }
}
