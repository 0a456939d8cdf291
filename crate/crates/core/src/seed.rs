/// Derives an independent RNG seed from a base seed and a stream tag.
///
/// Distinct tags give statistically independent streams (splitmix64 finalizer),
/// so one user-facing seed can drive initialization, per-generation operators,
/// dataset sampling and evaluation without the streams interfering. The same
/// (base, tag) pair always yields the same seed, which is what makes checkpoint
/// resume and parallel evaluation bit-exact.
pub fn derive_seed(base: u64, tag: u64) -> u64 {
    let mut z = base ^ tag.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn distinct_tags_distinct_seeds() {
        let s: alloc::vec::Vec<u64> = (0..64).map(|t| derive_seed(7, t)).collect();
        for i in 0..s.len() {
            for j in i + 1..s.len() {
                assert_ne!(s[i], s[j]);
            }
        }
    }

    #[test]
    fn deterministic() {
        assert_eq!(derive_seed(42, 3), derive_seed(42, 3));
        assert_ne!(derive_seed(42, 3), derive_seed(43, 3));
    }
}
