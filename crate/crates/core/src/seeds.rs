//! Seed derivation. Every stochastic quantity is keyed by (master seed,
//! index) so results do not depend on scheduling order.

/// One round of the splitmix64 output function.
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Child seed `index` of `master`.
pub fn derive_seed(master: u64, index: u64) -> u64 {
    splitmix64(splitmix64(master) ^ index.wrapping_mul(0xd1b5_4a32_d192_ed03))
}

/// Purpose-tagged child seed, e.g. per receiver inside a trial.
pub fn derive_tagged(master: u64, index: u64, tag: u64) -> u64 {
    derive_seed(derive_seed(master, index), tag)
}
