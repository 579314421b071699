//! Per-stage seed derivation.

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

/// One round of the splitmix64 finalizer.
#[inline]
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(GOLDEN);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn fnv1a(tag: &str) -> u64 {
    tag.bytes().fold(0xCBF2_9CE4_8422_2325, |h, b| {
        (h ^ u64::from(b)).wrapping_mul(0x0000_0100_0000_01B3)
    })
}

/// Seed for stage `tag` of Monte-Carlo iterate `iterate`.
///
/// Pure function of its inputs; distinct `(iterate, tag)` pairs give
/// independent streams for the same master seed.
pub fn derive_seed(master_seed: u64, iterate: u64, tag: &str) -> u64 {
    let s = splitmix64(master_seed);
    let s = splitmix64(s ^ iterate.wrapping_mul(GOLDEN));
    splitmix64(s ^ fnv1a(tag))
}
