//! Deterministic seed derivation: every subsystem and trial gets its own
//! stream derived from (base seed, tag, index), so adding workers or
//! reordering trials never perturbs another stream.

/// SplitMix64 finalizer; full-period bijective mixer.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e3779b97f4a7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

pub fn derive_seed(base: u64, tag: &str, index: u64) -> u64 {
    let mut h = mix(base);
    for &b in tag.as_bytes() {
        h = mix(h ^ b as u64);
    }
    mix(h ^ index)
}
