//! Stable seed derivation. Every random stream in a run is derived from the
//! scenario seed through these functions, so results depend only on seeds.

/// SplitMix64 finaliser; a bijection on `u64`.
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed for item `(a, b)` under `base`. Injective in `(a, b)` for fixed
/// `base` as long as both fit in 32 bits: the packing is injective and every
/// later step is a bijection.
pub fn mix_seed(base: u64, a: u64, b: u64) -> u64 {
    debug_assert!(a <= u32::MAX as u64 && b <= u32::MAX as u64);
    splitmix64(base.wrapping_add(splitmix64((a << 32) | b)))
}
