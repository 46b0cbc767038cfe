//! Deterministic seed derivation for independent random streams.

/// SplitMix64 finalizer.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Named random streams. Each stream gets its own seed family so that, for
/// example, changing how many draws the traveler consumes can never perturb
/// the generated networks.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    Network = 1,
    Traveler = 2,
}

pub fn derive(base: u64, stream: Stream, index: u64) -> u64 {
    mix64(mix64(base ^ mix64(stream as u64)) ^ index)
}
