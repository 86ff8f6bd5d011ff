//! Derived random streams. One master seed fans out into independent streams
//! per component so each can be regression-tested on its own.

/// Component that owns a derived stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    Folds = 1,
    Synth = 2,
    Shuffle = 3,
    Dropout = 4,
    Mixing = 5,
    Init = 6,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed for `stream` at position `index` (fold number, clip number, ...).
pub fn derive(master: u64, stream: Stream, index: u64) -> u64 {
    splitmix64(splitmix64(master ^ ((stream as u64) << 56)) ^ index)
}
