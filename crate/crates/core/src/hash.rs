//! Small deterministic 64-bit mixing used for graph labels and fingerprint
//! identifiers. Not cryptographic; stable across platforms.

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

pub(crate) fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(GOLDEN);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Order-dependent accumulator over `u64` words.
#[derive(Clone, Copy, Debug)]
pub(crate) struct Mixer(u64);

impl Mixer {
    pub(crate) fn new(domain: u64) -> Self {
        Mixer(splitmix64(domain))
    }

    pub(crate) fn push(mut self, x: u64) -> Self {
        self.0 = splitmix64(self.0.rotate_left(23) ^ splitmix64(x));
        self
    }

    pub(crate) fn finish(self) -> u64 {
        splitmix64(self.0)
    }
}
