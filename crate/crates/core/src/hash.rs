//! 64-bit FNV-1a, the one hash used for token features, seed derivation and
//! parameter digests.
//!
//! The seeded variant feeds the little-endian seed bytes through the hash
//! before the payload, so `fnv1a64_seeded(s, b) == fnv1a64(s.to_le_bytes() ++ b)`.

pub const FNV_OFFSET_BASIS: u64 = 0xcbf2_9ce4_8422_2325;
pub const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

#[derive(Debug, Clone, Copy)]
pub struct Fnv1a(u64);

impl Default for Fnv1a {
    fn default() -> Self {
        Fnv1a(FNV_OFFSET_BASIS)
    }
}

impl Fnv1a {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_seed(seed: u64) -> Self {
        let mut h = Self::default();
        h.write(&seed.to_le_bytes());
        h
    }

    pub fn write(&mut self, bytes: &[u8]) -> &mut Self {
        for &b in bytes {
            self.0 ^= u64::from(b);
            self.0 = self.0.wrapping_mul(FNV_PRIME);
        }
        self
    }

    pub fn write_u64(&mut self, v: u64) -> &mut Self {
        self.write(&v.to_le_bytes())
    }

    pub fn finish(&self) -> u64 {
        self.0
    }
}

pub fn fnv1a64(bytes: &[u8]) -> u64 {
    Fnv1a::new().write(bytes).finish()
}

pub fn fnv1a64_seeded(seed: u64, bytes: &[u8]) -> u64 {
    Fnv1a::with_seed(seed).write(bytes).finish()
}

/// Digest of a parameter vector: FNV-1a over the little-endian bytes of every value.
pub fn digest_f64s(values: &[f64]) -> u64 {
    let mut h = Fnv1a::new();
    for v in values {
        h.write(&v.to_bits().to_le_bytes());
    }
    h.finish()
}

/// Derives a child seed from a parent seed and a list of integer keys.
pub fn derive_seed(parent: u64, keys: &[u64]) -> u64 {
    let mut h = Fnv1a::with_seed(parent);
    for &k in keys {
        h.write_u64(k);
    }
    h.finish()
}
