//! A compact bit vector used for keys, masks, and wire payloads.
//!
//! Bits are addressed 0..len. The file and wire convention everywhere in
//! this crate is 8 bits per byte, most-significant bit first: bit 0 of a
//! vector is the top bit of byte 0. Internally the bits live in `u64`
//! words (bit `i` at word `i / 64`, position `i % 64`); all storage bits
//! at or beyond `len` are kept zero so whole-word operations need no
//! masking.

use rand::RngCore;

#[derive(Clone, PartialEq, Eq, Default)]
pub struct BitVec {
    words: Vec<u64>,
    len: usize,
}

impl BitVec {
    pub fn new() -> Self {
        Self::default()
    }

    /// A vector of `len` zero bits.
    pub fn zeros(len: usize) -> Self {
        Self { words: vec![0; len.div_ceil(64)], len }
    }

    /// Builds a vector by evaluating `f` at every index.
    pub fn from_fn(len: usize, mut f: impl FnMut(usize) -> bool) -> Self {
        let mut v = Self::zeros(len);
        for i in 0..len {
            if f(i) {
                v.set(i, true);
            }
        }
        v
    }

    /// Unpacks `len` bits from MSB-first bytes. `bytes` must hold at least
    /// `ceil(len / 8)` bytes; trailing bits of the last byte are ignored.
    pub fn from_bytes_msb(bytes: &[u8], len: usize) -> Self {
        assert!(bytes.len() * 8 >= len, "byte slice too short for {len} bits");
        Self::from_fn(len, |i| bytes[i / 8] >> (7 - (i % 8)) & 1 == 1)
    }

    /// Packs into MSB-first bytes; the final partial byte is zero-padded.
    pub fn to_bytes_msb(&self) -> Vec<u8> {
        let mut out = vec![0u8; self.len.div_ceil(8)];
        for i in 0..self.len {
            if self.get(i) {
                out[i / 8] |= 1 << (7 - (i % 8));
            }
        }
        out
    }

    /// `len` independent fair bits drawn from `rng`.
    pub fn random(rng: &mut impl RngCore, len: usize) -> Self {
        let mut bytes = vec![0u8; len.div_ceil(8)];
        rng.fill_bytes(&mut bytes);
        Self::from_bytes_msb(&bytes, len)
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Backing words, bit `i` at word `i/64`, position `i%64`; bits past
    /// `len` in the last word are zero.
    pub fn words(&self) -> &[u64] {
        &self.words
    }

    #[inline]
    pub fn get(&self, i: usize) -> bool {
        assert!(i < self.len, "bit index {i} out of range (len {})", self.len);
        self.words[i / 64] >> (i % 64) & 1 == 1
    }

    #[inline]
    pub fn set(&mut self, i: usize, value: bool) {
        assert!(i < self.len, "bit index {i} out of range (len {})", self.len);
        let mask = 1u64 << (i % 64);
        if value {
            self.words[i / 64] |= mask;
        } else {
            self.words[i / 64] &= !mask;
        }
    }

    #[inline]
    pub fn flip(&mut self, i: usize) {
        assert!(i < self.len, "bit index {i} out of range (len {})", self.len);
        self.words[i / 64] ^= 1u64 << (i % 64);
    }

    pub fn push(&mut self, value: bool) {
        if self.len % 64 == 0 {
            self.words.push(0);
        }
        self.len += 1;
        if value {
            self.set(self.len - 1, true);
        }
    }

    /// Appends every bit of `other`.
    pub fn extend_from(&mut self, other: &BitVec) {
        for i in 0..other.len {
            self.push(other.get(i));
        }
    }

    /// Keeps only the first `len` bits.
    pub fn truncate(&mut self, len: usize) {
        if len >= self.len {
            return;
        }
        self.len = len;
        self.words.truncate(len.div_ceil(64));
        if let (Some(last), rem) = (self.words.last_mut(), len % 64) {
            if rem != 0 {
                *last &= (1u64 << rem) - 1;
            }
        }
    }

    /// A copy of bits `start..end`.
    pub fn slice(&self, start: usize, end: usize) -> BitVec {
        assert!(start <= end && end <= self.len);
        BitVec::from_fn(end - start, |i| self.get(start + i))
    }

    pub fn count_ones(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn count_zeros(&self) -> usize {
        self.len - self.count_ones()
    }

    /// Number of positions where `self` and `other` differ.
    pub fn hamming_distance(&self, other: &BitVec) -> usize {
        assert_eq!(self.len, other.len, "length mismatch");
        self.words
            .iter()
            .zip(&other.words)
            .map(|(a, b)| (a ^ b).count_ones() as usize)
            .sum()
    }

    /// Parity (XOR) of the bits selected by `mask`, a word array in the
    /// same layout as the internal storage. Mask bits beyond `len` must be
    /// zero; the caller guarantees this by construction.
    pub fn masked_parity(&self, mask: &[u64]) -> bool {
        debug_assert_eq!(mask.len(), self.words.len());
        let mut acc = 0u64;
        for (w, m) in self.words.iter().zip(mask) {
            acc ^= w & m;
        }
        acc.count_ones() % 2 == 1
    }

    /// Parity of the whole vector.
    pub fn parity(&self) -> bool {
        self.words.iter().fold(0u64, |a, w| a ^ w).count_ones() % 2 == 1
    }

    /// Number of 64-bit words needed for a mask over this vector.
    pub fn word_len(&self) -> usize {
        self.words.len()
    }
}

impl std::fmt::Debug for BitVec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "BitVec[{}; ", self.len)?;
        for i in 0..self.len.min(64) {
            write!(f, "{}", u8::from(self.get(i)))?;
        }
        if self.len > 64 {
            write!(f, "…")?;
        }
        write!(f, "]")
    }
}
