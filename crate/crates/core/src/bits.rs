//! Packed bit strings.
//!
//! Bit `i` lives in word `i / 64` at position `i % 64`. Byte serialization is
//! LSB-first: bit `i` is bit `i % 8` of byte `i / 8`. Bits past `len` in the
//! last word are always zero.

use std::fmt;
use std::ops::Range;

use rand::Rng;

/// Fixed-length packed bit string tagged with the block index it belongs to.
#[derive(Clone, PartialEq, Eq, Hash, Default)]
pub struct BitBlock {
    words: Vec<u64>,
    len: usize,
    index: u64,
}

#[inline]
fn words_for(len: usize) -> usize {
    len.div_ceil(64)
}

impl BitBlock {
    pub fn zeros(len: usize) -> Self {
        BitBlock {
            words: vec![0; words_for(len)],
            len,
            index: 0,
        }
    }

    pub fn from_bits<I: IntoIterator<Item = bool>>(bits: I) -> Self {
        let mut b = BitBlock::zeros(0);
        for bit in bits {
            b.push(bit);
        }
        b
    }

    /// Builds from 0/1 bytes; any nonzero byte is a one.
    pub fn from_u8_bits(bits: &[u8]) -> Self {
        Self::from_bits(bits.iter().map(|&b| b != 0))
    }

    pub fn from_words(mut words: Vec<u64>, len: usize) -> Self {
        words.resize(words_for(len), 0);
        let mut b = BitBlock { words, len, index: 0 };
        b.clear_tail();
        b
    }

    pub fn from_bytes(bytes: &[u8], len: usize) -> Self {
        let mut words = vec![0u64; words_for(len)];
        for (i, &byte) in bytes.iter().enumerate().take(len.div_ceil(8)) {
            words[i / 8] |= (byte as u64) << ((i % 8) * 8);
        }
        Self::from_words(words, len)
    }

    pub fn random<R: Rng + ?Sized>(len: usize, rng: &mut R) -> Self {
        let words = (0..words_for(len)).map(|_| rng.gen::<u64>()).collect();
        Self::from_words(words, len)
    }

    pub fn with_index(mut self, index: u64) -> Self {
        self.index = index;
        self
    }

    pub fn index(&self) -> u64 {
        self.index
    }

    pub fn set_index(&mut self, index: u64) {
        self.index = index;
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn words(&self) -> &[u64] {
        &self.words
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let nbytes = self.len.div_ceil(8);
        let mut out = Vec::with_capacity(nbytes);
        for i in 0..nbytes {
            out.push((self.words[i / 8] >> ((i % 8) * 8)) as u8);
        }
        out
    }

    #[inline]
    pub fn get(&self, i: usize) -> bool {
        assert!(i < self.len, "bit index {i} out of range {}", self.len);
        (self.words[i >> 6] >> (i & 63)) & 1 == 1
    }

    #[inline]
    pub fn set(&mut self, i: usize, value: bool) {
        assert!(i < self.len, "bit index {i} out of range {}", self.len);
        let mask = 1u64 << (i & 63);
        if value {
            self.words[i >> 6] |= mask;
        } else {
            self.words[i >> 6] &= !mask;
        }
    }

    #[inline]
    pub fn flip(&mut self, i: usize) {
        assert!(i < self.len, "bit index {i} out of range {}", self.len);
        self.words[i >> 6] ^= 1u64 << (i & 63);
    }

    pub fn push(&mut self, bit: bool) {
        if self.len.is_multiple_of(64) {
            self.words.push(0);
        }
        self.len += 1;
        if bit {
            self.set(self.len - 1, true);
        }
    }

    pub fn iter(&self) -> impl DoubleEndedIterator<Item = bool> + ExactSizeIterator + '_ {
        (0..self.len).map(move |i| self.get(i))
    }

    pub fn count_ones(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    /// Panics on length mismatch.
    pub fn xor_assign(&mut self, other: &BitBlock) {
        assert_eq!(self.len, other.len, "xor of unequal lengths");
        for (a, b) in self.words.iter_mut().zip(&other.words) {
            *a ^= b;
        }
    }

    pub fn xor(&self, other: &BitBlock) -> BitBlock {
        let mut out = self.clone();
        out.xor_assign(other);
        out
    }

    pub fn hamming_distance(&self, other: &BitBlock) -> usize {
        assert_eq!(self.len, other.len, "distance of unequal lengths");
        self.words
            .iter()
            .zip(&other.words)
            .map(|(a, b)| (a ^ b).count_ones() as usize)
            .sum()
    }

    pub fn slice(&self, range: Range<usize>) -> BitBlock {
        assert!(range.start <= range.end && range.end <= self.len);
        let len = range.end - range.start;
        let mut words = vec![0u64; words_for(len)];
        let shift = range.start & 63;
        let base = range.start >> 6;
        for (k, w) in words.iter_mut().enumerate() {
            let lo = self.words.get(base + k).copied().unwrap_or(0);
            *w = if shift == 0 {
                lo
            } else {
                let hi = self.words.get(base + k + 1).copied().unwrap_or(0);
                (lo >> shift) | (hi << (64 - shift))
            };
        }
        BitBlock::from_words(words, len)
    }

    pub fn extend(&mut self, other: &BitBlock) {
        if self.len.is_multiple_of(64) {
            self.words.truncate(words_for(self.len));
            self.words.extend_from_slice(&other.words);
            self.len += other.len;
            return;
        }
        for bit in other.iter() {
            self.push(bit);
        }
    }

    pub fn concat<'a, I: IntoIterator<Item = &'a BitBlock>>(blocks: I) -> BitBlock {
        let mut out = BitBlock::zeros(0);
        for b in blocks {
            out.extend(b);
        }
        out
    }

    /// Keeps only the positions listed in `positions`, in that order.
    pub fn select(&self, positions: &[usize]) -> BitBlock {
        let mut out = BitBlock::zeros(positions.len());
        for (k, &p) in positions.iter().enumerate() {
            if self.get(p) {
                out.set(k, true);
            }
        }
        out
    }

    fn clear_tail(&mut self) {
        let r = self.len % 64;
        if r != 0 {
            if let Some(last) = self.words.last_mut() {
                *last &= (1u64 << r) - 1;
            }
        }
    }
}

impl fmt::Debug for BitBlock {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "BitBlock[{}; idx {}](", self.len, self.index)?;
        for bit in self.iter().take(64) {
            write!(f, "{}", bit as u8)?;
        }
        if self.len > 64 {
            write!(f, "…")?;
        }
        write!(f, ")")
    }
}

impl FromIterator<bool> for BitBlock {
    fn from_iter<I: IntoIterator<Item = bool>>(iter: I) -> Self {
        BitBlock::from_bits(iter)
    }
}
