//! Wegman-Carter authentication of the classical channel.
//!
//! Tags are `poly(m, k1) mod 2^128 XOR k2` with `k2` a one-time key. With the
//! countermeasure on, `k1` is recomputed for every message as a Toeplitz
//! product of that message's `k2`, so a side channel that recovers one `k1`
//! learns nothing about the next.
//!
//! Clamping follows the usual 1305 layout: with `r` read little-endian from
//! 16 bytes, bytes 3, 7, 11 and 15 keep only their low four bits and bytes 4,
//! 8 and 12 have their low two bits cleared.

mod channel;
mod poly;

pub use channel::{
    channel_pair, tcp_pair, AuthEndpoint, Frame, FrameTransport, MemoryTransport, MessageType, TcpTransport,
};
pub use poly::{clamp, poly_hash, poly_hash_counted, PolyValue, CLAMP_MASK};

use subtle::ConstantTimeEq;

use crate::aesapp::Aes128;
use crate::bits::BitBlock;
use crate::error::{Error, Result};
use crate::rng;

/// Length of the refresh seed for a 128 x 128 Toeplitz matrix.
pub const REFRESH_SEED_BITS: usize = 255;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct KeyId {
    pub epoch: u32,
    pub index: u32,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Tag128 {
    pub tag: u128,
    pub key_id: KeyId,
}

/// Where one-time keys come from.
#[derive(Clone, Debug)]
pub enum K2Source {
    /// Pre-shared or distilled key, consumed in order.
    Pool(Vec<u128>),
    /// `AES_k(index)`; for interop tests only, not information-theoretic.
    Aes(Box<Aes128>),
}

/// How `k1` is chosen per message.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum K1Mode {
    /// Legacy: the same `k1` for every message.
    Fixed,
    /// `k1 = clamp(T_r k2)` with `r` drawn per message from a seed both ends share.
    Refresh { seed: u64 },
}

#[derive(Clone, Debug)]
pub struct MacKeyPair {
    k1: u128,
    k1_epoch: u32,
    k2: K2Source,
    cursor: u32,
    mode: K1Mode,
}

impl MacKeyPair {
    pub fn new(k1: u128, k2: K2Source, mode: K1Mode) -> Self {
        MacKeyPair {
            k1: clamp(k1),
            k1_epoch: 0,
            k2,
            cursor: 0,
            mode,
        }
    }

    pub fn k1(&self) -> u128 {
        self.k1
    }

    pub fn mode(&self) -> K1Mode {
        self.mode
    }

    /// Index of the next unused `k2`.
    pub fn cursor(&self) -> u32 {
        self.cursor
    }

    /// One-time keys left; `None` for the unbounded AES source.
    pub fn remaining(&self) -> Option<usize> {
        match &self.k2 {
            K2Source::Pool(p) => Some(p.len().saturating_sub(self.cursor as usize)),
            K2Source::Aes(_) => None,
        }
    }

    /// Appends fresh one-time keys, e.g. from a previous session's output.
    pub fn replenish(&mut self, keys: impl IntoIterator<Item = u128>) -> Result<()> {
        match &mut self.k2 {
            K2Source::Pool(p) => {
                p.extend(keys);
                Ok(())
            }
            K2Source::Aes(_) => Err(Error::Config("cannot replenish an AES-derived k2 source".into())),
        }
    }

    fn k2_at(&self, index: u32) -> Result<u128> {
        match &self.k2 {
            K2Source::Pool(p) => p.get(index as usize).copied().ok_or(Error::KeyExhausted {
                needed: index as usize + 1,
                available: p.len(),
            }),
            K2Source::Aes(aes) => {
                let mut block = [0u8; 16];
                block[..4].copy_from_slice(&index.to_le_bytes());
                Ok(u128::from_le_bytes(aes.encrypt_block(block)))
            }
        }
    }

    /// `(k1, epoch)` for the message using `k2` number `index`.
    fn k1_for(&self, index: u32, k2: u128) -> (u128, u32) {
        match self.mode {
            K1Mode::Fixed => (self.k1, self.k1_epoch),
            K1Mode::Refresh { seed } => {
                let r = refresh_seed(seed, index);
                let k1 = refresh_k1(k2, &r).expect("refresh seed has the right length");
                (clamp(k1), index + 1)
            }
        }
    }

    /// Key id the next [`mac`] will use, without consuming anything.
    pub fn next_key_id(&self) -> Result<KeyId> {
        let index = self.cursor;
        let (_, epoch) = self.k1_for(index, self.k2_at(index)?);
        Ok(KeyId { epoch, index })
    }

    /// Takes the next `k2` and the `k1` to pair with it.
    fn take(&mut self) -> Result<(KeyId, u128, u128)> {
        let index = self.cursor;
        let k2 = self.k2_at(index)?;
        let (k1, epoch) = self.k1_for(index, k2);
        self.cursor += 1;
        Ok((KeyId { epoch, index }, k1, k2))
    }

    /// Keys for a received tag; the index must be the next one expected.
    fn take_expected(&mut self, id: KeyId) -> Result<(u128, u128)> {
        if id.index != self.cursor {
            return Err(Error::Authentication(format!(
                "key index {} out of sequence, expected {}",
                id.index, self.cursor
            )));
        }
        let k2 = self.k2_at(id.index)?;
        let (k1, epoch) = self.k1_for(id.index, k2);
        if epoch != id.epoch {
            return Err(Error::Authentication(format!(
                "k1 epoch {} does not match {}",
                id.epoch, epoch
            )));
        }
        self.cursor += 1;
        Ok((k1, k2))
    }
}

/// The per-message Toeplitz seed both ends derive for refresh number `index`.
pub fn refresh_seed(seed: u64, index: u32) -> BitBlock {
    let mut rng = rng::indexed_stream(seed, "k1-refresh", index as u64);
    BitBlock::random(REFRESH_SEED_BITS, &mut rng)
}

/// `T_r · k2` over GF(2) with `T[i][j] = r[L-1-i+j]` (0-based), so the top row
/// reads `r[L-1..]` and the bottom row `r[0..N]`. Not clamped.
pub fn refresh_k1(k2: u128, trng_bits: &BitBlock) -> Result<u128> {
    if trng_bits.len() != REFRESH_SEED_BITS {
        return Err(Error::size("refresh seed", REFRESH_SEED_BITS, trng_bits.len()));
    }
    let w = trng_bits.words();
    let window = |start: usize| -> u128 {
        // 128 bits of r starting at `start`, bit j of the result = r[start + j].
        let (q, s) = (start / 64, start % 64);
        let word = |i: usize| w.get(i).copied().unwrap_or(0) as u128;
        let raw = word(q) | word(q + 1) << 64;
        let lo = raw >> s;
        if s == 0 {
            lo
        } else {
            lo | word(q + 2) << (128 - s)
        }
    };
    let mut out = 0u128;
    for i in 0..128 {
        let row = window(127 - i);
        out |= (((row & k2).count_ones() & 1) as u128) << i;
    }
    Ok(out)
}

/// `(poly_hash(m, k1) mod 2^128) XOR k2`, consuming one `k2`.
pub fn mac(message: &[u8], keys: &mut MacKeyPair) -> Result<Tag128> {
    let (key_id, k1, k2) = keys.take()?;
    Ok(Tag128 {
        tag: poly_hash(message, k1).low ^ k2,
        key_id,
    })
}

/// Checks `tag` against `message` in constant time, consuming the matching `k2`.
pub fn verify_tag(message: &[u8], tag: &Tag128, keys: &mut MacKeyPair) -> Result<()> {
    let (k1, k2) = keys.take_expected(tag.key_id)?;
    let expect = poly_hash(message, k1).low ^ k2;
    if bool::from(expect.to_le_bytes().ct_eq(&tag.tag.to_le_bytes())) {
        Ok(())
    } else {
        Err(Error::Authentication(format!(
            "tag mismatch for key index {}",
            tag.key_id.index
        )))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_bigint::BigUint;
    use rand::{Rng, RngCore, SeedableRng};

    fn big_p() -> BigUint {
        (BigUint::from(1u8) << 130u32) - BigUint::from(5u8)
    }

    /// Sum of c_i r^(L-i+1) mod p, computed with explicit powers.
    fn naive_poly(message: &[u8], r: u128) -> BigUint {
        let p = big_p();
        let r = BigUint::from(clamp(r));
        let chunks: Vec<&[u8]> = message.chunks(16).collect();
        let l = chunks.len();
        let mut acc = BigUint::from(0u8);
        for (i, c) in chunks.iter().enumerate() {
            let mut bytes = c.to_vec();
            bytes.push(1);
            let coeff = BigUint::from_bytes_le(&bytes);
            let power = r.modpow(&BigUint::from((l - i) as u64), &p);
            acc = (acc + coeff * power) % &p;
        }
        acc
    }

    fn to_big(v: PolyValue) -> BigUint {
        BigUint::from(v.low) + (BigUint::from(v.high) << 128u32)
    }

    fn pool(seed: u64, n: usize) -> Vec<u128> {
        let mut rng = rng::stream(seed, "test-pool");
        (0..n).map(|_| rng.gen()).collect()
    }

    #[test]
    fn empty_and_zero_key() {
        assert_eq!(poly_hash(&[], 0x1234), PolyValue::default());
        assert_eq!(poly_hash(b"some message bytes", 0), PolyValue::default());
    }

    #[test]
    fn matches_naive_oracle() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        for len in [1usize, 15, 16, 17, 31, 32, 64, 100, 257] {
            for _ in 0..8 {
                let mut m = vec![0u8; len];
                rng.fill_bytes(&mut m);
                let r: u128 = rng.gen();
                assert_eq!(to_big(poly_hash(&m, r)), naive_poly(&m, r), "len {len}");
            }
        }
    }

    #[test]
    fn oracle_at_field_edges() {
        // Coefficients near 2^129 exercise the final reduction.
        let m = [0xffu8; 64];
        for r in [CLAMP_MASK, 1, 2, 1 << 64] {
            assert_eq!(to_big(poly_hash(&m, r)), naive_poly(&m, r));
        }
    }

    #[test]
    fn rfc8439_vector() {
        let r = u128::from_le_bytes([
            0x85, 0xd6, 0xbe, 0x78, 0x57, 0x55, 0x6d, 0x33, 0x7f, 0x44, 0x52, 0xfe, 0x42, 0xd5, 0x06, 0xa8,
        ]);
        let s = u128::from_le_bytes([
            0x01, 0x03, 0x80, 0x8a, 0xfb, 0x0d, 0xb2, 0xfd, 0x4a, 0xbf, 0xf6, 0xaf, 0x41, 0x49, 0xf5, 0x1b,
        ]);
        let h = poly_hash(b"Cryptographic Forum Research Group", r);
        let tag = h.low.wrapping_add(s).to_le_bytes();
        assert_eq!(
            tag,
            [0xa8, 0x06, 0x1d, 0xc1, 0x30, 0x51, 0x36, 0xc6, 0xc2, 0x2b, 0x8b, 0xaf, 0x0c, 0x01, 0x27, 0xa9]
        );
    }

    #[test]
    fn horner_uses_one_multiplication_per_chunk() {
        for len in [0usize, 1, 16, 17, 48, 1000] {
            let (_, muls) = poly_hash_counted(&vec![7u8; len], 0xabcdef);
            assert_eq!(muls, len.div_ceil(16));
        }
    }

    #[test]
    fn clamp_clears_22_bits() {
        assert_eq!((!CLAMP_MASK).count_ones(), 22);
        let b = CLAMP_MASK.to_le_bytes();
        for i in [3, 7, 11, 15] {
            assert_eq!(b[i], 0x0f);
        }
        for i in [4, 8, 12] {
            assert_eq!(b[i], 0xfc);
        }
    }

    #[test]
    fn mac_is_otp_masked() {
        let k2 = pool(1, 2);
        let mut a = MacKeyPair::new(0, K2Source::Pool(k2.clone()), K1Mode::Fixed);
        let t = mac(b"hello", &mut a).unwrap();
        assert_eq!(t.tag, k2[0]);

        let k1 = 0x0123_4567_89ab_cdef_0011_2233_4455_6677;
        let mut a = MacKeyPair::new(k1, K2Source::Pool(k2.clone()), K1Mode::Fixed);
        let t1 = mac(b"same", &mut a).unwrap();
        let t2 = mac(b"same", &mut a).unwrap();
        assert_eq!(t1.tag ^ t2.tag, k2[0] ^ k2[1]);
        assert_eq!(t1.tag, poly_hash(b"same", k1).low ^ k2[0]);
        assert!(matches!(mac(b"x", &mut a), Err(Error::KeyExhausted { .. })));
    }

    #[test]
    fn verify_roundtrip_and_sequence() {
        let k2 = pool(2, 4);
        let mode = K1Mode::Refresh { seed: 5 };
        let mut tx = MacKeyPair::new(11, K2Source::Pool(k2.clone()), mode);
        let mut rx = MacKeyPair::new(11, K2Source::Pool(k2), mode);
        let t = mac(b"abc", &mut tx).unwrap();
        verify_tag(b"abc", &t, &mut rx).unwrap();
        let t = mac(b"abd", &mut tx).unwrap();
        assert!(verify_tag(b"abc", &t, &mut rx).is_err());
        let t = mac(b"x", &mut tx).unwrap();
        let mut replay = rx.clone();
        assert!(verify_tag(
            b"x",
            &Tag128 {
                key_id: KeyId { index: 0, ..t.key_id },
                ..t
            },
            &mut replay
        )
        .is_err());
    }

    fn dense_refresh(k2: u128, r: &BitBlock) -> u128 {
        let mut out = 0u128;
        for i in 0..128 {
            let mut bit = false;
            for j in 0..128 {
                bit ^= r.get(127 - i + j) && (k2 >> j) & 1 == 1;
            }
            out |= (bit as u128) << i;
        }
        out
    }

    #[test]
    fn refresh_k1_cases() {
        let zero = BitBlock::random(REFRESH_SEED_BITS, &mut rng::stream(3, "t"));
        assert_eq!(refresh_k1(0, &zero).unwrap(), 0);

        let mut ident = BitBlock::zeros(REFRESH_SEED_BITS);
        ident.set(127, true);
        let k2 = 0xdead_beef_0bad_cafe_1234_5678_9abc_def0;
        assert_eq!(refresh_k1(k2, &ident).unwrap(), k2);

        let mut rng = rng::stream(4, "t");
        for _ in 0..20 {
            let r = BitBlock::random(REFRESH_SEED_BITS, &mut rng);
            let k2: u128 = rng.gen();
            let got = refresh_k1(k2, &r).unwrap();
            assert_eq!(got, dense_refresh(k2, &r));
            let seed = crate::pa::ToeplitzSeed::new(128, 128, r.iter().rev().collect()).unwrap();
            let input = BitBlock::from_bytes(&k2.to_le_bytes(), 128);
            let out = crate::pa::toeplitz_hash_direct(&seed, &input).unwrap();
            assert_eq!(u128::from_le_bytes(out.to_bytes().try_into().unwrap()), got);
        }
        assert!(matches!(refresh_k1(1, &BitBlock::zeros(254)), Err(Error::Size { .. })));
    }

    #[test]
    fn countermeasure_changes_k1_every_message() {
        let mode = K1Mode::Refresh { seed: 77 };
        let mut keys = MacKeyPair::new(0, K2Source::Pool(pool(6, 16)), mode);
        let mut last_epoch = 0;
        let mut seen = std::collections::HashSet::new();
        for _ in 0..16 {
            let index = keys.cursor();
            let k2 = keys.k2_at(index).unwrap();
            let (k1, epoch) = keys.k1_for(index, k2);
            assert!(epoch > last_epoch);
            last_epoch = epoch;
            assert!(seen.insert(k1));
            let t = mac(b"m", &mut keys).unwrap();
            assert_eq!(t.key_id.epoch, epoch);
        }
    }

    #[test]
    fn fixed_k1_leaks_k2_and_allows_forgery() {
        // With k1 known, one observed tag yields k2 and hence a forgery for any
        // message under the same key index.
        let k1 = 0x0f0e_0d0c_0b0a_0908_0706_0504_0302_0100;
        let k2 = pool(8, 1);
        let mut alice = MacKeyPair::new(k1, K2Source::Pool(k2.clone()), K1Mode::Fixed);
        let t = mac(b"pay bob 1", &mut alice).unwrap();
        let leaked_k2 = poly_hash(b"pay bob 1", k1).low ^ t.tag;
        assert_eq!(leaked_k2, k2[0]);
        let forged = Tag128 {
            tag: poly_hash(b"pay eve 9", k1).low ^ leaked_k2,
            key_id: t.key_id,
        };
        let mut bob = MacKeyPair::new(k1, K2Source::Pool(k2.clone()), K1Mode::Fixed);
        verify_tag(b"pay eve 9", &forged, &mut bob).unwrap();

        // Under refresh the pre-known k1 is useless.
        let mode = K1Mode::Refresh { seed: 3 };
        let mut alice = MacKeyPair::new(k1, K2Source::Pool(k2.clone()), mode);
        let t = mac(b"pay bob 1", &mut alice).unwrap();
        let guess = poly_hash(b"pay bob 1", k1).low ^ t.tag;
        let forged = Tag128 {
            tag: poly_hash(b"pay eve 9", k1).low ^ guess,
            key_id: t.key_id,
        };
        let mut bob = MacKeyPair::new(k1, K2Source::Pool(k2), mode);
        assert!(verify_tag(b"pay eve 9", &forged, &mut bob).is_err());
    }

    #[test]
    fn aes_k2_source() {
        let aes = Aes128::new(&[7u8; 16]);
        let mut a = MacKeyPair::new(5, K2Source::Aes(Box::new(aes.clone())), K1Mode::Fixed);
        let mut b = MacKeyPair::new(5, K2Source::Aes(Box::new(aes)), K1Mode::Fixed);
        assert_eq!(a.remaining(), None);
        for _ in 0..3 {
            let t = mac(b"interop", &mut a).unwrap();
            verify_tag(b"interop", &t, &mut b).unwrap();
        }
    }

    /// ((a x + b) mod p) mod m over a small prime: for x != y, the fraction of
    /// (a, b) pairs with a collision is at most 1/m (plus rounding).
    #[test]
    fn carter_wegman_family_is_universal() {
        let p = 97u64;
        let m = 8u64;
        let h = |a: u64, b: u64, x: u64| ((a * x + b) % p) % m;
        for (x, y) in [(1u64, 2u64), (3, 50), (10, 96), (0, 45)] {
            let mut coll = 0u64;
            let mut total = 0u64;
            for a in 1..p {
                for b in 0..p {
                    total += 1;
                    if h(a, b, x) == h(a, b, y) {
                        coll += 1;
                    }
                }
            }
            assert!(
                (coll as f64) / (total as f64) <= 1.0 / m as f64 + 1.0 / p as f64,
                "{x},{y}"
            );
        }
    }
}
