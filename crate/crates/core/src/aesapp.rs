//! AES-128 for consuming distilled keys: T-table rounds, counter mode and the
//! `QKDE` ciphertext container.
//!
//! The T-table path indexes memory by secret data and is therefore exposed to
//! cache-timing attacks. [`Backend::ConstantTime`] computes the S-box
//! arithmetically with no secret-dependent lookups or branches, at a large cost
//! in speed.

use crate::error::{Error, Result};

const fn xtime(x: u8) -> u8 {
    (x << 1) ^ (((x >> 7) & 1) * 0x1b)
}

/// GF(2^8) product with no data-dependent branches.
const fn gmul(mut a: u8, mut b: u8) -> u8 {
    let mut p = 0u8;
    let mut i = 0;
    while i < 8 {
        p ^= a & (0u8.wrapping_sub(b & 1));
        a = xtime(a);
        b >>= 1;
        i += 1;
    }
    p
}

/// x^254, the multiplicative inverse (0 maps to 0).
const fn ginv(x: u8) -> u8 {
    let x2 = gmul(x, x);
    let x3 = gmul(x2, x);
    let x6 = gmul(x3, x3);
    let x12 = gmul(x6, x6);
    let x15 = gmul(x12, x3);
    let x30 = gmul(x15, x15);
    let x60 = gmul(x30, x30);
    let x120 = gmul(x60, x60);
    let x127 = gmul(gmul(x120, x6), x);
    gmul(x127, x127)
}

const fn affine(b: u8) -> u8 {
    b ^ b.rotate_left(1) ^ b.rotate_left(2) ^ b.rotate_left(3) ^ b.rotate_left(4) ^ 0x63
}

const fn inv_affine(s: u8) -> u8 {
    s.rotate_left(1) ^ s.rotate_left(3) ^ s.rotate_left(6) ^ 0x05
}

const fn sbox_ct(x: u8) -> u8 {
    affine(ginv(x))
}

const fn inv_sbox_ct(x: u8) -> u8 {
    ginv(inv_affine(x))
}

const SBOX: [u8; 256] = {
    let mut t = [0u8; 256];
    let mut i = 0;
    while i < 256 {
        t[i] = sbox_ct(i as u8);
        i += 1;
    }
    t
};

const INV_SBOX: [u8; 256] = {
    let mut t = [0u8; 256];
    let mut i = 0;
    while i < 256 {
        t[SBOX[i] as usize] = i as u8;
        i += 1;
    }
    t
};

const fn te0() -> [u32; 256] {
    let mut t = [0u32; 256];
    let mut i = 0;
    while i < 256 {
        let s = SBOX[i];
        t[i] = (gmul(s, 2) as u32) << 24 | (s as u32) << 16 | (s as u32) << 8 | gmul(s, 3) as u32;
        i += 1;
    }
    t
}

const fn td0() -> [u32; 256] {
    let mut t = [0u32; 256];
    let mut i = 0;
    while i < 256 {
        let s = INV_SBOX[i];
        t[i] = (gmul(s, 14) as u32) << 24 | (gmul(s, 9) as u32) << 16 | (gmul(s, 13) as u32) << 8 | gmul(s, 11) as u32;
        i += 1;
    }
    t
}

const fn rotate_table(t: [u32; 256], by: u32) -> [u32; 256] {
    let mut o = [0u32; 256];
    let mut i = 0;
    while i < 256 {
        o[i] = t[i].rotate_right(by);
        i += 1;
    }
    o
}

static TE: [[u32; 256]; 4] = [
    te0(),
    rotate_table(te0(), 8),
    rotate_table(te0(), 16),
    rotate_table(te0(), 24),
];
static TD: [[u32; 256]; 4] = [
    td0(),
    rotate_table(td0(), 8),
    rotate_table(td0(), 16),
    rotate_table(td0(), 24),
];

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AesKeySchedule {
    pub round_keys: [[u8; 16]; 11],
}

/// FIPS-197 key expansion.
pub fn expand_key(key: &[u8; 16]) -> AesKeySchedule {
    let mut w = [[0u8; 4]; 44];
    for i in 0..4 {
        w[i].copy_from_slice(&key[4 * i..4 * i + 4]);
    }
    let mut rcon = 1u8;
    for i in 4..44 {
        let mut t = w[i - 1];
        if i % 4 == 0 {
            t = [sbox_ct(t[1]) ^ rcon, sbox_ct(t[2]), sbox_ct(t[3]), sbox_ct(t[0])];
            rcon = xtime(rcon);
        }
        for k in 0..4 {
            w[i][k] = w[i - 4][k] ^ t[k];
        }
    }
    let mut round_keys = [[0u8; 16]; 11];
    for (r, rk) in round_keys.iter_mut().enumerate() {
        for c in 0..4 {
            rk[4 * c..4 * c + 4].copy_from_slice(&w[4 * r + c]);
        }
    }
    AesKeySchedule { round_keys }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Backend {
    #[default]
    TTable,
    ConstantTime,
}

#[derive(Clone)]
pub struct Aes128 {
    schedule: AesKeySchedule,
    enc: [[u32; 4]; 11],
    dec: [[u32; 4]; 11],
    backend: Backend,
}

impl std::fmt::Debug for Aes128 {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Aes128")
            .field("backend", &self.backend)
            .finish_non_exhaustive()
    }
}

fn words(b: &[u8; 16]) -> [u32; 4] {
    std::array::from_fn(|c| u32::from_be_bytes(b[4 * c..4 * c + 4].try_into().unwrap()))
}

fn inv_mix_word(w: u32) -> u32 {
    let b = w.to_be_bytes();
    let m = |x: [u8; 4]| gmul(b[0], x[0]) ^ gmul(b[1], x[1]) ^ gmul(b[2], x[2]) ^ gmul(b[3], x[3]);
    u32::from_be_bytes([
        m([14, 11, 13, 9]),
        m([9, 14, 11, 13]),
        m([13, 9, 14, 11]),
        m([11, 13, 9, 14]),
    ])
}

impl Aes128 {
    pub fn new(key: &[u8; 16]) -> Self {
        Self::with_backend(key, Backend::TTable)
    }

    pub fn with_backend(key: &[u8; 16], backend: Backend) -> Self {
        let schedule = expand_key(key);
        let enc: [[u32; 4]; 11] = std::array::from_fn(|r| words(&schedule.round_keys[r]));
        let dec: [[u32; 4]; 11] = std::array::from_fn(|i| {
            let rk = enc[10 - i];
            if i == 0 || i == 10 {
                rk
            } else {
                rk.map(inv_mix_word)
            }
        });
        Aes128 {
            schedule,
            enc,
            dec,
            backend,
        }
    }

    pub fn schedule(&self) -> &AesKeySchedule {
        &self.schedule
    }

    pub fn backend(&self) -> Backend {
        self.backend
    }

    pub fn encrypt_block(&self, block: [u8; 16]) -> [u8; 16] {
        match self.backend {
            Backend::TTable => self.encrypt_ttable(block),
            Backend::ConstantTime => reference::encrypt(&self.schedule, block, sbox_ct),
        }
    }

    pub fn decrypt_block(&self, block: [u8; 16]) -> [u8; 16] {
        match self.backend {
            Backend::TTable => self.decrypt_ttable(block),
            Backend::ConstantTime => reference::decrypt(&self.schedule, block, inv_sbox_ct),
        }
    }

    fn encrypt_ttable(&self, block: [u8; 16]) -> [u8; 16] {
        let rk = &self.enc;
        let mut s = words(&block);
        for c in 0..4 {
            s[c] ^= rk[0][c];
        }
        for r in 1..10 {
            let t: [u32; 4] = std::array::from_fn(|c| {
                TE[0][(s[c] >> 24) as usize]
                    ^ TE[1][(s[(c + 1) % 4] >> 16 & 0xff) as usize]
                    ^ TE[2][(s[(c + 2) % 4] >> 8 & 0xff) as usize]
                    ^ TE[3][(s[(c + 3) % 4] & 0xff) as usize]
                    ^ rk[r][c]
            });
            s = t;
        }
        let mut out = [0u8; 16];
        for c in 0..4 {
            let w = (SBOX[(s[c] >> 24) as usize] as u32) << 24
                | (SBOX[(s[(c + 1) % 4] >> 16 & 0xff) as usize] as u32) << 16
                | (SBOX[(s[(c + 2) % 4] >> 8 & 0xff) as usize] as u32) << 8
                | SBOX[(s[(c + 3) % 4] & 0xff) as usize] as u32;
            out[4 * c..4 * c + 4].copy_from_slice(&(w ^ rk[10][c]).to_be_bytes());
        }
        out
    }

    fn decrypt_ttable(&self, block: [u8; 16]) -> [u8; 16] {
        let dk = &self.dec;
        let mut s = words(&block);
        for c in 0..4 {
            s[c] ^= dk[0][c];
        }
        for r in 1..10 {
            let t: [u32; 4] = std::array::from_fn(|c| {
                TD[0][(s[c] >> 24) as usize]
                    ^ TD[1][(s[(c + 3) % 4] >> 16 & 0xff) as usize]
                    ^ TD[2][(s[(c + 2) % 4] >> 8 & 0xff) as usize]
                    ^ TD[3][(s[(c + 1) % 4] & 0xff) as usize]
                    ^ dk[r][c]
            });
            s = t;
        }
        let mut out = [0u8; 16];
        for c in 0..4 {
            let w = (INV_SBOX[(s[c] >> 24) as usize] as u32) << 24
                | (INV_SBOX[(s[(c + 3) % 4] >> 16 & 0xff) as usize] as u32) << 16
                | (INV_SBOX[(s[(c + 2) % 4] >> 8 & 0xff) as usize] as u32) << 8
                | INV_SBOX[(s[(c + 1) % 4] & 0xff) as usize] as u32;
            out[4 * c..4 * c + 4].copy_from_slice(&(w ^ dk[10][c]).to_be_bytes());
        }
        out
    }
}

/// Byte-oriented rounds straight from the standard: SubBytes, ShiftRows,
/// MixColumns, AddRoundKey. The S-box is a parameter so tests can plug in a
/// table built independently.
mod reference {
    use super::{gmul, xtime, AesKeySchedule};

    fn add(s: &mut [u8; 16], k: &[u8; 16]) {
        for (a, b) in s.iter_mut().zip(k) {
            *a ^= b;
        }
    }

    fn shift_rows(s: &mut [u8; 16], inverse: bool) {
        let old = *s;
        for r in 1..4 {
            for c in 0..4 {
                let from = if inverse { (c + 4 - r) % 4 } else { (c + r) % 4 };
                s[4 * c + r] = old[4 * from + r];
            }
        }
    }

    fn mix(s: &mut [u8; 16]) {
        for c in 0..4 {
            let a: [u8; 4] = s[4 * c..4 * c + 4].try_into().unwrap();
            let all = a[0] ^ a[1] ^ a[2] ^ a[3];
            for r in 0..4 {
                s[4 * c + r] = a[r] ^ all ^ xtime(a[r] ^ a[(r + 1) % 4]);
            }
        }
    }

    fn inv_mix(s: &mut [u8; 16]) {
        for c in 0..4 {
            let a: [u8; 4] = s[4 * c..4 * c + 4].try_into().unwrap();
            for r in 0..4 {
                s[4 * c + r] =
                    gmul(a[r], 14) ^ gmul(a[(r + 1) % 4], 11) ^ gmul(a[(r + 2) % 4], 13) ^ gmul(a[(r + 3) % 4], 9);
            }
        }
    }

    pub fn encrypt(ks: &AesKeySchedule, mut s: [u8; 16], sbox: impl Fn(u8) -> u8) -> [u8; 16] {
        add(&mut s, &ks.round_keys[0]);
        for r in 1..11 {
            s = s.map(&sbox);
            shift_rows(&mut s, false);
            if r < 10 {
                mix(&mut s);
            }
            add(&mut s, &ks.round_keys[r]);
        }
        s
    }

    pub fn decrypt(ks: &AesKeySchedule, mut s: [u8; 16], inv_sbox: impl Fn(u8) -> u8) -> [u8; 16] {
        add(&mut s, &ks.round_keys[10]);
        for r in (0..10).rev() {
            shift_rows(&mut s, true);
            s = s.map(&inv_sbox);
            add(&mut s, &ks.round_keys[r]);
            if r > 0 {
                inv_mix(&mut s);
            }
        }
        s
    }
}

/// XORs `data` with the keystream `AES(nonce || counter)`, counter from 0,
/// big-endian. Encryption and decryption are the same operation.
pub fn ctr_apply(aes: &Aes128, nonce: &[u8; 12], data: &mut [u8]) {
    let mut block = [0u8; 16];
    block[..12].copy_from_slice(nonce);
    for (i, chunk) in data.chunks_mut(16).enumerate() {
        block[12..].copy_from_slice(&(i as u32).to_be_bytes());
        let ks = aes.encrypt_block(block);
        for (d, k) in chunk.iter_mut().zip(ks) {
            *d ^= k;
        }
    }
}

/// One-time pad: `key` must be at least as long as `data`.
pub fn otp_apply(key: &[u8], data: &mut [u8]) -> Result<()> {
    if key.len() < data.len() {
        return Err(Error::KeyExhausted {
            needed: data.len() * 8,
            available: key.len() * 8,
        });
    }
    for (d, k) in data.iter_mut().zip(key) {
        *d ^= k;
    }
    Ok(())
}

pub const CONTAINER_MAGIC: &[u8; 4] = b"QKDE";
const CONTAINER_HEADER: usize = 4 + 12 + 8;

/// `"QKDE"`, 96-bit nonce, u64 little-endian length, ciphertext.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Container {
    pub nonce: [u8; 12],
    pub data: Vec<u8>,
}

impl Container {
    pub fn seal(aes: &Aes128, nonce: [u8; 12], plaintext: &[u8]) -> Self {
        let mut data = plaintext.to_vec();
        ctr_apply(aes, &nonce, &mut data);
        Container { nonce, data }
    }

    pub fn open(&self, aes: &Aes128) -> Vec<u8> {
        let mut data = self.data.clone();
        ctr_apply(aes, &self.nonce, &mut data);
        data
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(CONTAINER_HEADER + self.data.len());
        out.extend_from_slice(CONTAINER_MAGIC);
        out.extend_from_slice(&self.nonce);
        out.extend_from_slice(&(self.data.len() as u64).to_le_bytes());
        out.extend_from_slice(&self.data);
        out
    }

    pub fn from_bytes(b: &[u8]) -> Result<Self> {
        if b.len() < CONTAINER_HEADER || &b[..4] != CONTAINER_MAGIC {
            return Err(Error::Format("not a QKDE container".into()));
        }
        let len = u64::from_le_bytes(b[16..24].try_into().unwrap()) as usize;
        if b.len() - CONTAINER_HEADER != len {
            return Err(Error::Format(format!(
                "container declares {len} bytes but holds {}",
                b.len() - CONTAINER_HEADER
            )));
        }
        Ok(Container {
            nonce: b[4..16].try_into().unwrap(),
            data: b[CONTAINER_HEADER..].to_vec(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, RngCore};

    fn hex(s: &str) -> Vec<u8> {
        (0..s.len())
            .step_by(2)
            .map(|i| u8::from_str_radix(&s[i..i + 2], 16).unwrap())
            .collect()
    }

    fn h16(s: &str) -> [u8; 16] {
        hex(s).try_into().unwrap()
    }

    /// Independent S-box: multiplicative inverse by search, affine map bit by bit.
    fn oracle_sbox() -> [u8; 256] {
        let mul = |mut a: u8, mut b: u8| {
            let mut p = 0u8;
            while b != 0 {
                if b & 1 == 1 {
                    p ^= a;
                }
                let hi = a & 0x80 != 0;
                a <<= 1;
                if hi {
                    a ^= 0x1b;
                }
                b >>= 1;
            }
            p
        };
        let mut t = [0u8; 256];
        for x in 0..256usize {
            let inv = if x == 0 {
                0
            } else {
                (1..=255u8).find(|&y| mul(x as u8, y) == 1).unwrap()
            };
            let mut s = 0u8;
            for i in 0..8 {
                let bit = (inv >> i)
                    ^ (inv >> ((i + 4) % 8))
                    ^ (inv >> ((i + 5) % 8))
                    ^ (inv >> ((i + 6) % 8))
                    ^ (inv >> ((i + 7) % 8))
                    ^ (0x63 >> i);
                s |= (bit & 1) << i;
            }
            t[x] = s;
        }
        t
    }

    #[test]
    fn sbox_matches_oracle() {
        let o = oracle_sbox();
        assert_eq!(SBOX, o);
        assert_eq!(SBOX[0x00], 0x63);
        assert_eq!(SBOX[0x53], 0xed);
        for x in 0..=255u8 {
            assert_eq!(INV_SBOX[SBOX[x as usize] as usize], x);
            assert_eq!(inv_sbox_ct(sbox_ct(x)), x);
        }
    }

    #[test]
    fn key_schedule_vectors() {
        let zero = expand_key(&[0u8; 16]);
        assert_eq!(zero.round_keys.len(), 11);
        assert_eq!(zero.round_keys[1], h16("62636363626363636263636362636363"));
        let ks = expand_key(&h16("2b7e151628aed2a6abf7158809cf4f3c"));
        assert_eq!(ks.round_keys[1], h16("a0fafe1788542cb123a339392a6c7605"));
        assert_eq!(ks.round_keys[10], h16("d014f9a8c9ee2589e13f0cc8b6630ca6"));
    }

    #[test]
    fn fips197_block_vectors() {
        let cases = [
            (
                "000102030405060708090a0b0c0d0e0f",
                "00112233445566778899aabbccddeeff",
                "69c4e0d86a7b0430d8cdb78070b4c55a",
            ),
            (
                "2b7e151628aed2a6abf7158809cf4f3c",
                "3243f6a8885a308d313198a2e0370734",
                "3925841d02dc09fbdc118597196a0b32",
            ),
        ];
        for (k, p, c) in cases {
            for backend in [Backend::TTable, Backend::ConstantTime] {
                let aes = Aes128::with_backend(&h16(k), backend);
                assert_eq!(aes.encrypt_block(h16(p)), h16(c), "{backend:?}");
                assert_eq!(aes.decrypt_block(h16(c)), h16(p), "{backend:?}");
            }
            let o = oracle_sbox();
            assert_eq!(
                reference::encrypt(&expand_key(&h16(k)), h16(p), |x| o[x as usize]),
                h16(c)
            );
        }
    }

    #[test]
    fn ttable_equals_reference_rounds() {
        let mut rng = crate::rng::stream(1, "aes-test");
        let o = oracle_sbox();
        for _ in 0..200 {
            let key: [u8; 16] = rng.gen();
            let aes = Aes128::new(&key);
            for _ in 0..20 {
                let b: [u8; 16] = rng.gen();
                let c = aes.encrypt_block(b);
                assert_eq!(c, reference::encrypt(aes.schedule(), b, |x| o[x as usize]));
                assert_eq!(aes.decrypt_block(c), b);
            }
        }
    }

    #[test]
    fn ctr_roundtrip_and_keystream() {
        let aes = Aes128::new(&[9u8; 16]);
        let nonce = [3u8; 12];
        let mut rng = crate::rng::stream(2, "ctr");
        for len in [0usize, 1, 15, 16, 17, 1000] {
            let mut data = vec![0u8; len];
            rng.fill_bytes(&mut data);
            let c = Container::seal(&aes, nonce, &data);
            let parsed = Container::from_bytes(&c.to_bytes()).unwrap();
            assert_eq!(parsed.open(&aes), data);
        }
        let mut zeros = [0u8; 32];
        ctr_apply(&aes, &nonce, &mut zeros);
        let mut ctr1 = [3u8; 16];
        ctr1[12..].copy_from_slice(&1u32.to_be_bytes());
        assert_eq!(zeros[16..], aes.encrypt_block(ctr1));
        let empty = Container::seal(&aes, nonce, &[]).to_bytes();
        assert_eq!(empty.len(), 24);
    }

    #[test]
    fn otp_needs_enough_key() {
        let mut d = [1u8, 2, 3];
        otp_apply(&[1, 2, 3, 4], &mut d).unwrap();
        assert_eq!(d, [0, 0, 0]);
        assert!(otp_apply(&[1], &mut d).is_err());
    }
}
