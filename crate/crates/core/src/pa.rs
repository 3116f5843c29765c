//! Privacy amplification by Toeplitz hashing.
//!
//! The `r x n` matrix is `T[i][j] = seed[i - j + n - 1]`, so a seed of
//! `n + r - 1` bits fixes it. The FFT path computes the same product as a
//! real convolution rounded back to integers; the direct path is the
//! bit-packed reference.

use std::sync::Arc;

use rand::seq::SliceRandom;
use rustfft::{num_complex::Complex, Fft, FftPlanner};

use crate::bits::BitBlock;
use crate::error::{Error, Result};
use crate::rng;

/// Largest `n + r - 1` one FFT hash may take.
pub const MAX_FFT_SPAN: usize = 1 << 22;
const ROUNDING_GUARD: f64 = 0.25;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ToeplitzSeed {
    pub n: usize,
    pub r: usize,
    pub bits: BitBlock,
}

impl ToeplitzSeed {
    pub fn new(n: usize, r: usize, bits: BitBlock) -> Result<Self> {
        if n == 0 || r == 0 {
            return Err(Error::Config(format!("toeplitz dimensions {r}x{n} must be positive")));
        }
        if bits.len() != n + r - 1 {
            return Err(Error::size("toeplitz seed", n + r - 1, bits.len()));
        }
        Ok(ToeplitzSeed { n, r, bits })
    }

    pub fn random(n: usize, r: usize, rng: &mut rng::StreamRng) -> Result<Self> {
        Self::new(n, r, BitBlock::random(n + r.max(1) - 1, rng))
    }

    /// Matrix entry, for oracles and small demos.
    pub fn entry(&self, i: usize, j: usize) -> bool {
        self.bits.get(i + self.n - 1 - j)
    }
}

/// Which key-length bound [`output_length`] applies.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KeyLengthModel {
    /// `n(1 - h2(q)) - leak_ec - leak_pe - verify - 2 log2(1/eps)`.
    Standard,
    /// `n - max(leak_ec, n h2(q)) - leak_pe - verify - 2 log2(1/eps)`: the
    /// reconciliation transcript is charged at what was actually disclosed,
    /// never less than the Shannon minimum.
    #[default]
    DisclosedLeakage,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PaPolicy {
    pub epsilon_pa: f64,
    pub leak_ec: usize,
    pub leak_pe: usize,
    pub verify_bits: usize,
    pub model: KeyLengthModel,
}

impl Default for PaPolicy {
    fn default() -> Self {
        PaPolicy {
            epsilon_pa: 1e-10,
            leak_ec: 0,
            leak_pe: 0,
            verify_bits: 0,
            model: KeyLengthModel::default(),
        }
    }
}

/// Final key length for `n` reconciled bits, clipped to `[0, n - 1]`.
pub fn output_length(n: usize, qber_bound: f64, policy: &PaPolicy) -> usize {
    if n == 0 || qber_bound >= 0.5 || qber_bound.is_nan() {
        return 0;
    }
    let nf = n as f64;
    let ent = nf * crate::ldpc::h2(qber_bound.max(0.0));
    let leak_ec = policy.leak_ec as f64;
    let base = match policy.model {
        KeyLengthModel::Standard => nf - ent - leak_ec,
        KeyLengthModel::DisclosedLeakage => nf - ent.max(leak_ec),
    };
    let eps = policy.epsilon_pa.clamp(f64::MIN_POSITIVE, 1.0);
    let r = base - policy.leak_pe as f64 - policy.verify_bits as f64 - 2.0 * (1.0 / eps).log2();
    if r <= 0.0 {
        0
    } else {
        (r.floor() as usize).min(n - 1)
    }
}

fn check_input(seed: &ToeplitzSeed, input: &BitBlock) -> Result<()> {
    if input.len() != seed.n {
        return Err(Error::size("hash input", seed.n, input.len()));
    }
    Ok(())
}

/// 64 bits of `words` starting at bit `offset`.
#[inline]
fn word_at(words: &[u64], offset: usize) -> u64 {
    let (q, s) = (offset / 64, offset % 64);
    let lo = words.get(q).copied().unwrap_or(0);
    if s == 0 {
        lo
    } else {
        lo >> s | words.get(q + 1).copied().unwrap_or(0) << (64 - s)
    }
}

/// Bit-packed `T · input`: row `i` is a window of the reversed seed.
pub fn toeplitz_hash_direct(seed: &ToeplitzSeed, input: &BitBlock) -> Result<BitBlock> {
    check_input(seed, input)?;
    let (n, r) = (seed.n, seed.r);
    // rev[k] = seed[n + r - 2 - k]; row i covers rev[r - 1 - i .. r - 1 - i + n].
    let rev: BitBlock = (0..n + r - 1).rev().map(|k| seed.bits.get(k)).collect();
    let rw = rev.words();
    let x = input.words();
    let mut out = BitBlock::zeros(r);
    for i in 0..r {
        let start = r - 1 - i;
        let mut acc = 0u64;
        for (w, &xw) in x.iter().enumerate() {
            acc ^= word_at(rw, start + 64 * w) & xw;
        }
        if acc.count_ones() & 1 == 1 {
            out.set(i, true);
        }
    }
    Ok(out)
}

fn plan(len: usize) -> (Arc<dyn Fft<f64>>, Arc<dyn Fft<f64>>) {
    let mut planner = FftPlanner::new();
    (planner.plan_fft_forward(len), planner.plan_fft_inverse(len))
}

/// `T · input` through one complex FFT of both real sequences and one inverse.
pub fn toeplitz_hash_fft(seed: &ToeplitzSeed, input: &BitBlock) -> Result<BitBlock> {
    check_input(seed, input)?;
    let (n, r) = (seed.n, seed.r);
    let span = n + r - 1;
    if span > MAX_FFT_SPAN {
        return Err(Error::Config(format!(
            "toeplitz span {span} exceeds {MAX_FFT_SPAN}; split the input into parts"
        )));
    }
    // out_i = c[i + n - 1] with c the linear convolution of seed and input; a
    // cyclic length >= n + r - 1 leaves those indices unaliased.
    let len = span.next_power_of_two();
    let mut z = vec![Complex::new(0.0f64, 0.0); len];
    for (k, zk) in z.iter_mut().enumerate().take(span) {
        zk.re = seed.bits.get(k) as u8 as f64;
    }
    for (j, bit) in input.iter().enumerate() {
        z[j].im = bit as u8 as f64;
    }
    let (fwd, inv) = plan(len);
    fwd.process(&mut z);
    // Separate the two real spectra and multiply: A·B = (Z_k² - conj(Z_{-k})²) / 4i.
    let mut prod = vec![Complex::new(0.0, 0.0); len];
    for k in 0..len {
        let zk = z[k];
        let zm = z[(len - k) % len].conj();
        prod[k] = (zk * zk - zm * zm) * Complex::new(0.0, -0.25);
    }
    inv.process(&mut prod);
    let scale = 1.0 / len as f64;
    let mut out = BitBlock::zeros(r);
    let mut worst = 0.0f64;
    for i in 0..r {
        let v = prod[i + n - 1].re * scale;
        let rounded = v.round();
        worst = worst.max((v - rounded).abs());
        if (rounded as i64) & 1 == 1 {
            out.set(i, true);
        }
    }
    if worst > ROUNDING_GUARD {
        return Err(Error::Precision(worst));
    }
    Ok(out)
}

/// How the input is permuted before splitting.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Shuffle {
    Identity,
    Seeded(u64),
}

/// `[lo, hi)` of part `k` when `total` items are cut into `parts` near-equal runs.
fn part_range(total: usize, parts: usize, k: usize) -> std::ops::Range<usize> {
    total * k / parts..total * (k + 1) / parts
}

/// Shuffles the input, cuts it and the output into `parts` near-equal runs,
/// hashes each run with its own slice of the seed, and concatenates in part
/// order. Part `k` uses the next `n_k + r_k - 1` seed bits.
pub fn split_shuffle_merge(input: &BitBlock, seed: &ToeplitzSeed, parts: usize, shuffle: Shuffle) -> Result<BitBlock> {
    check_input(seed, input)?;
    let (n, r) = (seed.n, seed.r);
    if parts == 0 || parts > r || parts > n {
        return Err(Error::Config(format!("cannot split {n} -> {r} into {parts} parts")));
    }
    let permuted = match shuffle {
        Shuffle::Identity => input.clone(),
        Shuffle::Seeded(s) => {
            let mut order: Vec<usize> = (0..n).collect();
            order.shuffle(&mut rng::stream(s, "pa-shuffle"));
            input.select(&order)
        }
    };
    if parts == 1 {
        return toeplitz_hash_fft(seed, &permuted);
    }
    let mut jobs = Vec::with_capacity(parts);
    let mut offset = 0;
    for k in 0..parts {
        let ni = part_range(n, parts, k);
        let ri = part_range(r, parts, k);
        let (nk, rk) = (ni.len(), ri.len());
        let sub = ToeplitzSeed::new(nk, rk, seed.bits.slice(offset..offset + nk + rk - 1))?;
        offset += nk + rk - 1;
        jobs.push((sub, permuted.slice(ni)));
    }
    let outs: Vec<Result<BitBlock>> = std::thread::scope(|s| {
        let handles: Vec<_> = jobs
            .iter()
            .map(|(sub, chunk)| s.spawn(move || toeplitz_hash_fft(sub, chunk)))
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("sub-PA worker panicked"))
            .collect()
    });
    let mut out = BitBlock::zeros(0);
    for o in outs {
        out.extend(&o?);
    }
    Ok(out)
}

/// Smallest part count keeping every sub-hash within [`MAX_FFT_SPAN`].
pub fn parts_needed(n: usize, r: usize) -> usize {
    let mut parts = 1;
    while (n.div_ceil(parts) + r.div_ceil(parts)).saturating_sub(1) > MAX_FFT_SPAN {
        parts += 1;
    }
    parts
}

/// PA message: n u64, r u64, seed bit length u64, seed bytes, parts u32,
/// shuffle flag u8 and shuffle seed u64. Little-endian.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PaMessage {
    pub seed: ToeplitzSeed,
    pub parts: u32,
    pub shuffle: Shuffle,
}

impl PaMessage {
    pub fn encode(&self) -> Vec<u8> {
        let mut b = Vec::new();
        b.extend_from_slice(&(self.seed.n as u64).to_le_bytes());
        b.extend_from_slice(&(self.seed.r as u64).to_le_bytes());
        b.extend_from_slice(&(self.seed.bits.len() as u64).to_le_bytes());
        b.extend_from_slice(&self.seed.bits.to_bytes());
        b.extend_from_slice(&self.parts.to_le_bytes());
        match self.shuffle {
            Shuffle::Identity => b.extend_from_slice(&[0; 9]),
            Shuffle::Seeded(s) => {
                b.push(1);
                b.extend_from_slice(&s.to_le_bytes());
            }
        }
        b
    }

    pub fn decode(b: &[u8]) -> Result<Self> {
        let bad = || Error::Format("truncated PA message".into());
        let u64_at =
            |o: usize| -> Result<u64> { Ok(u64::from_le_bytes(b.get(o..o + 8).ok_or_else(bad)?.try_into().unwrap())) };
        let n = u64_at(0)? as usize;
        let r = u64_at(8)? as usize;
        let len = u64_at(16)? as usize;
        let nbytes = len.div_ceil(8);
        let bits = BitBlock::from_bytes(b.get(24..24 + nbytes).ok_or_else(bad)?, len);
        let o = 24 + nbytes;
        let parts = u32::from_le_bytes(b.get(o..o + 4).ok_or_else(bad)?.try_into().unwrap());
        let flag = *b.get(o + 4).ok_or_else(bad)?;
        let s = u64_at(o + 5)?;
        if b.len() != o + 13 {
            return Err(Error::Format("trailing bytes in PA message".into()));
        }
        Ok(PaMessage {
            seed: ToeplitzSeed::new(n, r, bits)?,
            parts,
            shuffle: if flag == 0 {
                Shuffle::Identity
            } else {
                Shuffle::Seeded(s)
            },
        })
    }

    pub fn apply(&self, input: &BitBlock) -> Result<BitBlock> {
        split_shuffle_merge(input, &self.seed, self.parts as usize, self.shuffle)
    }
}
