//! QBER estimation from a random sample, with a Hoeffding penalty.

use rand::seq::index;

use crate::bits::BitBlock;
use crate::error::{Error, Result};
use crate::rng;

pub const DEFAULT_SAMPLE_FRACTION: f64 = 0.05;
pub const DEFAULT_EPSILON_PE: f64 = 1e-10;
pub const DEFAULT_ABORT_THRESHOLD: f64 = 0.25;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QberEstimate {
    pub sample_size: usize,
    pub errors_found: usize,
    pub qber_hat: f64,
    pub delta: f64,
    pub qber_bound: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Decision {
    Proceed,
    Abort,
}

/// `floor(n_sift * fraction)` distinct indices, ascending.
pub fn sample_indices(n_sift: usize, fraction: f64, seed: u64) -> Result<Vec<usize>> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::Config(format!("sample fraction {fraction} not in (0, 1)")));
    }
    let k = (n_sift as f64 * fraction).floor() as usize;
    let mut v = index::sample(&mut rng::stream(seed, "pe-sample"), n_sift, k).into_vec();
    v.sort_unstable();
    Ok(v)
}

/// `sqrt(ln(1/eps) / 2N)`.
pub fn hoeffding_delta(n: usize, epsilon_pe: f64) -> f64 {
    ((1.0 / epsilon_pe).ln() / (2.0 * n as f64)).sqrt()
}

pub fn estimate_qber(alice_sample: &BitBlock, bob_sample: &BitBlock, epsilon_pe: f64) -> Result<QberEstimate> {
    if alice_sample.len() != bob_sample.len() {
        return Err(Error::size("bob sample", alice_sample.len(), bob_sample.len()));
    }
    estimate_from_count(
        alice_sample.len(),
        alice_sample.hamming_distance(bob_sample),
        epsilon_pe,
    )
}

/// The estimate for the side that only learns how many sampled bits differed.
pub fn estimate_from_count(sample_size: usize, errors: usize, epsilon_pe: f64) -> Result<QberEstimate> {
    if sample_size == 0 {
        return Err(Error::EmptySample);
    }
    if !(epsilon_pe > 0.0 && epsilon_pe < 1.0) {
        return Err(Error::Config(format!("epsilon_pe {epsilon_pe} not in (0, 1)")));
    }
    if errors > sample_size {
        return Err(Error::Format(format!("{errors} errors in a sample of {sample_size}")));
    }
    let qber_hat = errors as f64 / sample_size as f64;
    let delta = hoeffding_delta(sample_size, epsilon_pe);
    Ok(QberEstimate {
        sample_size,
        errors_found: errors,
        qber_hat,
        delta,
        qber_bound: qber_hat + delta,
    })
}

/// Abort iff the bound exceeds the threshold; equality proceeds.
pub fn abort_check(est: &QberEstimate, threshold: f64) -> Decision {
    if est.qber_bound > threshold {
        Decision::Abort
    } else {
        Decision::Proceed
    }
}

/// Removes the sampled positions; `indices` must be ascending.
pub fn remove_sampled(key: &BitBlock, indices: &[usize]) -> BitBlock {
    let mut out = BitBlock::zeros(0);
    let mut next = indices.iter().peekable();
    for (i, bit) in key.iter().enumerate() {
        if next.peek() == Some(&&i) {
            next.next();
        } else {
            out.push(bit);
        }
    }
    out
}

/// Sampled positions and the sender's bits at them: count u32, indices as
/// u32 gaps from the previous index (the first from zero), then packed bits.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Disclosure {
    pub indices: Vec<usize>,
    pub bits: BitBlock,
}

impl Disclosure {
    pub fn encode(&self) -> Vec<u8> {
        let mut b = Vec::with_capacity(4 + 4 * self.indices.len() + self.bits.len().div_ceil(8));
        b.extend_from_slice(&(self.indices.len() as u32).to_le_bytes());
        let mut prev = 0usize;
        for &i in &self.indices {
            b.extend_from_slice(&((i - prev) as u32).to_le_bytes());
            prev = i;
        }
        b.extend_from_slice(&self.bits.to_bytes());
        b
    }

    pub fn decode(b: &[u8]) -> Result<Self> {
        let bad = || Error::Format("truncated disclosure message".into());
        let k = u32::from_le_bytes(b.get(..4).ok_or_else(bad)?.try_into().unwrap()) as usize;
        let body = b.get(4..4 + 4 * k).ok_or_else(bad)?;
        let mut indices = Vec::with_capacity(k);
        let mut prev = 0usize;
        for c in body.chunks_exact(4) {
            prev += u32::from_le_bytes(c.try_into().unwrap()) as usize;
            indices.push(prev);
        }
        let bits = b.get(4 + 4 * k..).ok_or_else(bad)?;
        if bits.len() != k.div_ceil(8) {
            return Err(bad());
        }
        Ok(Disclosure {
            indices,
            bits: BitBlock::from_bytes(bits, k),
        })
    }
}
