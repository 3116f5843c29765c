//! Post-correction verification: 16 chunks per block, each folded to 128 bits
//! and tagged; chunks whose tags disagree are dropped.
//!
//! One 256-bit key `r || s` serves a whole block. Chunk `i` of block `b` is
//! tagged as `poly(b || i || digest_i, r) + s mod 2^128`, so the block and
//! chunk indices act as nonces.

use subtle::ConstantTimeEq;

use crate::auth::{poly_hash, AuthEndpoint, FrameTransport, MessageType};
use crate::bits::BitBlock;
use crate::error::{Error, Result};

pub const CHUNKS: usize = 16;
pub const DIGEST_BITS: usize = 128;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ChunkDigest {
    pub chunk_index: usize,
    pub digest: u128,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct VerifyKey {
    pub r: u128,
    pub s: u128,
}

impl VerifyKey {
    pub fn from_bytes(b: &[u8; 32]) -> Self {
        VerifyKey {
            r: u128::from_le_bytes(b[..16].try_into().unwrap()),
            s: u128::from_le_bytes(b[16..].try_into().unwrap()),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct VerifyReport {
    pub per_chunk: [bool; CHUNKS],
    pub kept_bits: usize,
    pub discarded_chunks: Vec<usize>,
}

impl VerifyReport {
    pub fn from_mask(mask: u16, block_len: usize) -> Self {
        let per_chunk: [bool; CHUNKS] = std::array::from_fn(|i| mask >> i & 1 == 1);
        let kept_bits = (0..CHUNKS)
            .filter(|&i| per_chunk[i])
            .map(|i| chunk_range(block_len, i).len())
            .sum();
        VerifyReport {
            per_chunk,
            kept_bits,
            discarded_chunks: (0..CHUNKS).filter(|&i| !per_chunk[i]).collect(),
        }
    }

    pub fn mask(&self) -> u16 {
        self.per_chunk
            .iter()
            .enumerate()
            .fold(0, |m, (i, &ok)| m | (ok as u16) << i)
    }

    pub fn all_passed(&self) -> bool {
        self.discarded_chunks.is_empty()
    }

    /// Passing chunks of `block`, in order.
    pub fn kept(&self, block: &BitBlock) -> BitBlock {
        let mut out = BitBlock::zeros(0);
        for i in 0..CHUNKS {
            if self.per_chunk[i] {
                out.extend(&block.slice(chunk_range(block.len(), i)));
            }
        }
        out.with_index(block.index())
    }
}

/// Bits of chunk `i` when a block of `len` bits is cut into 16; the last
/// chunks are one bit shorter when `len` is not a multiple of 16.
pub fn chunk_range(len: usize, i: usize) -> std::ops::Range<usize> {
    len * i / CHUNKS..len * (i + 1) / CHUNKS
}

/// Halves and XORs until 128 bits remain. Inputs are zero-padded up to
/// `128 * 2^j` first.
pub fn xor_reduce(chunk: &BitBlock) -> Result<u128> {
    if chunk.is_empty() {
        return Err(Error::size("verification chunk", DIGEST_BITS, 0));
    }
    let padded = chunk.len().div_ceil(DIGEST_BITS).next_power_of_two() * DIGEST_BITS;
    let mut words = chunk.words().to_vec();
    words.resize(padded / 64, 0);
    while words.len() > 2 {
        let half = words.len() / 2;
        let (a, b) = words.split_at_mut(half);
        for (x, y) in a.iter_mut().zip(b.iter()) {
            *x ^= y;
        }
        words.truncate(half);
    }
    Ok(words[0] as u128 | (words[1] as u128) << 64)
}

pub fn chunk_digests(block: &BitBlock) -> Result<[ChunkDigest; CHUNKS]> {
    if block.len() < CHUNKS * DIGEST_BITS {
        return Err(Error::size("verified block", CHUNKS * DIGEST_BITS, block.len()));
    }
    let mut out = [ChunkDigest {
        chunk_index: 0,
        digest: 0,
    }; CHUNKS];
    for (i, d) in out.iter_mut().enumerate() {
        *d = ChunkDigest {
            chunk_index: i,
            digest: xor_reduce(&block.slice(chunk_range(block.len(), i)))?,
        };
    }
    Ok(out)
}

pub fn chunk_tag(digest: &ChunkDigest, key: &VerifyKey, block_index: u64) -> u128 {
    let mut msg = [0u8; 8 + 1 + 16];
    msg[..8].copy_from_slice(&block_index.to_le_bytes());
    msg[8] = digest.chunk_index as u8;
    msg[9..].copy_from_slice(&digest.digest.to_le_bytes());
    poly_hash(&msg, key.r).low.wrapping_add(key.s)
}

pub fn block_tags(block: &BitBlock, key: &VerifyKey) -> Result<[u128; CHUNKS]> {
    let d = chunk_digests(block)?;
    Ok(std::array::from_fn(|i| chunk_tag(&d[i], key, block.index())))
}

/// Bit `i` set iff tag `i` agrees. Every pair is compared in constant time.
pub fn compare_tags(ours: &[u128; CHUNKS], theirs: &[u128; CHUNKS]) -> u16 {
    let mut mask = 0u16;
    for i in 0..CHUNKS {
        let eq = ours[i].to_le_bytes().ct_eq(&theirs[i].to_le_bytes());
        mask |= (eq.unwrap_u8() as u16) << i;
    }
    mask
}

/// `block_index u32` followed by 16 tags of 16 bytes.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct VerifyMessage {
    pub block_index: u32,
    pub tags: [u128; CHUNKS],
}

impl VerifyMessage {
    pub fn encode(&self) -> Vec<u8> {
        let mut b = Vec::with_capacity(4 + 16 * CHUNKS);
        b.extend_from_slice(&self.block_index.to_le_bytes());
        for t in &self.tags {
            b.extend_from_slice(&t.to_le_bytes());
        }
        b
    }

    pub fn decode(b: &[u8]) -> Result<Self> {
        if b.len() != 4 + 16 * CHUNKS {
            return Err(Error::Format(format!("verification message of {} bytes", b.len())));
        }
        Ok(VerifyMessage {
            block_index: u32::from_le_bytes(b[..4].try_into().unwrap()),
            tags: std::array::from_fn(|i| u128::from_le_bytes(b[4 + 16 * i..20 + 16 * i].try_into().unwrap())),
        })
    }
}

/// Alice's side: send her tags, read Bob's pass mask.
pub fn send_tags<T: FrameTransport>(
    block: &BitBlock,
    key: &VerifyKey,
    ep: &mut AuthEndpoint<T>,
) -> Result<VerifyReport> {
    let msg = VerifyMessage {
        block_index: block.index() as u32,
        tags: block_tags(block, key)?,
    };
    ep.send(MessageType::VerifyTags, &msg.encode())?;
    let reply = ep.recv_expect(MessageType::VerifyReply)?;
    let mask = u16::from_le_bytes(
        reply
            .as_slice()
            .try_into()
            .map_err(|_| Error::Format("verification reply is not 2 bytes".into()))?,
    );
    Ok(VerifyReport::from_mask(mask, block.len()))
}

/// Bob's side: read Alice's tags, compare with his own, reply with the mask.
pub fn check_tags<T: FrameTransport>(
    corrected: &BitBlock,
    key: &VerifyKey,
    ep: &mut AuthEndpoint<T>,
) -> Result<VerifyReport> {
    let msg = VerifyMessage::decode(&ep.recv_expect(MessageType::VerifyTags)?)?;
    if msg.block_index != corrected.index() as u32 {
        return Err(Error::Format(format!(
            "tags for block {} while checking block {}",
            msg.block_index,
            corrected.index()
        )));
    }
    let mask = compare_tags(&block_tags(corrected, key)?, &msg.tags);
    ep.send(MessageType::VerifyReply, &mask.to_le_bytes())?;
    Ok(VerifyReport::from_mask(mask, corrected.len()))
}

/// Runs both sides over an in-process pair; returns Bob's report.
pub fn verify_key<T: FrameTransport>(
    alice_block: &BitBlock,
    corrected: &BitBlock,
    key: &VerifyKey,
    alice: &mut AuthEndpoint<T>,
    bob: &mut AuthEndpoint<T>,
) -> Result<VerifyReport> {
    let msg = VerifyMessage {
        block_index: alice_block.index() as u32,
        tags: block_tags(alice_block, key)?,
    };
    alice.send(MessageType::VerifyTags, &msg.encode())?;
    let report = check_tags(corrected, key, bob)?;
    let reply = alice.recv_expect(MessageType::VerifyReply)?;
    if reply != report.mask().to_le_bytes() {
        return Err(Error::Format("verification reply changed in transit".into()));
    }
    Ok(report)
}
