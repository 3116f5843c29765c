//! Timestamp alignment and basis sifting.
//!
//! Bob announces when he saw clicks (for COW, `floor(t/2)`) and one bit per
//! click: his basis, or for COW which detector fired. Alice aligns the times to
//! her slots, decides which clicks are kept, and replies with the offset and a
//! keep bit per click. Both sides then hold the same slot list.

use crate::bits::BitBlock;
use crate::chansim::{AliceRecords, DetectionRecord, PrepRecord, ProtocolKind};
use crate::error::{Error, Result};

pub const DEFAULT_WINDOW: u64 = 1000;
pub const DEFAULT_THRESHOLD: f64 = 0.8;
/// Slots of Alice's frame scanned for alignment.
pub const DEFAULT_ALIGN_SAMPLE: u64 = 1 << 18;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AlignmentResult {
    pub offset: i64,
    pub correlation: f64,
    pub accepted: bool,
}

#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct SiftedKey {
    pub bits: BitBlock,
    pub slot_refs: Vec<u64>,
}

impl SiftedKey {
    pub fn n_sift(&self) -> usize {
        self.bits.len()
    }

    fn push(&mut self, bit: bool, slot: u64) {
        self.bits.push(bit);
        self.slot_refs.push(slot);
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub struct SiftStats {
    pub n_q: usize,
    pub classical_bits_used: usize,
    /// Clicks with no matching Alice record at the aligned slot.
    pub out_of_range: usize,
    /// COW clicks discarded for landing on a decoy or the monitoring line.
    pub discarded_cow: usize,
}

/// Packed occupancy of `times` over `[start, start + len)`.
fn occupancy(times: &[u64], start: i64, len: usize) -> Vec<u64> {
    let mut w = vec![0u64; len.div_ceil(64) + 1];
    let lo = times.partition_point(|&t| (t as i64) < start);
    for &t in &times[lo..] {
        let k = t as i64 - start;
        if k >= len as i64 {
            break;
        }
        w[k as usize / 64] |= 1 << (k as usize % 64);
    }
    w
}

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

fn pearson(len: f64, sa: f64, sb: f64, sab: f64) -> f64 {
    let den = ((len * sa - sa * sa) * (len * sb - sb * sb)).sqrt();
    if den == 0.0 {
        return if sa == sb && sa == sab { 1.0 } else { 0.0 };
    }
    (len * sab - sa * sb) / den
}

/// As [`align`], scanning at most `sample` slots of Alice's frame.
pub fn align_sampled(
    alice_slots: &[u64],
    bob_times: &[u64],
    window: u64,
    threshold: f64,
    sample: u64,
) -> Result<AlignmentResult> {
    if alice_slots.is_empty() || bob_times.is_empty() {
        return Err(Error::Alignment { best: 0.0, threshold });
    }
    let start = alice_slots[0] as i64;
    let span = alice_slots[alice_slots.len() - 1] - alice_slots[0] + 1;
    let len = span.min(sample.max(1)) as usize;
    let w = window as i64;
    let a = occupancy(alice_slots, start, len);
    let b = occupancy(bob_times, start - w, len + 2 * window as usize);
    let words = len.div_ceil(64);
    let tail_mask = if len.is_multiple_of(64) {
        u64::MAX
    } else {
        (1u64 << (len % 64)) - 1
    };
    let sa: u32 = a.iter().map(|x| x.count_ones()).sum();

    let mut best = AlignmentResult {
        offset: 0,
        correlation: f64::NEG_INFINITY,
        accepted: false,
    };
    for d in -w..=w {
        let base = (d + w) as usize;
        let (mut sb, mut sab) = (0u32, 0u32);
        for k in 0..words {
            let mut bw = word_at(&b, base + 64 * k);
            if k == words - 1 {
                bw &= tail_mask;
            }
            sb += bw.count_ones();
            sab += (bw & a[k]).count_ones();
        }
        let c = pearson(len as f64, sa as f64, sb as f64, sab as f64);
        if c > best.correlation {
            best = AlignmentResult {
                offset: d,
                correlation: c,
                accepted: false,
            };
        }
    }
    best.accepted = best.correlation >= threshold;
    if !best.accepted {
        return Err(Error::Alignment {
            best: best.correlation,
            threshold,
        });
    }
    Ok(best)
}

/// Offset in `[-window, window]` maximizing the Pearson correlation between
/// Alice's slot occupancy and Bob's shifted click occupancy; ties go to the
/// lowest offset.
pub fn align(alice_slots: &[u64], bob_times: &[u64], window: u64, threshold: f64) -> Result<AlignmentResult> {
    align_sampled(alice_slots, bob_times, window, threshold, DEFAULT_ALIGN_SAMPLE)
}

/// Bob to Alice: click times (COW: half-slot times halved) and one bit per click.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Announcement {
    pub times: Vec<u64>,
    pub meta: BitBlock,
}

impl Announcement {
    pub fn from_detections(proto: ProtocolKind, bob: &[DetectionRecord]) -> Self {
        let times = match proto {
            ProtocolKind::Cow => bob.iter().map(|d| d.timestamp / 2).collect(),
            _ => bob.iter().map(|d| d.timestamp).collect(),
        };
        Announcement {
            times,
            meta: bob.iter().map(|d| d.meta_bit).collect(),
        }
    }

    /// Click times only: count u64 then u64 values.
    pub fn encode_times(&self) -> Vec<u8> {
        let mut b = Vec::with_capacity(8 + 8 * self.times.len());
        b.extend_from_slice(&(self.times.len() as u64).to_le_bytes());
        for t in &self.times {
            b.extend_from_slice(&t.to_le_bytes());
        }
        b
    }

    pub fn decode_times(b: &[u8]) -> Result<Vec<u64>> {
        let n = u64::from_le_bytes(
            b.get(..8)
                .ok_or_else(|| Error::Format("short timestamp message".into()))?
                .try_into()
                .unwrap(),
        ) as usize;
        if b.len() != 8 + 8 * n {
            return Err(Error::Format("timestamp message length".into()));
        }
        Ok(b[8..]
            .chunks_exact(8)
            .map(|c| u64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }
}

/// Alice to Bob: the offset she found and one keep bit per click.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SiftReply {
    pub offset: i64,
    pub keep: BitBlock,
}

impl SiftReply {
    pub fn encode(&self) -> Vec<u8> {
        let mut b = Vec::with_capacity(16 + self.keep.len().div_ceil(8));
        b.extend_from_slice(&self.offset.to_le_bytes());
        b.extend_from_slice(&(self.keep.len() as u64).to_le_bytes());
        b.extend_from_slice(&self.keep.to_bytes());
        b
    }

    pub fn decode(b: &[u8]) -> Result<Self> {
        let bad = || Error::Format("malformed sift reply".into());
        let offset = i64::from_le_bytes(b.get(..8).ok_or_else(bad)?.try_into().unwrap());
        let n = u64::from_le_bytes(b.get(8..16).ok_or_else(bad)?.try_into().unwrap()) as usize;
        let rest = b.get(16..).ok_or_else(bad)?;
        if rest.len() != n.div_ceil(8) {
            return Err(bad());
        }
        Ok(SiftReply {
            offset,
            keep: BitBlock::from_bytes(rest, n),
        })
    }
}

/// Packed bits: count u64 then bytes.
pub fn encode_bits(bits: &BitBlock) -> Vec<u8> {
    let mut b = (bits.len() as u64).to_le_bytes().to_vec();
    b.extend_from_slice(&bits.to_bytes());
    b
}

pub fn decode_bits(b: &[u8]) -> Result<BitBlock> {
    let bad = || Error::Format("malformed bit array".into());
    let n = u64::from_le_bytes(b.get(..8).ok_or_else(bad)?.try_into().unwrap()) as usize;
    if b.len() - 8 != n.div_ceil(8) {
        return Err(bad());
    }
    Ok(BitBlock::from_bytes(&b[8..], n))
}

/// Alice's record at a slot, by binary search over her ascending slots.
fn lookup<T>(records: &[T], slot: u64, key: impl Fn(&T) -> u64) -> Option<&T> {
    records.binary_search_by_key(&slot, key).ok().map(|i| &records[i])
}

/// Alice's half: decide which announced clicks are kept.
pub fn alice_sift(
    proto: ProtocolKind,
    alice: &AliceRecords,
    ann: &Announcement,
    offset: i64,
) -> Result<(SiftReply, SiftedKey, SiftStats)> {
    if ann.times.len() != ann.meta.len() {
        return Err(Error::size("announcement bits", ann.times.len(), ann.meta.len()));
    }
    let n_q = ann.times.len();
    let mut stats = SiftStats {
        n_q,
        classical_bits_used: match proto {
            ProtocolKind::Cow => n_q,
            _ => 2 * n_q,
        },
        ..Default::default()
    };
    let mut keep = BitBlock::zeros(n_q);
    let mut key = SiftedKey::default();
    for (i, &t) in ann.times.iter().enumerate() {
        let slot = t as i64 - offset;
        let meta = ann.meta.get(i);
        let found = if slot < 0 {
            None
        } else {
            let slot = slot as u64;
            match (proto, alice) {
                (ProtocolKind::Cow, AliceRecords::Prepared(p)) => lookup(p, slot, |r: &PrepRecord| r.slot_index)
                    .map(|r| (!r.basis_or_decoy && !meta, r.key_bit, slot)),
                (ProtocolKind::Bb84, AliceRecords::Prepared(p)) => {
                    lookup(p, slot, |r: &PrepRecord| r.slot_index).map(|r| (r.basis_or_decoy == meta, r.key_bit, slot))
                }
                (ProtocolKind::Bbm92, AliceRecords::Detected(d)) => lookup(d, slot, |r: &DetectionRecord| r.timestamp)
                    .map(|r| (r.meta_bit == meta, r.outcome_bit, slot)),
                _ => return Err(Error::Config(format!("{proto} cannot sift these Alice records"))),
            }
        };
        match found {
            None => stats.out_of_range += 1,
            Some((true, bit, slot)) => {
                keep.set(i, true);
                key.push(bit, slot);
            }
            Some((false, ..)) => {
                if proto == ProtocolKind::Cow {
                    stats.discarded_cow += 1;
                }
            }
        }
    }
    Ok((SiftReply { offset, keep }, key, stats))
}

/// Bob's half: keep the clicks Alice marked.
pub fn bob_sift(proto: ProtocolKind, bob: &[DetectionRecord], reply: &SiftReply) -> Result<SiftedKey> {
    if reply.keep.len() != bob.len() {
        return Err(Error::size("sift reply", bob.len(), reply.keep.len()));
    }
    let mut key = SiftedKey::default();
    for (i, d) in bob.iter().enumerate() {
        if reply.keep.get(i) {
            let t = if proto == ProtocolKind::Cow {
                d.timestamp / 2
            } else {
                d.timestamp
            };
            let bit = if proto == ProtocolKind::Cow {
                d.timestamp & 1 == 1
            } else {
                d.outcome_bit
            };
            key.push(bit, (t as i64 - reply.offset) as u64);
        }
    }
    Ok(key)
}

fn sift(
    proto: ProtocolKind,
    alice: AliceRecords,
    bob: &[DetectionRecord],
    offset: i64,
) -> Result<(SiftedKey, SiftedKey, SiftStats)> {
    let ann = Announcement::from_detections(proto, bob);
    let (reply, a, stats) = alice_sift(proto, &alice, &ann, offset)?;
    let b = bob_sift(proto, bob, &reply)?;
    Ok((a, b, stats))
}

pub fn sift_bb84(
    alice: &[PrepRecord],
    bob: &[DetectionRecord],
    offset: i64,
) -> Result<(SiftedKey, SiftedKey, SiftStats)> {
    sift(ProtocolKind::Bb84, AliceRecords::Prepared(alice.to_vec()), bob, offset)
}

pub fn sift_cow(
    alice: &[PrepRecord],
    bob: &[DetectionRecord],
    offset: i64,
) -> Result<(SiftedKey, SiftedKey, SiftStats)> {
    sift(ProtocolKind::Cow, AliceRecords::Prepared(alice.to_vec()), bob, offset)
}

pub fn sift_bbm92(
    alice: &[DetectionRecord],
    bob: &[DetectionRecord],
    offset: i64,
) -> Result<(SiftedKey, SiftedKey, SiftStats)> {
    sift(ProtocolKind::Bbm92, AliceRecords::Detected(alice.to_vec()), bob, offset)
}
