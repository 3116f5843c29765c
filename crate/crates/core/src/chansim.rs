//! Statistical stand-in for the optical link.
//!
//! Alice emits in a sparse subset of time slots; each pulse survives with
//! probability `transmissivity * detector_efficiency` and is stamped at
//! `slot + clock_offset` (plus jitter) in Bob's clock. Surviving bits flip with
//! `flip_probability`. COW timestamps count half-slots: the time bin of a
//! data-line click is the key bit.

use std::io::{Read, Write};
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::bits::BitBlock;
use crate::error::{Error, Result};
use crate::rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProtocolKind {
    Bb84,
    Bbm92,
    Cow,
}

impl ProtocolKind {
    pub fn name(self) -> &'static str {
        match self {
            ProtocolKind::Bb84 => "bb84",
            ProtocolKind::Bbm92 => "bbm92",
            ProtocolKind::Cow => "cow",
        }
    }

    fn code(self) -> u8 {
        self as u8
    }

    fn from_code(c: u8) -> Result<Self> {
        match c {
            0 => Ok(ProtocolKind::Bb84),
            1 => Ok(ProtocolKind::Bbm92),
            2 => Ok(ProtocolKind::Cow),
            _ => Err(Error::Format(format!("unknown protocol code {c}"))),
        }
    }
}

impl std::str::FromStr for ProtocolKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "bb84" => Ok(ProtocolKind::Bb84),
            "bbm92" => Ok(ProtocolKind::Bbm92),
            "cow" => Ok(ProtocolKind::Cow),
            _ => Err(Error::Config(format!("unknown protocol {s:?}"))),
        }
    }
}

impl std::fmt::Display for ProtocolKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// What Alice prepared in one slot. For COW `basis_or_decoy` marks a decoy.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PrepRecord {
    pub slot_index: u64,
    pub key_bit: bool,
    pub basis_or_decoy: bool,
}

/// One click. For COW `meta_bit` is set when the monitoring detector fired.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct DetectionRecord {
    pub timestamp: u64,
    pub outcome_bit: bool,
    pub meta_bit: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChannelParams {
    pub transmissivity: f64,
    pub detector_efficiency: f64,
    pub flip_probability: f64,
    pub clock_offset: u64,
    pub seed: u64,
    /// Chance that a slot carries a pulse; keeps slot occupancy sparse enough
    /// for timestamp correlation to stand out.
    pub emission_probability: f64,
    /// Extra delay drawn uniformly from `0..=jitter` per click.
    pub jitter: u64,
    /// Per-slot probability of a spurious click.
    pub dark_count_probability: f64,
    /// COW: fraction of pulses that are decoys.
    pub decoy_fraction: f64,
    /// COW: fraction of clicks routed to the monitoring line.
    pub monitor_fraction: f64,
}

impl Default for ChannelParams {
    fn default() -> Self {
        ChannelParams {
            transmissivity: 0.7,
            detector_efficiency: 1.0,
            flip_probability: 0.0,
            clock_offset: 0,
            seed: 1,
            emission_probability: 0.1,
            jitter: 0,
            dark_count_probability: 0.0,
            decoy_fraction: 0.1,
            monitor_fraction: 0.1,
        }
    }
}

impl ChannelParams {
    pub fn validate(&self) -> Result<()> {
        let mut bad = Vec::new();
        let open_closed = |v: f64| v > 0.0 && v <= 1.0;
        if !open_closed(self.transmissivity) {
            bad.push(format!("transmissivity {} not in (0, 1]", self.transmissivity));
        }
        if !open_closed(self.detector_efficiency) {
            bad.push(format!(
                "detector_efficiency {} not in (0, 1]",
                self.detector_efficiency
            ));
        }
        if !(0.0..0.5).contains(&self.flip_probability) {
            bad.push(format!("flip_probability {} not in [0, 0.5)", self.flip_probability));
        }
        if !open_closed(self.emission_probability) {
            bad.push(format!(
                "emission_probability {} not in (0, 1]",
                self.emission_probability
            ));
        }
        for (name, v) in [
            ("dark_count_probability", self.dark_count_probability),
            ("decoy_fraction", self.decoy_fraction),
            ("monitor_fraction", self.monitor_fraction),
        ] {
            if !(0.0..1.0).contains(&v) {
                bad.push(format!("{name} {v} not in [0, 1)"));
            }
        }
        if bad.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(bad.join("; ")))
        }
    }

    /// Probability that an emitted pulse produces a click at Bob.
    pub fn detection_probability(&self) -> f64 {
        self.transmissivity * self.detector_efficiency
    }
}

/// Alice's side of a session: prepared states, or her own clicks for BBM92.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum AliceRecords {
    Prepared(Vec<PrepRecord>),
    Detected(Vec<DetectionRecord>),
}

impl AliceRecords {
    pub fn len(&self) -> usize {
        match self {
            AliceRecords::Prepared(v) => v.len(),
            AliceRecords::Detected(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Slot of every record, ascending.
    pub fn slots(&self) -> Vec<u64> {
        match self {
            AliceRecords::Prepared(v) => v.iter().map(|r| r.slot_index).collect(),
            AliceRecords::Detected(v) => v.iter().map(|r| r.timestamp).collect(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Session {
    pub protocol: ProtocolKind,
    pub alice: AliceRecords,
    pub bob: Vec<DetectionRecord>,
}

/// Reproducible pseudorandom bits.
pub fn deterministic_rng(seed: u64, n: usize) -> BitBlock {
    BitBlock::random(n, &mut rng::stream(seed, "trng"))
}

/// Slots `0, 1, 2, ...` thinned to density `p` by geometric gaps.
struct SlotClock {
    next: u64,
    ln_q: f64,
}

impl SlotClock {
    fn new(p: f64) -> Self {
        SlotClock {
            next: 0,
            ln_q: (1.0 - p).ln(),
        }
    }

    fn advance(&mut self, r: &mut impl Rng) -> u64 {
        let gap = if self.ln_q == f64::NEG_INFINITY || self.ln_q == 0.0 {
            0
        } else {
            let u: f64 = r.gen_range(f64::MIN_POSITIVE..1.0);
            (u.ln() / self.ln_q).floor() as u64
        };
        let slot = self.next + gap;
        self.next = slot + 1;
        slot
    }
}

/// Inserts dark clicks over `[0, horizon)` and restores strict time order;
/// of two clicks on one timestamp the earlier-generated one wins.
fn add_darks_and_sort(
    mut clicks: Vec<DetectionRecord>,
    p_dark: f64,
    horizon: u64,
    r: &mut impl Rng,
) -> Vec<DetectionRecord> {
    if p_dark > 0.0 {
        let mut clock = SlotClock::new(p_dark);
        loop {
            let t = clock.advance(r);
            if t >= horizon {
                break;
            }
            clicks.push(DetectionRecord {
                timestamp: t,
                outcome_bit: r.gen(),
                meta_bit: r.gen(),
            });
        }
    }
    clicks.sort_by_key(|d| d.timestamp);
    clicks.dedup_by_key(|d| d.timestamp);
    clicks
}

pub fn simulate_session(proto: ProtocolKind, n_pulses: usize, params: &ChannelParams) -> Result<Session> {
    params.validate()?;
    if n_pulses == 0 {
        return Err(Error::Config("n_pulses must be at least 1".into()));
    }
    let mut r = rng::stream(params.seed, proto.name());
    let mut clock = SlotClock::new(params.emission_probability);
    let eta = params.detection_probability();
    let q = params.flip_probability;
    let jitter = |r: &mut rng::StreamRng| {
        if params.jitter == 0 {
            0
        } else {
            r.gen_range(0..=params.jitter)
        }
    };

    let mut bob = Vec::with_capacity((n_pulses as f64 * eta * 1.05) as usize + 16);
    let alice = match proto {
        ProtocolKind::Bb84 => {
            let mut prep = Vec::with_capacity(n_pulses);
            for _ in 0..n_pulses {
                let slot = clock.advance(&mut r);
                let key_bit: bool = r.gen();
                let basis: bool = r.gen();
                prep.push(PrepRecord {
                    slot_index: slot,
                    key_bit,
                    basis_or_decoy: basis,
                });
                if r.gen_bool(eta) {
                    let bob_basis: bool = r.gen();
                    let outcome = if bob_basis == basis {
                        key_bit ^ r.gen_bool(q)
                    } else {
                        r.gen()
                    };
                    bob.push(DetectionRecord {
                        timestamp: slot + params.clock_offset + jitter(&mut r),
                        outcome_bit: outcome,
                        meta_bit: bob_basis,
                    });
                }
            }
            AliceRecords::Prepared(prep)
        }
        ProtocolKind::Bbm92 => {
            // Pair source: each side detects its photon independently; Alice's
            // detector loss is folded into `detector_efficiency`.
            let mut own = Vec::with_capacity(n_pulses);
            for _ in 0..n_pulses {
                let slot = clock.advance(&mut r);
                let alice_hit = r.gen_bool(params.detector_efficiency);
                let bob_hit = r.gen_bool(eta);
                let a_basis: bool = r.gen();
                let a_bit: bool = r.gen();
                if alice_hit {
                    own.push(DetectionRecord {
                        timestamp: slot,
                        outcome_bit: a_bit,
                        meta_bit: a_basis,
                    });
                }
                if bob_hit {
                    let b_basis: bool = r.gen();
                    let outcome = if b_basis == a_basis {
                        a_bit ^ r.gen_bool(q)
                    } else {
                        r.gen()
                    };
                    bob.push(DetectionRecord {
                        timestamp: slot + params.clock_offset + jitter(&mut r),
                        outcome_bit: outcome,
                        meta_bit: b_basis,
                    });
                }
            }
            AliceRecords::Detected(own)
        }
        ProtocolKind::Cow => {
            let mut prep = Vec::with_capacity(n_pulses);
            for _ in 0..n_pulses {
                let slot = clock.advance(&mut r);
                let key_bit: bool = r.gen();
                let decoy = r.gen_bool(params.decoy_fraction);
                prep.push(PrepRecord {
                    slot_index: slot,
                    key_bit,
                    basis_or_decoy: decoy,
                });
                if r.gen_bool(eta) {
                    let monitor = r.gen_bool(params.monitor_fraction);
                    // Decoys light both bins, so the data line sees either.
                    let bin = if decoy { r.gen() } else { key_bit ^ r.gen_bool(q) };
                    bob.push(DetectionRecord {
                        timestamp: 2 * (slot + params.clock_offset + jitter(&mut r)) + bin as u64,
                        outcome_bit: bin,
                        meta_bit: monitor,
                    });
                }
            }
            AliceRecords::Prepared(prep)
        }
    };
    let scale = if proto == ProtocolKind::Cow { 2 } else { 1 };
    let horizon = (clock.next + params.clock_offset + params.jitter + 1) * scale;
    let mut bob = add_darks_and_sort(bob, params.dark_count_probability, horizon, &mut r);
    if proto == ProtocolKind::Cow {
        for d in &mut bob {
            d.outcome_bit = d.timestamp & 1 == 1;
        }
    }
    Ok(Session {
        protocol: proto,
        alice,
        bob,
    })
}

pub const SESSION_MAGIC: &[u8; 4] = b"QKDS";
pub const SESSION_VERSION: u16 = 1;

impl Session {
    /// `"QKDS"`, version u16, protocol u8, Alice's record kind u8 (0 prepared,
    /// 1 detected), then u64-count-prefixed arrays of Alice's and Bob's
    /// records. Each record is a u64 then two u8 fields, in declaration order.
    pub fn write_to(&self, w: &mut impl Write) -> Result<()> {
        w.write_all(SESSION_MAGIC)?;
        w.write_all(&SESSION_VERSION.to_le_bytes())?;
        w.write_all(&[self.protocol.code()])?;
        let rec = |w: &mut dyn Write, a: u64, b: bool, c: bool| -> std::io::Result<()> {
            w.write_all(&a.to_le_bytes())?;
            w.write_all(&[b as u8, c as u8])
        };
        match &self.alice {
            AliceRecords::Prepared(v) => {
                w.write_all(&[0])?;
                w.write_all(&(v.len() as u64).to_le_bytes())?;
                for p in v {
                    rec(w, p.slot_index, p.key_bit, p.basis_or_decoy)?;
                }
            }
            AliceRecords::Detected(v) => {
                w.write_all(&[1])?;
                w.write_all(&(v.len() as u64).to_le_bytes())?;
                for d in v {
                    rec(w, d.timestamp, d.outcome_bit, d.meta_bit)?;
                }
            }
        }
        w.write_all(&(self.bob.len() as u64).to_le_bytes())?;
        for d in &self.bob {
            rec(w, d.timestamp, d.outcome_bit, d.meta_bit)?;
        }
        Ok(())
    }

    pub fn read_from(r: &mut impl Read) -> Result<Self> {
        let mut head = [0u8; 8];
        r.read_exact(&mut head)?;
        if &head[..4] != SESSION_MAGIC {
            return Err(Error::Format("not a QKDS session file".into()));
        }
        let version = u16::from_le_bytes([head[4], head[5]]);
        if version != SESSION_VERSION {
            return Err(Error::Format(format!("session file version {version}")));
        }
        let protocol = ProtocolKind::from_code(head[6])?;
        let kind = head[7];
        let read_array = |r: &mut dyn Read| -> Result<Vec<(u64, bool, bool)>> {
            let mut n = [0u8; 8];
            r.read_exact(&mut n)?;
            let n = u64::from_le_bytes(n) as usize;
            let mut buf = vec![0u8; n.checked_mul(10).ok_or_else(|| Error::Format("record count".into()))?];
            r.read_exact(&mut buf)?;
            Ok(buf
                .chunks_exact(10)
                .map(|c| (u64::from_le_bytes(c[..8].try_into().unwrap()), c[8] != 0, c[9] != 0))
                .collect())
        };
        let a = read_array(r)?;
        let alice = match kind {
            0 => AliceRecords::Prepared(
                a.into_iter()
                    .map(|(s, k, b)| PrepRecord {
                        slot_index: s,
                        key_bit: k,
                        basis_or_decoy: b,
                    })
                    .collect(),
            ),
            1 => AliceRecords::Detected(a.into_iter().map(det).collect()),
            _ => return Err(Error::Format(format!("unknown record kind {kind}"))),
        };
        let bob = read_array(r)?.into_iter().map(det).collect();
        Ok(Session { protocol, alice, bob })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::read_from(&mut std::io::BufReader::new(std::fs::File::open(path)?))
    }
}

fn det((t, o, m): (u64, bool, bool)) -> DetectionRecord {
    DetectionRecord {
        timestamp: t,
        outcome_bit: o,
        meta_bit: m,
    }
}
