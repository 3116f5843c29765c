//! Key files and the local key store.
//!
//! A key file is `"QKDK"`, version u16, config fingerprint u64, bit length u64
//! and the packed bits. The store keeps appended key in a data file and every
//! append or consume as one JSON line in a ledger beside it; bits leave the
//! store first-in first-out, so replaying the ledger gives the read position.

use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::bits::BitBlock;
use crate::error::{Error, Result};

pub const KEY_MAGIC: &[u8; 4] = b"QKDK";
pub const KEY_VERSION: u16 = 1;

/// FNV-1a over the bytes; ties key files to the exact configuration.
pub fn fingerprint(data: &[u8]) -> u64 {
    data.iter().fold(0xcbf2_9ce4_8422_2325u64, |h, &b| {
        (h ^ b as u64).wrapping_mul(0x0100_0000_01b3)
    })
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct KeyFile {
    pub fingerprint: u64,
    pub key: BitBlock,
}

impl KeyFile {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut b = Vec::with_capacity(22 + self.key.len().div_ceil(8));
        b.extend_from_slice(KEY_MAGIC);
        b.extend_from_slice(&KEY_VERSION.to_le_bytes());
        b.extend_from_slice(&self.fingerprint.to_le_bytes());
        b.extend_from_slice(&(self.key.len() as u64).to_le_bytes());
        b.extend_from_slice(&self.key.to_bytes());
        b
    }

    pub fn from_bytes(b: &[u8]) -> Result<Self> {
        if b.len() < 22 || &b[..4] != KEY_MAGIC {
            return Err(Error::Format("not a key file".into()));
        }
        let version = u16::from_le_bytes([b[4], b[5]]);
        if version != KEY_VERSION {
            return Err(Error::Format(format!("key file version {version}")));
        }
        let fingerprint = u64::from_le_bytes(b[6..14].try_into().unwrap());
        let n = u64::from_le_bytes(b[14..22].try_into().unwrap()) as usize;
        if b.len() != 22 + n.div_ceil(8) {
            return Err(Error::Format("key file length".into()));
        }
        Ok(KeyFile {
            fingerprint,
            key: BitBlock::from_bytes(&b[22..], n),
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LedgerOp {
    Append,
    Consume,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LedgerEntry {
    pub seq: u64,
    pub op: LedgerOp,
    pub bits: u64,
    pub label: String,
    pub balance: u64,
}

/// Appended and consumed totals implied by a ledger; errors on any entry
/// whose recorded balance disagrees.
pub fn replay(entries: &[LedgerEntry]) -> Result<(u64, u64)> {
    let (mut appended, mut consumed) = (0u64, 0u64);
    for (i, e) in entries.iter().enumerate() {
        if e.seq != i as u64 {
            return Err(Error::Format(format!("ledger entry {i} has sequence {}", e.seq)));
        }
        match e.op {
            LedgerOp::Append => appended += e.bits,
            LedgerOp::Consume => {
                consumed += e.bits;
                if consumed > appended {
                    return Err(Error::Format(format!("ledger entry {i} overdraws the store")));
                }
            }
        }
        if appended - consumed != e.balance {
            return Err(Error::Format(format!(
                "ledger entry {i} balance {} != {}",
                e.balance,
                appended - consumed
            )));
        }
    }
    Ok((appended, consumed))
}

pub struct KeyStore {
    data: PathBuf,
    ledger: PathBuf,
    entries: Vec<LedgerEntry>,
    appended: u64,
    consumed: u64,
}

impl KeyStore {
    /// Opens or creates the store at `path` (ledger at `path.ledger`).
    pub fn open(path: &Path) -> Result<Self> {
        let data = path.to_path_buf();
        let mut ledger = path.as_os_str().to_owned();
        ledger.push(".ledger");
        let ledger = PathBuf::from(ledger);
        let entries = if ledger.exists() {
            BufReader::new(File::open(&ledger)?)
                .lines()
                .map(|l| serde_json::from_str(&l?).map_err(|e| Error::Format(format!("ledger: {e}"))))
                .collect::<Result<Vec<LedgerEntry>>>()?
        } else {
            Vec::new()
        };
        let (appended, consumed) = replay(&entries)?;
        let store = KeyStore {
            data,
            ledger,
            entries,
            appended,
            consumed,
        };
        let stored = store.read_all()?.len() as u64;
        if stored != appended {
            return Err(Error::Format(format!(
                "store holds {stored} bits, ledger says {appended}"
            )));
        }
        Ok(store)
    }

    pub fn balance(&self) -> u64 {
        self.appended - self.consumed
    }

    pub fn entries(&self) -> &[LedgerEntry] {
        &self.entries
    }

    /// Every bit ever appended: records of bit length u64 then packed bits.
    fn read_all(&self) -> Result<BitBlock> {
        let mut out = BitBlock::zeros(0);
        if !self.data.exists() {
            return Ok(out);
        }
        let mut raw = Vec::new();
        File::open(&self.data)?.read_to_end(&mut raw)?;
        let mut at = 0;
        while at < raw.len() {
            let n = u64::from_le_bytes(
                raw.get(at..at + 8)
                    .ok_or_else(|| Error::Format("truncated key store".into()))?
                    .try_into()
                    .unwrap(),
            ) as usize;
            let bytes = raw
                .get(at + 8..at + 8 + n.div_ceil(8))
                .ok_or_else(|| Error::Format("truncated key store".into()))?;
            out.extend(&BitBlock::from_bytes(bytes, n));
            at += 8 + n.div_ceil(8);
        }
        Ok(out)
    }

    fn log(&mut self, op: LedgerOp, bits: u64, label: &str) -> Result<()> {
        let e = LedgerEntry {
            seq: self.entries.len() as u64,
            op,
            bits,
            label: label.into(),
            balance: self.balance(),
        };
        let mut f = OpenOptions::new().create(true).append(true).open(&self.ledger)?;
        writeln!(f, "{}", serde_json::to_string(&e).expect("ledger entry serializes"))?;
        self.entries.push(e);
        Ok(())
    }

    pub fn append(&mut self, key: &BitBlock, label: &str) -> Result<()> {
        let mut f = OpenOptions::new().create(true).append(true).open(&self.data)?;
        f.write_all(&(key.len() as u64).to_le_bytes())?;
        f.write_all(&key.to_bytes())?;
        self.appended += key.len() as u64;
        self.log(LedgerOp::Append, key.len() as u64, label)
    }

    /// The oldest `n` unconsumed bits.
    pub fn consume(&mut self, n: usize, label: &str) -> Result<BitBlock> {
        if n as u64 > self.balance() {
            return Err(Error::KeyExhausted {
                needed: n,
                available: self.balance() as usize,
            });
        }
        let start = self.consumed as usize;
        let bits = self.read_all()?.slice(start..start + n);
        self.consumed += n as u64;
        self.log(LedgerOp::Consume, n as u64, label)?;
        Ok(bits)
    }
}
