//! Rate adaptation by shortening and puncturing, and the QBER → code table.
//!
//! The default code puts its redundancy in trailing degree-one columns, one per
//! extension check. Puncturing such a column makes its check carry no
//! information, so puncturing the last `f` of them leaves an effective
//! `(m - f) x (n - f)` code. Shortened columns are known zeros taken from the
//! front of the matrix.

use std::fmt::Write as _;

use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::ldpc::matrix::ParityCheckMatrix;
use crate::rng;

#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct RateAdaptation {
    pub shortened: Vec<usize>,
    pub punctured: Vec<usize>,
}

impl RateAdaptation {
    pub fn none() -> Self {
        RateAdaptation::default()
    }

    /// Reduction factor: shortened plus punctured positions.
    pub fn f(&self) -> usize {
        self.shortened.len() + self.punctured.len()
    }

    /// Syndrome bits that carry information about the key.
    pub fn disclosed_bits(&self, m: usize) -> usize {
        m - self.punctured.len()
    }

    /// Key bits one codeword carries (neither shortened nor punctured).
    pub fn payload_bits(&self, n: usize) -> usize {
        n - self.f()
    }

    /// `(rows, cols)` of the effective code.
    pub fn effective_dims(&self, m: usize, n: usize) -> (usize, usize) {
        (m - self.punctured.len(), n - self.f())
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        let mut mark = vec![0u8; n];
        for &c in self.shortened.iter().chain(&self.punctured) {
            if c >= n {
                return Err(Error::Config(format!("rate-adaptation column {c} >= n={n}")));
            }
            mark[c] += 1;
            if mark[c] > 1 {
                return Err(Error::Config(format!(
                    "column {c} both shortened and punctured (or listed twice)"
                )));
            }
        }
        Ok(())
    }

    /// Columns neither shortened nor punctured, ascending: where key bits go.
    pub fn payload_columns(&self, n: usize) -> Vec<usize> {
        let mut mark = vec![false; n];
        for &c in self.shortened.iter().chain(&self.punctured) {
            mark[c] = true;
        }
        (0..n).filter(|&c| !mark[c]).collect()
    }

    /// Columns that are not shortened, ascending: the decoder's word layout.
    pub fn unshortened_columns(&self, n: usize) -> Vec<usize> {
        let mut mark = vec![false; n];
        for &c in &self.shortened {
            mark[c] = true;
        }
        (0..n).filter(|&c| !mark[c]).collect()
    }
}

/// Deterministic orderings both parties derive from a shared seed.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AdaptationPattern {
    puncture_order: Vec<usize>,
    shorten_order: Vec<usize>,
}

impl AdaptationPattern {
    /// Puncture from the last base column backwards, shorten from the first forwards;
    /// within each lifted block the order is a seeded permutation.
    pub fn derive(h: &ParityCheckMatrix, seed: u64) -> Self {
        let z = h.lift().max(1);
        let blocks = h.n() / z;
        let mut rng = rng::stream(seed, "rate-pattern");
        let mut perms: Vec<Vec<usize>> = (0..blocks)
            .map(|b| {
                let mut v: Vec<usize> = (b * z..(b + 1) * z).collect();
                v.shuffle(&mut rng);
                v
            })
            .collect();
        let tail: Vec<usize> = (blocks * z..h.n()).collect();
        let shorten_order: Vec<usize> = perms.iter().flatten().copied().chain(tail.iter().copied()).collect();
        perms.reverse();
        let puncture_order: Vec<usize> = tail.iter().rev().copied().chain(perms.into_iter().flatten()).collect();
        AdaptationPattern {
            puncture_order,
            shorten_order,
        }
    }

    pub fn adaptation(&self, shortened: usize, punctured: usize) -> Result<RateAdaptation> {
        let n = self.puncture_order.len();
        if shortened + punctured > n {
            return Err(Error::Config(format!(
                "cannot shorten {shortened} and puncture {punctured} of {n} columns"
            )));
        }
        let ra = RateAdaptation {
            shortened: self.shorten_order[..shortened].to_vec(),
            punctured: self.puncture_order[..punctured].to_vec(),
        };
        ra.validate(n)?;
        Ok(ra)
    }
}

/// One table row: usable up to `max_qber` with `shortened`/`punctured` counts.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RateEntry {
    pub max_qber: f64,
    pub shortened: usize,
    pub punctured: usize,
}

impl RateEntry {
    pub fn f(&self) -> usize {
        self.shortened + self.punctured
    }
}

/// QBER → rate-adaptation table, rows sorted by `max_qber` ascending.
#[derive(Clone, Debug, PartialEq)]
pub struct RateTable {
    pub pattern_seed: u64,
    pub target: f64,
    entries: Vec<RateEntry>,
}

impl RateTable {
    pub fn new(pattern_seed: u64, target: f64, mut entries: Vec<RateEntry>) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::Config("empty rate table".into()));
        }
        entries.sort_by(|a, b| a.max_qber.total_cmp(&b.max_qber));
        Ok(RateTable {
            pattern_seed,
            target,
            entries,
        })
    }

    pub fn entries(&self) -> &[RateEntry] {
        &self.entries
    }

    pub fn max_qber(&self) -> f64 {
        self.entries.last().map_or(0.0, |e| e.max_qber)
    }

    /// First row whose threshold covers `qber_bound`; lower rows disclose less.
    pub fn lookup(&self, qber_bound: f64) -> Result<RateEntry> {
        self.entries
            .iter()
            .find(|e| qber_bound <= e.max_qber)
            .copied()
            .ok_or(Error::NoCode(qber_bound))
    }

    /// Format: `pattern_seed <u64>`, `target <frac>`, then `max_qber shortened punctured` rows.
    pub fn parse(text: &str) -> Result<Self> {
        let mut seed = None;
        let mut target = 0.0;
        let mut entries = Vec::new();
        for line in text.lines() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            let bad = || Error::Format(format!("bad rate table line {line:?}"));
            match fields.as_slice() {
                ["pattern_seed", v] => seed = Some(v.parse().map_err(|_| bad())?),
                ["target", v] => target = v.parse().map_err(|_| bad())?,
                [q, s, p] => entries.push(RateEntry {
                    max_qber: q.parse().map_err(|_| bad())?,
                    shortened: s.parse().map_err(|_| bad())?,
                    punctured: p.parse().map_err(|_| bad())?,
                }),
                _ => return Err(bad()),
            }
        }
        let seed = seed.ok_or_else(|| Error::Format("rate table lacks pattern_seed".into()))?;
        Self::new(seed, target, entries)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "pattern_seed {}", self.pattern_seed);
        let _ = writeln!(out, "target {}", self.target);
        let _ = writeln!(out, "# max_qber shortened punctured");
        for e in &self.entries {
            let _ = writeln!(out, "{:.4} {} {}", e.max_qber, e.shortened, e.punctured);
        }
        out
    }
}

/// Picks the least-disclosing adaptation whose threshold covers `qber_bound`.
pub fn select_rate(h: &ParityCheckMatrix, qber_bound: f64, table: &RateTable) -> Result<RateAdaptation> {
    let entry = table.lookup(qber_bound)?;
    AdaptationPattern::derive(h, table.pattern_seed).adaptation(entry.shortened, entry.punctured)
}
