//! Sparse GF(2) parity-check matrices and protograph lifting.

use std::collections::HashSet;
use std::fmt::Write as _;

use rand::Rng;

use crate::bits::BitBlock;
use crate::error::{Error, Result};
use crate::rng;

/// Small base matrix; entry `e` lifts to a sum of `e` circulant permutations.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Protograph {
    rows: usize,
    cols: usize,
    entries: Vec<u8>,
}

impl Protograph {
    pub fn new(rows: usize, cols: usize, entries: Vec<u8>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::Construction("empty protograph".into()));
        }
        if entries.len() != rows * cols {
            return Err(Error::size("protograph entries", rows * cols, entries.len()));
        }
        Ok(Protograph { rows, cols, entries })
    }

    pub fn from_rows(rows: &[Vec<u8>]) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, |x| x.len());
        if rows.iter().any(|x| x.len() != c) {
            return Err(Error::Construction("ragged protograph rows".into()));
        }
        Self::new(r, c, rows.concat())
    }

    /// Whitespace-separated integers, one base row per line; `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self> {
        let mut rows = Vec::new();
        for line in text.lines() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let row = line
                .split_whitespace()
                .map(|t| {
                    t.parse::<u8>()
                        .map_err(|_| Error::Format(format!("bad protograph entry {t:?}")))
                })
                .collect::<Result<Vec<_>>>()?;
            rows.push(row);
        }
        Self::from_rows(&rows)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, i: usize, j: usize) -> u8 {
        self.entries[i * self.cols + j]
    }

    pub fn column_degree(&self, j: usize) -> usize {
        (0..self.rows).map(|i| self.get(i, j) as usize).sum()
    }
}

/// One base edge of a lifted protograph: row block, column block, circulant shift.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LiftedEdge {
    pub row: usize,
    pub col: usize,
    pub shift: usize,
}

/// Sparse parity-check matrix in index-list form, rows and columns both kept.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ParityCheckMatrix {
    n: usize,
    m: usize,
    rows: Vec<Vec<u32>>,
    cols: Vec<Vec<u32>>,
    seed: u64,
    base_rows: usize,
    base_cols: usize,
    lift: usize,
}

impl ParityCheckMatrix {
    /// Builds from per-row column lists; rejects out-of-range and duplicate entries.
    pub fn from_rows(n: usize, rows: Vec<Vec<u32>>) -> Result<Self> {
        let m = rows.len();
        Self::with_meta(n, rows, 0, m, n, 1, m)
    }

    fn with_meta(
        n: usize,
        mut rows: Vec<Vec<u32>>,
        seed: u64,
        base_rows: usize,
        base_cols: usize,
        lift: usize,
        m: usize,
    ) -> Result<Self> {
        if rows.len() != m {
            return Err(Error::size("matrix rows", m, rows.len()));
        }
        let mut cols = vec![Vec::new(); n];
        for (r, row) in rows.iter_mut().enumerate() {
            row.sort_unstable();
            if row.windows(2).any(|w| w[0] == w[1]) {
                return Err(Error::Construction(format!("duplicate entry in row {r}")));
            }
            for &c in row.iter() {
                let c = c as usize;
                if c >= n {
                    return Err(Error::Construction(format!("column {c} out of range in row {r}")));
                }
                cols[c].push(r as u32);
            }
        }
        Ok(ParityCheckMatrix {
            n,
            m,
            rows,
            cols,
            seed,
            base_rows,
            base_cols,
            lift,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn base_rows(&self) -> usize {
        self.base_rows
    }

    pub fn base_cols(&self) -> usize {
        self.base_cols
    }

    pub fn lift(&self) -> usize {
        self.lift
    }

    pub fn row(&self, r: usize) -> &[u32] {
        &self.rows[r]
    }

    pub fn col(&self, c: usize) -> &[u32] {
        &self.cols[c]
    }

    pub fn rows(&self) -> &[Vec<u32>] {
        &self.rows
    }

    pub fn cols(&self) -> &[Vec<u32>] {
        &self.cols
    }

    pub fn edge_count(&self) -> usize {
        self.rows.iter().map(Vec::len).sum()
    }

    /// `H·x` over GF(2) for a full-length word.
    pub fn mul_vec(&self, x: &BitBlock) -> Result<BitBlock> {
        if x.len() != self.n {
            return Err(Error::size("codeword", self.n, x.len()));
        }
        let mut s = BitBlock::zeros(self.m);
        for (r, row) in self.rows.iter().enumerate() {
            let parity = row.iter().fold(false, |acc, &c| acc ^ x.get(c as usize));
            if parity {
                s.set(r, true);
            }
        }
        Ok(s)
    }

    /// Checks that the row and column lists describe the same set of ones.
    pub fn is_consistent(&self) -> bool {
        let mut from_rows = HashSet::new();
        for (r, row) in self.rows.iter().enumerate() {
            for &c in row {
                if (c as usize) >= self.n || !from_rows.insert((r as u32, c)) {
                    return false;
                }
            }
        }
        let mut count = 0;
        for (c, col) in self.cols.iter().enumerate() {
            for &r in col {
                if (r as usize) >= self.m || !from_rows.contains(&(r, c as u32)) {
                    return false;
                }
                count += 1;
            }
        }
        count == from_rows.len()
    }

    /// Exhaustive search for a 4-cycle: two rows sharing two columns.
    pub fn has_four_cycle(&self) -> bool {
        let mut seen: HashSet<(u32, u32)> = HashSet::new();
        for col in &self.cols {
            for a in 0..col.len() {
                for b in a + 1..col.len() {
                    if !seen.insert((col[a], col[b])) {
                        return true;
                    }
                }
            }
        }
        false
    }

    /// Text asset: a header line then one row of column indices per line.
    pub fn to_text(&self) -> String {
        let mut out = String::with_capacity(self.edge_count() * 6);
        let _ = writeln!(
            out,
            "{} {} {} {} {} {}",
            self.n, self.m, self.base_rows, self.base_cols, self.lift, self.seed
        );
        for row in &self.rows {
            let line: Vec<String> = row.iter().map(u32::to_string).collect();
            out.push_str(&line.join(" "));
            out.push('\n');
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| Error::Format("empty matrix file".into()))?;
        let h: Vec<u64> = header
            .split_whitespace()
            .map(|t| t.parse::<u64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::Format(format!("matrix header: {e}")))?;
        if h.len() != 6 {
            return Err(Error::Format("matrix header needs 6 fields".into()));
        }
        let (n, m) = (h[0] as usize, h[1] as usize);
        let mut rows = Vec::with_capacity(m);
        for line in lines.take(m) {
            let row = line
                .split_whitespace()
                .map(|t| t.parse::<u32>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| Error::Format(format!("matrix row: {e}")))?;
            rows.push(row);
        }
        Self::with_meta(n, rows, h[5], h[2] as usize, h[3] as usize, h[4] as usize, m)
    }
}

/// Lifts `base` with explicitly given shifts (one per unit of each entry, row-major).
pub fn lift_with_shifts(base: &Protograph, lift: usize, edges: &[LiftedEdge], seed: u64) -> Result<ParityCheckMatrix> {
    if lift == 0 {
        return Err(Error::Construction("lift must be at least 1".into()));
    }
    let m = base.rows * lift;
    let n = base.cols * lift;
    let mut rows: Vec<Vec<u32>> = vec![Vec::new(); m];
    for e in edges {
        if e.row >= base.rows || e.col >= base.cols || e.shift >= lift {
            return Err(Error::Construction(format!("edge {e:?} out of range")));
        }
        for r in 0..lift {
            let c = e.col * lift + (r + e.shift) % lift;
            rows[e.row * lift + r].push(c as u32);
        }
    }
    ParityCheckMatrix::with_meta(n, rows, seed, base.rows, base.cols, lift, m)
}

struct ShiftPlacer {
    lift: i64,
    by_row: Vec<Vec<usize>>,
    by_col: Vec<Vec<usize>>,
    edges: Vec<LiftedEdge>,
}

impl ShiftPlacer {
    /// Whether adding edge `cand` with its shift closes a lifted 4-cycle.
    fn closes_four_cycle(&self, cand: LiftedEdge) -> bool {
        // Candidate plays e1 = (i,k); e2 on row i, e4 on column k, e3 at (row(e4), col(e2)).
        // Cycle condition on shifts: s1 - s2 + s3 - s4 == 0 (mod lift).
        let z = self.lift;
        let s1 = cand.shift as i64;
        let cand_id = usize::MAX;
        let shift_of = |id: usize| -> i64 {
            if id == cand_id {
                s1
            } else {
                self.edges[id].shift as i64
            }
        };
        let row_i: Vec<usize> = self.by_row[cand.row].clone();
        let col_k: Vec<usize> = self.by_col[cand.col].clone();
        for &e2 in &row_i {
            let l = self.edges[e2].col;
            for &e4 in &col_k {
                let j = self.edges[e4].row;
                let mut cell: Vec<usize> = self.by_row[j]
                    .iter()
                    .copied()
                    .filter(|&id| self.edges[id].col == l)
                    .collect();
                if j == cand.row && l == cand.col {
                    cell.push(cand_id);
                }
                for e3 in cell {
                    if e3 == e2 || e3 == e4 {
                        continue;
                    }
                    let v = s1 - shift_of(e2) + shift_of(e3) - shift_of(e4);
                    if v.rem_euclid(z) == 0 {
                        return true;
                    }
                }
            }
        }
        false
    }

    fn push(&mut self, e: LiftedEdge) {
        let id = self.edges.len();
        self.edges.push(e);
        self.by_row[e.row].push(id);
        self.by_col[e.col].push(id);
    }
}

/// Lifts `base` by `lift` with seeded circulant shifts chosen to avoid 4-cycles
/// where the protograph allows it.
pub fn build_matrix(base: &Protograph, lift: usize, seed: u64) -> Result<ParityCheckMatrix> {
    if lift == 0 {
        return Err(Error::Construction("lift must be at least 1".into()));
    }
    let mut rng = rng::stream(seed, "ldpc-lift");
    let mut placer = ShiftPlacer {
        lift: lift as i64,
        by_row: vec![Vec::new(); base.rows],
        by_col: vec![Vec::new(); base.cols],
        edges: Vec::new(),
    };
    for i in 0..base.rows {
        for j in 0..base.cols {
            let e = base.get(i, j) as usize;
            if e > lift {
                return Err(Error::Construction(format!(
                    "entry ({i},{j}) = {e} needs more distinct shifts than lift {lift}"
                )));
            }
            let mut used: Vec<usize> = Vec::with_capacity(e);
            for _ in 0..e {
                let start = rng.gen_range(0..lift);
                let mut fallback = None;
                let mut chosen = None;
                for k in 0..lift {
                    let s = (start + k) % lift;
                    if used.contains(&s) {
                        continue;
                    }
                    let cand = LiftedEdge {
                        row: i,
                        col: j,
                        shift: s,
                    };
                    if fallback.is_none() {
                        fallback = Some(s);
                    }
                    if !placer.closes_four_cycle(cand) {
                        chosen = Some(s);
                        break;
                    }
                }
                let s = chosen
                    .or(fallback)
                    .ok_or_else(|| Error::Construction(format!("no distinct shift left for entry ({i},{j})")))?;
                used.push(s);
                placer.push(LiftedEdge {
                    row: i,
                    col: j,
                    shift: s,
                });
            }
        }
    }
    lift_with_shifts(base, lift, &placer.edges, seed)
}
