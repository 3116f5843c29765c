//! Syndrome belief-propagation decoding on a prepared Tanner graph.

use std::collections::VecDeque;
use std::sync::Arc;

use crate::bits::BitBlock;
use crate::error::{Error, Result};
use crate::ldpc::matrix::ParityCheckMatrix;
use crate::ldpc::rate::RateAdaptation;
use crate::ldpc::Syndrome;

const LLR_CLAMP: f64 = 30.0;
const TANH_CLAMP: f64 = 1.0 - 1e-15;

#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub enum CheckRule {
    /// tanh/atanh sum-product.
    #[default]
    SumProduct,
    /// Scaled min-sum approximation.
    MinSum { scale: f64 },
}

#[derive(Clone, Debug, PartialEq)]
pub struct DecodeResult {
    /// Bob's word in unshortened-column order, punctured positions recovered.
    pub corrected: BitBlock,
    pub iterations_used: usize,
    pub converged: bool,
    /// Posterior LLR magnitude per unshortened column (zero for peeled punctured columns).
    pub llr_final: Vec<f32>,
}

/// Tanner graph for one `(H, rate adaptation)` pair, reusable across blocks and threads.
#[derive(Debug)]
pub struct Decoder {
    h: Arc<ParityCheckMatrix>,
    ra: RateAdaptation,
    rule: CheckRule,
    /// Unshortened columns; the decoder word layout.
    word_cols: Vec<usize>,
    /// Word position of each local variable.
    var_pos: Vec<u32>,
    var_punctured: Vec<bool>,
    /// Active check rows and their edges (check-major).
    check_rows: Vec<u32>,
    chk_start: Vec<u32>,
    edge_var: Vec<u32>,
    /// Variable-major edge index.
    var_start: Vec<u32>,
    var_edge: Vec<u32>,
    /// `(row, word position)` of punctured columns resolved after decoding, in peel order.
    peeled: Vec<(u32, u32)>,
}

impl Decoder {
    pub fn new(h: Arc<ParityCheckMatrix>, ra: RateAdaptation, rule: CheckRule) -> Result<Self> {
        let n = h.n();
        let m = h.m();
        ra.validate(n)?;
        let mut shortened = vec![false; n];
        for &c in &ra.shortened {
            shortened[c] = true;
        }
        let mut punctured = vec![false; n];
        for &c in &ra.punctured {
            punctured[c] = true;
        }
        let word_cols = ra.unshortened_columns(n);
        let mut word_pos = vec![u32::MAX; n];
        for (k, &c) in word_cols.iter().enumerate() {
            word_pos[c] = k as u32;
        }

        // Peel punctured columns that sit alone in a check: that check says nothing
        // about the rest of the word, so it and the column leave the graph.
        let mut row_active = vec![true; m];
        let mut deg = vec![0usize; n];
        for &c in &ra.punctured {
            deg[c] = h.col(c).len();
        }
        let mut queue: VecDeque<usize> = ra.punctured.iter().copied().filter(|&c| deg[c] == 1).collect();
        let mut removed_col = vec![false; n];
        let mut peeled = Vec::new();
        while let Some(c) = queue.pop_front() {
            if removed_col[c] || deg[c] != 1 {
                continue;
            }
            let Some(&r) = h.col(c).iter().find(|&&r| row_active[r as usize]) else {
                continue;
            };
            row_active[r as usize] = false;
            removed_col[c] = true;
            peeled.push((r, word_pos[c]));
            for &c2 in h.row(r as usize) {
                let c2 = c2 as usize;
                if c2 != c && punctured[c2] && !removed_col[c2] {
                    deg[c2] -= 1;
                    if deg[c2] == 1 {
                        queue.push_back(c2);
                    }
                }
            }
        }
        // Punctured columns left with no active check are free; they stay zero.
        for &c in &ra.punctured {
            if !removed_col[c] && deg[c] == 0 {
                removed_col[c] = true;
            }
        }

        let mut local = vec![u32::MAX; n];
        let mut var_pos = Vec::new();
        let mut var_punctured = Vec::new();
        for &c in &word_cols {
            if removed_col[c] {
                continue;
            }
            local[c] = var_pos.len() as u32;
            var_pos.push(word_pos[c]);
            var_punctured.push(punctured[c]);
        }

        let mut check_rows = Vec::new();
        let mut chk_start = vec![0u32];
        let mut edge_var = Vec::new();
        for r in 0..m {
            if !row_active[r] {
                continue;
            }
            let before = edge_var.len();
            for &c in h.row(r) {
                let c = c as usize;
                if shortened[c] {
                    continue;
                }
                debug_assert!(local[c] != u32::MAX);
                edge_var.push(local[c]);
            }
            if edge_var.len() == before {
                // Row touches only shortened columns; its syndrome bit is checked at the end.
                continue;
            }
            check_rows.push(r as u32);
            chk_start.push(edge_var.len() as u32);
        }

        let nv = var_pos.len();
        let mut var_deg = vec![0u32; nv];
        for &v in &edge_var {
            var_deg[v as usize] += 1;
        }
        let mut var_start = vec![0u32; nv + 1];
        for v in 0..nv {
            var_start[v + 1] = var_start[v] + var_deg[v];
        }
        let mut fill = var_start.clone();
        let mut var_edge = vec![0u32; edge_var.len()];
        for (e, &v) in edge_var.iter().enumerate() {
            var_edge[fill[v as usize] as usize] = e as u32;
            fill[v as usize] += 1;
        }

        Ok(Decoder {
            h,
            ra,
            rule,
            word_cols,
            var_pos,
            var_punctured,
            check_rows,
            chk_start,
            edge_var,
            var_start,
            var_edge,
            peeled,
        })
    }

    pub fn matrix(&self) -> &ParityCheckMatrix {
        &self.h
    }

    pub fn adaptation(&self) -> &RateAdaptation {
        &self.ra
    }

    /// Length of the word the decoder consumes and produces.
    pub fn word_len(&self) -> usize {
        self.word_cols.len()
    }

    pub fn active_checks(&self) -> usize {
        self.check_rows.len()
    }

    pub fn edges(&self) -> usize {
        self.edge_var.len()
    }

    /// Decodes Bob's word against Alice's syndrome.
    pub fn decode(&self, noisy: &BitBlock, syndrome: &Syndrome, qber: f64, max_iter: usize) -> Result<DecodeResult> {
        if noisy.len() != self.word_len() {
            return Err(Error::size("noisy key", self.word_len(), noisy.len()));
        }
        if syndrome.bits.len() != self.h.m() {
            return Err(Error::size("syndrome", self.h.m(), syndrome.bits.len()));
        }
        if !(qber > 0.0 && qber < 0.5) {
            return Err(Error::Config(format!("decoder qber {qber} outside (0, 0.5)")));
        }
        let mag = ((1.0 - qber) / qber).ln().min(LLR_CLAMP);
        let nv = self.var_pos.len();
        let ne = self.edge_var.len();
        let nc = self.check_rows.len();

        let channel: Vec<f64> = (0..nv)
            .map(|v| {
                if self.var_punctured[v] {
                    0.0
                } else if noisy.get(self.var_pos[v] as usize) {
                    -mag
                } else {
                    mag
                }
            })
            .collect();
        let check_sign: Vec<bool> = self.check_rows.iter().map(|&r| syndrome.bits.get(r as usize)).collect();

        let mut v2c: Vec<f64> = self.edge_var.iter().map(|&v| channel[v as usize]).collect();
        let mut c2v = vec![0.0f64; ne];
        let mut total = channel.clone();
        let mut hard: Vec<bool> = total.iter().map(|&l| l < 0.0).collect();
        let mut scratch = Vec::new();

        let mut iterations = 0;
        let mut satisfied = self.checks_satisfied(&hard, &check_sign);
        while !satisfied && iterations < max_iter {
            iterations += 1;
            for c in 0..nc {
                let (a, b) = (self.chk_start[c] as usize, self.chk_start[c + 1] as usize);
                let flip = check_sign[c];
                match self.rule {
                    CheckRule::SumProduct => sum_product_check(&v2c[a..b], &mut c2v[a..b], flip, &mut scratch),
                    CheckRule::MinSum { scale } => min_sum_check(&v2c[a..b], &mut c2v[a..b], flip, scale),
                }
            }
            for v in 0..nv {
                let (a, b) = (self.var_start[v] as usize, self.var_start[v + 1] as usize);
                let edges = &self.var_edge[a..b];
                let t = channel[v] + edges.iter().map(|&e| c2v[e as usize]).sum::<f64>();
                total[v] = t;
                hard[v] = t < 0.0;
                for &e in edges {
                    v2c[e as usize] = (t - c2v[e as usize]).clamp(-LLR_CLAMP, LLR_CLAMP);
                }
            }
            satisfied = self.checks_satisfied(&hard, &check_sign);
        }

        let mut corrected = BitBlock::zeros(self.word_len());
        let mut llr_final = vec![0.0f32; self.word_len()];
        for v in 0..nv {
            let pos = self.var_pos[v] as usize;
            if hard[v] {
                corrected.set(pos, true);
            }
            llr_final[pos] = total[v].abs() as f32;
        }
        self.fill_peeled(&mut corrected, &syndrome.bits);

        let full = embed_word(self.h.n(), &self.word_cols, &corrected);
        let converged = satisfied && self.h.mul_vec(&full)? == syndrome.bits;
        Ok(DecodeResult {
            corrected,
            iterations_used: iterations,
            converged,
            llr_final,
        })
    }

    fn checks_satisfied(&self, hard: &[bool], check_sign: &[bool]) -> bool {
        (0..self.check_rows.len()).all(|c| {
            let (a, b) = (self.chk_start[c] as usize, self.chk_start[c + 1] as usize);
            let parity = self.edge_var[a..b].iter().fold(false, |p, &v| p ^ hard[v as usize]);
            parity == check_sign[c]
        })
    }

    fn fill_peeled(&self, word: &mut BitBlock, syndrome: &BitBlock) {
        if self.peeled.is_empty() {
            return;
        }
        let n = self.h.n();
        let mut pos_of = vec![u32::MAX; n];
        for (k, &c) in self.word_cols.iter().enumerate() {
            pos_of[c] = k as u32;
        }
        for &(r, pos) in self.peeled.iter().rev() {
            let mut bit = syndrome.get(r as usize);
            for &c in self.h.row(r as usize) {
                let p = pos_of[c as usize];
                if p != u32::MAX && p != pos {
                    bit ^= word.get(p as usize);
                }
            }
            word.set(pos as usize, bit);
        }
    }
}

fn sum_product_check(input: &[f64], out: &mut [f64], flip: bool, scratch: &mut Vec<f64>) {
    let d = input.len();
    scratch.clear();
    scratch.extend(input.iter().map(|&l| (0.5 * l).tanh()));
    // Exclusive products via prefix/suffix so zeros need no special casing.
    let mut prefix = 1.0;
    for k in 0..d {
        out[k] = prefix;
        prefix *= scratch[k];
    }
    let mut suffix = 1.0;
    let sign = if flip { -1.0 } else { 1.0 };
    for k in (0..d).rev() {
        let p = (out[k] * suffix).clamp(-TANH_CLAMP, TANH_CLAMP);
        out[k] = sign * 2.0 * p.atanh();
        suffix *= scratch[k];
    }
}

fn min_sum_check(input: &[f64], out: &mut [f64], flip: bool, scale: f64) {
    let mut min1 = f64::INFINITY;
    let mut min2 = f64::INFINITY;
    let mut arg = usize::MAX;
    let mut neg = flip;
    for (k, &l) in input.iter().enumerate() {
        let a = l.abs();
        if l < 0.0 {
            neg = !neg;
        }
        if a < min1 {
            min2 = min1;
            min1 = a;
            arg = k;
        } else if a < min2 {
            min2 = a;
        }
    }
    for (k, &l) in input.iter().enumerate() {
        let mag = if k == arg { min2 } else { min1 };
        let s = neg ^ (l < 0.0);
        out[k] = if s { -scale * mag } else { scale * mag };
    }
}

/// Places a word given in `word_cols` order into a zero codeword of length `n`.
pub(crate) fn embed_word(n: usize, word_cols: &[usize], word: &BitBlock) -> BitBlock {
    let mut full = BitBlock::zeros(n);
    for (k, &c) in word_cols.iter().enumerate() {
        if word.get(k) {
            full.set(c, true);
        }
    }
    full
}
