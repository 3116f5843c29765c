//! Monte Carlo convergence harness over a binary symmetric channel.
//!
//! Used to build and re-check the rate table and by the threshold tests.

use rand::Rng;

use crate::bits::BitBlock;
use crate::error::Result;
use crate::ldpc::{decoder::Decoder, encode_syndrome, RateEntry, RateTable};
use crate::rng;

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct McStats {
    pub trials: usize,
    pub converged: usize,
    /// Converged to a word that differs from Alice's on a payload position.
    pub miscorrected: usize,
    /// Converged but the syndrome identity failed (must stay zero).
    pub unsound: usize,
    pub total_iterations: usize,
}

impl McStats {
    pub fn convergence(&self) -> f64 {
        if self.trials == 0 {
            return 0.0;
        }
        self.converged as f64 / self.trials as f64
    }

    pub fn mean_iterations(&self) -> f64 {
        if self.trials == 0 {
            return 0.0;
        }
        self.total_iterations as f64 / self.trials as f64
    }

    fn merge(&mut self, o: &McStats) {
        self.trials += o.trials;
        self.converged += o.converged;
        self.miscorrected += o.miscorrected;
        self.unsound += o.unsound;
        self.total_iterations += o.total_iterations;
    }
}

/// Runs trial `index` of a seeded experiment: random Alice word, BSC(`qber`) on
/// every non-punctured position, decode with the true QBER.
pub fn run_trial(decoder: &Decoder, qber: f64, seed: u64, index: u64, max_iter: usize) -> Result<McStats> {
    let mut rng = rng::indexed_stream(seed, "ldpc-mc", index);
    let h = decoder.matrix();
    let ra = decoder.adaptation();
    let word_cols = ra.unshortened_columns(h.n());
    let mut punctured = vec![false; h.n()];
    for &c in &ra.punctured {
        punctured[c] = true;
    }
    let alice = BitBlock::random(word_cols.len(), &mut rng).with_index(index);
    let syndrome = encode_syndrome(h, &alice, ra)?;
    let mut bob = alice.clone();
    for (k, &c) in word_cols.iter().enumerate() {
        if punctured[c] {
            bob.set(k, false);
        } else if rng.gen_bool(qber) {
            bob.flip(k);
        }
    }
    let res = decoder.decode(&bob, &syndrome, qber, max_iter)?;
    let mut st = McStats {
        trials: 1,
        total_iterations: res.iterations_used,
        ..Default::default()
    };
    if res.converged {
        st.converged = 1;
        let full = super::decoder::embed_word(h.n(), &word_cols, &res.corrected);
        if h.mul_vec(&full)? != syndrome.bits {
            st.unsound = 1;
        }
        let payload_differs = word_cols
            .iter()
            .enumerate()
            .any(|(k, &c)| !punctured[c] && res.corrected.get(k) != alice.get(k));
        if payload_differs {
            st.miscorrected = 1;
        }
    }
    Ok(st)
}

/// `trials` independent blocks spread over `threads` scoped workers.
pub fn simulate(
    decoder: &Decoder,
    qber: f64,
    trials: usize,
    seed: u64,
    max_iter: usize,
    threads: usize,
) -> Result<McStats> {
    let threads = threads.max(1).min(trials.max(1));
    let parts: Vec<Result<McStats>> = std::thread::scope(|s| {
        let handles: Vec<_> = (0..threads)
            .map(|t| {
                s.spawn(move || {
                    let mut acc = McStats::default();
                    for i in (t..trials).step_by(threads) {
                        acc.merge(&run_trial(decoder, qber, seed, i as u64, max_iter)?);
                    }
                    Ok(acc)
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("mc worker panicked"))
            .collect()
    });
    let mut total = McStats::default();
    for p in parts {
        total.merge(&p?);
    }
    Ok(total)
}

/// For each QBER grid point, the largest puncture count (in `step` units) whose
/// convergence reaches `target`. Assumes convergence falls as puncturing grows.
/// Past the point where even the unpunctured code misses `target`, rows with no
/// puncturing are still emitted while convergence stays at or above `tail_target`.
#[allow(clippy::too_many_arguments)]
pub fn build_rate_table(
    h: &std::sync::Arc<crate::ldpc::ParityCheckMatrix>,
    pattern_seed: u64,
    grid: &[f64],
    max_punctured: usize,
    step: usize,
    trials: usize,
    target: f64,
    tail_target: f64,
    seed: u64,
    threads: usize,
) -> Result<RateTable> {
    let pattern = crate::ldpc::AdaptationPattern::derive(h, pattern_seed);
    let mut entries = Vec::new();
    let mut hi_cap = max_punctured / step;
    for &q in grid {
        let conv = |k: usize| -> Result<f64> {
            let ra = pattern.adaptation(0, k * step)?;
            let dec = Decoder::new(h.clone(), ra, Default::default())?;
            Ok(simulate(&dec, q, trials, seed, crate::ldpc::MAX_ITERATIONS, threads)?.convergence())
        };
        let full = conv(0)?;
        let mut lo = 0usize;
        if full < target {
            if full < tail_target {
                break;
            }
        } else {
            let mut hi = hi_cap;
            while lo < hi {
                let mid = (lo + hi).div_ceil(2);
                if conv(mid)? >= target {
                    lo = mid;
                } else {
                    hi = mid - 1;
                }
            }
        }
        hi_cap = lo;
        entries.push(RateEntry {
            max_qber: q,
            shortened: 0,
            punctured: lo * step,
        });
    }
    RateTable::new(pattern_seed, target, entries)
}
