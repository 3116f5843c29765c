//! Rate-adaptive LDPC reconciliation.
//!
//! Alice sends `H·x` for her block `x`; Bob runs belief propagation on his
//! noisy copy until his estimate reproduces that syndrome. The default code is
//! a 7680 x 8192 lift of a 120 x 128 protograph (lift 64): a rate-1/4 core on
//! the first 32 base columns followed by 96 extension checks, each owning one
//! degree-one column. Puncturing extension columns raises the rate for lower
//! error rates; the rate table maps a QBER bound to how many to puncture.

mod decoder;
mod matrix;
pub mod montecarlo;
mod rate;

use std::sync::{Arc, OnceLock};

pub use decoder::{CheckRule, DecodeResult, Decoder};
pub use matrix::{build_matrix, lift_with_shifts, LiftedEdge, ParityCheckMatrix, Protograph};
pub use rate::{select_rate, AdaptationPattern, RateAdaptation, RateEntry, RateTable};

use crate::bits::BitBlock;
use crate::error::{Error, Result};

pub const DEFAULT_LIFT: usize = 64;
pub const DEFAULT_MATRIX_SEED: u64 = 0x5eed_1dbc;
pub const MAX_ITERATIONS: usize = 50;

const DEFAULT_PROTOGRAPH: &str = include_str!("../../assets/protograph_120x128.txt");
const DEFAULT_RATE_TABLE: &str = include_str!("../../assets/rate_table.txt");

/// Syndrome of one block.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Syndrome {
    pub bits: BitBlock,
    pub block_index: u64,
}

pub fn default_protograph() -> Protograph {
    Protograph::parse(DEFAULT_PROTOGRAPH).expect("bundled protograph parses")
}

/// The bundled 7680 x 8192 matrix, built once per process.
pub fn default_matrix() -> Arc<ParityCheckMatrix> {
    static H: OnceLock<Arc<ParityCheckMatrix>> = OnceLock::new();
    H.get_or_init(|| {
        Arc::new(
            build_matrix(&default_protograph(), DEFAULT_LIFT, DEFAULT_MATRIX_SEED).expect("bundled protograph lifts"),
        )
    })
    .clone()
}

pub fn default_rate_table() -> RateTable {
    RateTable::parse(DEFAULT_RATE_TABLE).expect("bundled rate table parses")
}

/// `H·x` where `x` is `key` laid over the unshortened columns with zeros elsewhere.
///
/// `key` covers every unshortened column; at punctured columns it holds bits
/// the sender never discloses.
pub fn encode_syndrome(h: &ParityCheckMatrix, key: &BitBlock, ra: &RateAdaptation) -> Result<Syndrome> {
    ra.validate(h.n())?;
    let cols = ra.unshortened_columns(h.n());
    if key.len() != cols.len() {
        return Err(Error::size("key", cols.len(), key.len()));
    }
    let full = decoder::embed_word(h.n(), &cols, key);
    Ok(Syndrome {
        bits: h.mul_vec(&full)?,
        block_index: key.index(),
    })
}

/// One-shot decode; prefer building a [`Decoder`] once when decoding many blocks.
pub fn decode(
    h: &Arc<ParityCheckMatrix>,
    noisy_key: &BitBlock,
    syndrome: &Syndrome,
    qber: f64,
    ra: &RateAdaptation,
    max_iter: usize,
) -> Result<DecodeResult> {
    Decoder::new(h.clone(), ra.clone(), CheckRule::SumProduct)?.decode(noisy_key, syndrome, qber, max_iter)
}

/// Binary entropy in bits.
pub fn h2(p: f64) -> f64 {
    if p <= 0.0 || p >= 1.0 {
        return 0.0;
    }
    -p * p.log2() - (1.0 - p) * (1.0 - p).log2()
}

/// Disclosed bits over the Shannon minimum for the effective block.
pub fn reconciliation_efficiency(disclosed: usize, payload: usize, qber: f64) -> f64 {
    disclosed as f64 / (payload as f64 * h2(qber))
}
