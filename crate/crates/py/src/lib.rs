//! Python bindings: `import qkd_distill`.
//!
//! Bit strings go in as lists of 0/1 ints and come back as lists of bools; keys and AES data as
//! `bytes`. Configurations and metrics travel as JSON text.

use pyo3::create_exception;
use pyo3::exceptions::PyException;
use pyo3::prelude::*;

use qkd_core::aesapp;
use qkd_core::auth;
use qkd_core::chansim::{self, ChannelParams, ProtocolKind};
use qkd_core::config::{self, SessionConfig};
use qkd_core::estimation;
use qkd_core::keystore;
use qkd_core::pa::{self, KeyLengthModel, PaPolicy, ToeplitzSeed};
use qkd_core::pipeline;
use qkd_core::sifting;
use qkd_core::verify;
use qkd_core::{BitBlock, Error};

create_exception!(qkd_distill, QkdError, PyException);
create_exception!(qkd_distill, ConfigError, QkdError);
create_exception!(qkd_distill, SessionAbort, QkdError);
create_exception!(qkd_distill, KeyExhausted, QkdError);

fn py_err(e: Error) -> PyErr {
    let msg = e.to_string();
    match e {
        Error::Config(_) => ConfigError::new_err(msg),
        Error::Abort { .. }
        | Error::Authentication(_)
        | Error::Alignment { .. }
        | Error::NoCode(_)
        | Error::EmptySample => SessionAbort::new_err(msg),
        Error::KeyExhausted { .. } => KeyExhausted::new_err(msg),
        _ => QkdError::new_err(msg),
    }
}

fn bits(v: &[u8]) -> BitBlock {
    v.iter().map(|&b| b != 0).collect()
}

fn to_list(b: &BitBlock) -> Vec<bool> {
    b.iter().collect()
}

/// Outcome of one distillation session.
#[pyclass(module = "qkd_distill", frozen)]
struct SessionResult {
    alice: BitBlock,
    bob: BitBlock,
    metrics: String,
}

#[pymethods]
impl SessionResult {
    #[getter]
    fn key_bits(&self) -> usize {
        self.alice.len()
    }

    /// Alice's key, packed least-significant bit first.
    #[getter]
    fn alice_key(&self) -> Vec<u8> {
        self.alice.to_bytes()
    }

    #[getter]
    fn bob_key(&self) -> Vec<u8> {
        self.bob.to_bytes()
    }

    #[getter]
    fn keys_match(&self) -> bool {
        self.alice == self.bob
    }

    #[getter]
    fn metrics_json(&self) -> String {
        self.metrics.clone()
    }

    fn __repr__(&self) -> String {
        format!(
            "SessionResult(key_bits={}, keys_match={})",
            self.alice.len(),
            self.alice == self.bob
        )
    }
}

/// JSON of a built-in scenario.
#[pyfunction]
fn preset(name: &str) -> PyResult<String> {
    config::preset(name)
        .map(|c| c.to_json())
        .ok_or_else(|| ConfigError::new_err(format!("unknown preset {name:?}")))
}

#[pyfunction]
fn preset_names() -> Vec<&'static str> {
    config::PRESET_NAMES.to_vec()
}

/// Validates a configuration and returns it with defaults filled in.
#[pyfunction]
fn load_config(json: &str) -> PyResult<String> {
    SessionConfig::from_json(json).map(|c| c.to_json()).map_err(py_err)
}

/// Simulates and distills; the GIL is released while the pipeline runs.
#[pyfunction]
#[pyo3(signature = (config_json = "{}"))]
fn run_session(py: Python<'_>, config_json: &str) -> PyResult<SessionResult> {
    let cfg = SessionConfig::from_json(config_json).map_err(py_err)?;
    let out = py.detach(|| pipeline::run_session(&cfg)).map_err(py_err)?;
    Ok(SessionResult {
        metrics: serde_json::to_string(&out.metrics).expect("metrics serialize"),
        alice: out.alice_key,
        bob: out.bob_key,
    })
}

/// `(alice_slots, bob_timestamps)` of a simulated session.
#[pyfunction]
#[pyo3(signature = (protocol, pulses, params_json = "{}"))]
fn simulate(protocol: &str, pulses: usize, params_json: &str) -> PyResult<(Vec<u64>, Vec<u64>)> {
    let proto: ProtocolKind = protocol.parse().map_err(py_err)?;
    let params: ChannelParams = serde_json::from_str(params_json).map_err(|e| ConfigError::new_err(e.to_string()))?;
    let s = chansim::simulate_session(proto, pulses, &params).map_err(py_err)?;
    Ok((s.alice.slots(), s.bob.iter().map(|d| d.timestamp).collect()))
}

/// `(offset, correlation)` of the best timestamp alignment.
#[pyfunction]
#[pyo3(signature = (alice_slots, bob_times, window = sifting::DEFAULT_WINDOW, threshold = sifting::DEFAULT_THRESHOLD))]
fn align(alice_slots: Vec<u64>, bob_times: Vec<u64>, window: u64, threshold: f64) -> PyResult<(i64, f64)> {
    let r = sifting::align(&alice_slots, &bob_times, window, threshold).map_err(py_err)?;
    Ok((r.offset, r.correlation))
}

/// `(qber_hat, delta, qber_bound)` from two sampled bit lists.
#[pyfunction]
#[pyo3(signature = (alice, bob, epsilon_pe = estimation::DEFAULT_EPSILON_PE))]
fn estimate_qber(alice: Vec<u8>, bob: Vec<u8>, epsilon_pe: f64) -> PyResult<(f64, f64, f64)> {
    let e = estimation::estimate_qber(&bits(&alice), &bits(&bob), epsilon_pe).map_err(py_err)?;
    Ok((e.qber_hat, e.delta, e.qber_bound))
}

#[pyfunction]
#[pyo3(signature = (n, qber_bound, leak_ec = 0, leak_pe = 0, verify_bits = 0, epsilon_pa = 1e-10, standard = false))]
#[allow(clippy::too_many_arguments)]
fn output_length(
    n: usize,
    qber_bound: f64,
    leak_ec: usize,
    leak_pe: usize,
    verify_bits: usize,
    epsilon_pa: f64,
    standard: bool,
) -> usize {
    let policy = PaPolicy {
        epsilon_pa,
        leak_ec,
        leak_pe,
        verify_bits,
        model: if standard {
            KeyLengthModel::Standard
        } else {
            KeyLengthModel::DisclosedLeakage
        },
    };
    pa::output_length(n, qber_bound, &policy)
}

/// Toeplitz hash of `input` (n bits) to `r` bits under an `n + r - 1` bit seed.
#[pyfunction]
#[pyo3(signature = (seed, r, input, fft = true))]
fn toeplitz_hash(seed: Vec<u8>, r: usize, input: Vec<u8>, fft: bool) -> PyResult<Vec<bool>> {
    let s = ToeplitzSeed::new(input.len(), r, bits(&seed)).map_err(py_err)?;
    let x = bits(&input);
    let out = if fft {
        pa::toeplitz_hash_fft(&s, &x)
    } else {
        pa::toeplitz_hash_direct(&s, &x)
    };
    out.map(|b| to_list(&b)).map_err(py_err)
}

/// Polynomial MAC core: evaluation of the message polynomial at clamped `k1`, mod 2^130 - 5.
#[pyfunction]
fn poly_hash(message: &[u8], k1: u128) -> u128 {
    let v = auth::poly_hash(message, k1);
    v.low
}

/// 128-bit fold of a chunk.
#[pyfunction]
fn xor_reduce(chunk: Vec<u8>) -> PyResult<u128> {
    verify::xor_reduce(&bits(&chunk)).map_err(py_err)
}

#[pyclass(module = "qkd_distill", frozen)]
struct Aes128 {
    inner: aesapp::Aes128,
}

#[pymethods]
impl Aes128 {
    #[new]
    fn new(key: &[u8]) -> PyResult<Self> {
        let key: [u8; 16] = key
            .try_into()
            .map_err(|_| ConfigError::new_err("AES-128 key must be 16 bytes"))?;
        Ok(Aes128 {
            inner: aesapp::Aes128::new(&key),
        })
    }

    fn encrypt_block(&self, block: &[u8]) -> PyResult<Vec<u8>> {
        let b: [u8; 16] = block
            .try_into()
            .map_err(|_| ConfigError::new_err("block must be 16 bytes"))?;
        Ok(self.inner.encrypt_block(b).to_vec())
    }

    fn decrypt_block(&self, block: &[u8]) -> PyResult<Vec<u8>> {
        let b: [u8; 16] = block
            .try_into()
            .map_err(|_| ConfigError::new_err("block must be 16 bytes"))?;
        Ok(self.inner.decrypt_block(b).to_vec())
    }

    /// CTR keystream XOR; the same call decrypts.
    fn ctr(&self, nonce: &[u8], data: &[u8]) -> PyResult<Vec<u8>> {
        let n: [u8; 12] = nonce
            .try_into()
            .map_err(|_| ConfigError::new_err("nonce must be 12 bytes"))?;
        let mut out = data.to_vec();
        aesapp::ctr_apply(&self.inner, &n, &mut out);
        Ok(out)
    }
}

#[pyclass(module = "qkd_distill", unsendable)]
struct KeyStore {
    inner: keystore::KeyStore,
}

#[pymethods]
impl KeyStore {
    #[new]
    fn new(path: std::path::PathBuf) -> PyResult<Self> {
        Ok(KeyStore {
            inner: keystore::KeyStore::open(&path).map_err(py_err)?,
        })
    }

    #[getter]
    fn balance(&self) -> u64 {
        self.inner.balance()
    }

    fn append(&mut self, key: Vec<u8>, label: &str) -> PyResult<()> {
        self.inner.append(&bits(&key), label).map_err(py_err)
    }

    fn consume(&mut self, n: usize, label: &str) -> PyResult<Vec<bool>> {
        self.inner.consume(n, label).map(|b| to_list(&b)).map_err(py_err)
    }
}

#[pymodule]
fn qkd_distill(m: &Bound<'_, PyModule>) -> PyResult<()> {
    let py = m.py();
    m.add("QkdError", py.get_type::<QkdError>())?;
    m.add("ConfigError", py.get_type::<ConfigError>())?;
    m.add("SessionAbort", py.get_type::<SessionAbort>())?;
    m.add("KeyExhausted", py.get_type::<KeyExhausted>())?;
    m.add_class::<SessionResult>()?;
    m.add_class::<Aes128>()?;
    m.add_class::<KeyStore>()?;
    for f in [
        wrap_pyfunction!(preset, m)?,
        wrap_pyfunction!(preset_names, m)?,
        wrap_pyfunction!(load_config, m)?,
        wrap_pyfunction!(run_session, m)?,
        wrap_pyfunction!(simulate, m)?,
        wrap_pyfunction!(align, m)?,
        wrap_pyfunction!(estimate_qber, m)?,
        wrap_pyfunction!(output_length, m)?,
        wrap_pyfunction!(toeplitz_hash, m)?,
        wrap_pyfunction!(poly_hash, m)?,
        wrap_pyfunction!(xor_reduce, m)?,
    ] {
        m.add_function(f)?;
    }
    Ok(())
}
