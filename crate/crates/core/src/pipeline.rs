//! Session orchestration: sift, estimate, then map-reduce reconciliation.
//!
//! The scheduler thread owns both ends of the authenticated channel and sends
//! every message in block order. Mapper workers only compute (syndromes,
//! decoding, verification tags), so the transcript and the final key do not
//! depend on how many workers run or in which order they finish.

use std::collections::{BTreeMap, VecDeque};
use std::sync::Arc;
use std::time::{Duration, Instant};

use crossbeam_channel::{bounded, unbounded};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::auth::{channel_pair, AuthEndpoint, FrameTransport, K1Mode, K2Source, MacKeyPair, MessageType};
use crate::bits::BitBlock;
use crate::chansim::{simulate_session, ProtocolKind, Session};
use crate::config::SessionConfig;
use crate::error::{Error, Result};
use crate::estimation::{self, Decision, Disclosure, QberEstimate};
use crate::keystore::{KeyFile, KeyStore};
use crate::ldpc::{self, CheckRule, Decoder, RateAdaptation, RateTable, Syndrome};
use crate::pa::{self, PaMessage, PaPolicy, Shuffle, ToeplitzSeed};
use crate::report;
use crate::rng;
use crate::sifting::{self, Announcement, SiftReply};
use crate::verify::{self, VerifyKey, VerifyMessage, VerifyReport, CHUNKS};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StageSeeds {
    pub estimation: u64,
    pub puncture: u64,
    pub pa: u64,
}

impl Default for StageSeeds {
    fn default() -> Self {
        StageSeeds {
            estimation: 11,
            puncture: 12,
            pa: 13,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelinePlan {
    /// Mapper workers.
    pub instances: usize,
    /// Target reducer input; rounded down to whole blocks.
    pub pa_block: usize,
    pub seeds: StageSeeds,
    /// Test hook: every mapper job first sleeps a pseudo-random `0..=n` microseconds.
    #[serde(skip)]
    pub max_job_delay_us: u64,
}

impl Default for PipelinePlan {
    fn default() -> Self {
        PipelinePlan {
            instances: 1,
            pa_block: 1 << 20,
            seeds: StageSeeds::default(),
            max_job_delay_us: 0,
        }
    }
}

impl PipelinePlan {
    /// Blocks per reducer window for a given block payload.
    pub fn blocks_per_window(&self, payload: usize) -> usize {
        (self.pa_block / payload).max(1)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct StageTimings {
    pub simulate_s: f64,
    pub sift_s: f64,
    pub estimate_s: f64,
    pub reconcile_s: f64,
    pub pa_s: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SessionMetrics {
    pub name: String,
    pub protocol: String,
    pub instances: usize,
    pub alignment_offset: i64,
    pub alignment_correlation: f64,
    pub n_q: usize,
    pub classical_bits_used: usize,
    pub n_sift: usize,
    pub sample_size: usize,
    pub qber: f64,
    pub qber_bound: f64,
    /// Bits handed to reconciliation.
    pub input_bits: usize,
    pub block_payload: usize,
    pub punctured: usize,
    pub blocks: usize,
    /// Blocks with at least one discarded chunk.
    pub blocks_failed: usize,
    pub blocks_converged: usize,
    pub mean_iterations: f64,
    pub leak_ec: usize,
    pub f_ec: f64,
    pub n_corrected: usize,
    pub n_final: usize,
    /// Post-processing time, sifting through privacy amplification.
    pub wall_time_s: f64,
    pub key_rate_bps: f64,
    pub auth_messages: usize,
    pub timings: StageTimings,
}

#[derive(Clone, Debug)]
pub struct SessionOutput {
    pub alice_key: BitBlock,
    pub bob_key: BitBlock,
    pub metrics: SessionMetrics,
}

/// Cuts `sifted` into `block_size` runs indexed from zero; the last may be
/// short and is padded by the mapper.
pub fn split(sifted: &BitBlock, block_size: usize) -> Result<Vec<BitBlock>> {
    if block_size == 0 {
        return Err(Error::Config("block size must be positive".into()));
    }
    Ok((0..sifted.len().div_ceil(block_size))
        .map(|i| {
            let end = ((i + 1) * block_size).min(sifted.len());
            sifted.slice(i * block_size..end).with_index(i as u64)
        })
        .collect())
}

/// One block's verified output on one side.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BlockResult {
    pub index: u64,
    pub kept: BitBlock,
}

/// Kept bits of every block in index order, whatever order `results` is in.
pub fn combine(results: &[BlockResult]) -> Result<BitBlock> {
    let mut order: Vec<&BlockResult> = results.iter().collect();
    order.sort_by_key(|r| r.index);
    let mut out = BitBlock::zeros(0);
    for r in order {
        out.extend(&r.kept);
    }
    if out.is_empty() {
        return Err(Error::Abort {
            stage: "combine",
            reason: "no block passed verification".into(),
        });
    }
    Ok(out)
}

/// Keys both ends start with: one-time MAC keys per direction and the seeds
/// for verification keys and `k1` refresh.
fn preshared_endpoints(
    cfg: &SessionConfig,
    pool: usize,
) -> (
    AuthEndpoint<crate::auth::MemoryTransport>,
    AuthEndpoint<crate::auth::MemoryTransport>,
) {
    let seed = cfg.auth.preshared_seed;
    let keys = |label: &str| -> MacKeyPair {
        let mut r = rng::stream(seed, label);
        let k1: u128 = r.gen();
        let pool: Vec<u128> = (0..pool).map(|_| r.gen()).collect();
        let mode = if cfg.auth.countermeasure {
            K1Mode::Refresh {
                seed: rng::derive_seed(seed, label, 1),
            }
        } else {
            K1Mode::Fixed
        };
        MacKeyPair::new(k1, K2Source::Pool(pool), mode)
    };
    let session_id = rng::derive_seed(seed, &cfg.name, cfg.channel.seed);
    channel_pair(session_id, keys("mac-a2b"), keys("mac-b2a"))
}

fn verify_key_for(seed: u64, block: u64) -> VerifyKey {
    let mut b = [0u8; 32];
    rng::indexed_stream(seed, "verify-key", block).fill(&mut b);
    VerifyKey::from_bytes(&b)
}

fn encode_syndrome_msg(s: &Syndrome) -> Vec<u8> {
    let mut b = (s.block_index as u32).to_le_bytes().to_vec();
    b.extend_from_slice(&s.bits.to_bytes());
    b
}

fn decode_syndrome_msg(b: &[u8], m: usize) -> Result<Syndrome> {
    if b.len() != 4 + m.div_ceil(8) {
        return Err(Error::Format(format!("syndrome message of {} bytes", b.len())));
    }
    Ok(Syndrome {
        block_index: u32::from_le_bytes(b[..4].try_into().unwrap()) as u64,
        bits: BitBlock::from_bytes(&b[4..], m),
    })
}

/// What the mapper needs to know about the code in use.
struct MapContext {
    decoder: Decoder,
    payload_pos: Vec<usize>,
    punct_pos: Vec<usize>,
    qber: f64,
    puncture_seed: u64,
    verify_seed: u64,
    max_delay_us: u64,
}

impl MapContext {
    fn new(h: Arc<ldpc::ParityCheckMatrix>, ra: RateAdaptation, qber: f64, cfg: &SessionConfig) -> Result<Self> {
        let cols = ra.unshortened_columns(h.n());
        let mut is_punct = vec![false; h.n()];
        for &c in &ra.punctured {
            is_punct[c] = true;
        }
        let (punct_pos, payload_pos): (Vec<usize>, Vec<usize>) = (0..cols.len()).partition(|&k| is_punct[cols[k]]);
        Ok(MapContext {
            decoder: Decoder::new(h, ra, CheckRule::SumProduct)?,
            payload_pos,
            punct_pos,
            qber: qber.clamp(1e-3, 0.45),
            puncture_seed: cfg.plan.seeds.puncture,
            verify_seed: rng::derive_seed(cfg.auth.preshared_seed, "verify", 0),
            max_delay_us: cfg.plan.max_job_delay_us,
        })
    }

    fn payload(&self) -> usize {
        self.payload_pos.len()
    }

    fn word_len(&self) -> usize {
        self.payload_pos.len() + self.punct_pos.len()
    }

    fn pad(&self, block: &BitBlock) -> BitBlock {
        let mut b = block.clone();
        b.extend(&BitBlock::zeros(self.payload() - block.len()));
        b.with_index(block.index())
    }

    fn delay(&self, index: u64, label: &str) {
        if self.max_delay_us > 0 {
            let us = rng::indexed_stream(self.max_delay_us, label, index).gen_range(0..=self.max_delay_us);
            std::thread::sleep(Duration::from_micros(us));
        }
    }

    /// Alice: word with fresh bits at punctured positions, its syndrome and her tags.
    fn encode(&self, block: &BitBlock) -> Result<(Syndrome, [u128; CHUNKS])> {
        self.delay(block.index(), "delay-enc");
        let padded = self.pad(block);
        let mut word = BitBlock::zeros(self.word_len());
        for (j, &p) in self.payload_pos.iter().enumerate() {
            word.set(p, padded.get(j));
        }
        let mut r = rng::indexed_stream(self.puncture_seed, "puncture", block.index());
        for &p in &self.punct_pos {
            word.set(p, r.gen());
        }
        let h = self.decoder.matrix();
        let syn = ldpc::encode_syndrome(h, &word.with_index(block.index()), self.decoder.adaptation())?;
        let tags = verify::block_tags(&padded, &verify_key_for(self.verify_seed, block.index()))?;
        Ok((syn, tags))
    }

    /// Bob: decode against Alice's syndrome, then tag the corrected payload.
    fn decode(&self, block: &BitBlock, syn: &Syndrome) -> Result<Decoded> {
        self.delay(block.index(), "delay-dec");
        let padded = self.pad(block);
        let mut word = BitBlock::zeros(self.word_len());
        for (j, &p) in self.payload_pos.iter().enumerate() {
            word.set(p, padded.get(j));
        }
        let out = self.decoder.decode(&word, syn, self.qber, ldpc::MAX_ITERATIONS)?;
        let corrected: BitBlock = self.payload_pos.iter().map(|&p| out.corrected.get(p)).collect();
        let corrected = corrected.with_index(block.index());
        let tags = verify::block_tags(&corrected, &verify_key_for(self.verify_seed, block.index()))?;
        Ok(Decoded {
            corrected,
            converged: out.converged,
            iterations: out.iterations_used,
            tags,
        })
    }
}

struct Decoded {
    corrected: BitBlock,
    converged: bool,
    iterations: usize,
    tags: [u128; CHUNKS],
}

enum Job<'a> {
    Encode(&'a BitBlock),
    Decode(&'a BitBlock, Syndrome),
}

enum Done {
    Encoded(u64, Result<(Syndrome, [u128; CHUNKS])>),
    Decoded(u64, Result<Decoded>),
}

/// Per-block outcome of the map stage.
struct Mapped {
    alice: BlockResult,
    bob: BlockResult,
    report: VerifyReport,
    converged: bool,
    iterations: usize,
}

/// Passing chunks of the padded block, clipped to the real length.
fn kept_bits(block: &BitBlock, real_len: usize, report: &VerifyReport) -> BitBlock {
    let mut out = BitBlock::zeros(0);
    for i in 0..CHUNKS {
        if report.per_chunk[i] {
            let r = verify::chunk_range(block.len(), i);
            let r = r.start.min(real_len)..r.end.min(real_len);
            out.extend(&block.slice(r));
        }
    }
    out.with_index(block.index())
}

/// Error correction and verification of every block on `instances` workers.
fn map_blocks<T: FrameTransport>(
    ctx: &MapContext,
    alice_blocks: &[BitBlock],
    bob_blocks: &[BitBlock],
    instances: usize,
    alice_ep: &mut AuthEndpoint<T>,
    bob_ep: &mut AuthEndpoint<T>,
) -> Result<Vec<Mapped>> {
    let nb = alice_blocks.len();
    let depth = 2 * instances;
    let m = ctx.decoder.matrix().m();
    std::thread::scope(|s| -> Result<Vec<Mapped>> {
        let (job_tx, job_rx) = bounded::<(u64, Job)>(depth);
        let (done_tx, done_rx) = unbounded::<Done>();
        for _ in 0..instances {
            let (job_rx, done_tx) = (job_rx.clone(), done_tx.clone());
            s.spawn(move || {
                for (i, job) in job_rx {
                    let done = match job {
                        Job::Encode(b) => Done::Encoded(i, ctx.encode(b)),
                        Job::Decode(b, syn) => Done::Decoded(i, ctx.decode(b, &syn)),
                    };
                    if done_tx.send(done).is_err() {
                        break;
                    }
                }
            });
        }
        drop(done_tx);

        let mut out = Vec::with_capacity(nb);
        let (mut next_encode, mut next_send) = (0usize, 0usize);
        let mut in_flight = 0usize;
        let mut encoded = BTreeMap::new();
        let mut decoded = BTreeMap::new();
        let mut alice_tags = BTreeMap::new();
        let mut to_decode: VecDeque<(usize, Syndrome)> = VecDeque::new();
        while out.len() < nb {
            while in_flight < depth {
                let job = if let Some((i, syn)) = to_decode.pop_front() {
                    (i as u64, Job::Decode(&bob_blocks[i], syn))
                } else if next_encode < nb {
                    next_encode += 1;
                    ((next_encode - 1) as u64, Job::Encode(&alice_blocks[next_encode - 1]))
                } else {
                    break;
                };
                job_tx.send(job).map_err(|_| Error::ChannelClosed)?;
                in_flight += 1;
            }
            match done_rx.recv().map_err(|_| Error::ChannelClosed)? {
                Done::Encoded(i, r) => {
                    encoded.insert(i as usize, r?);
                }
                Done::Decoded(i, r) => {
                    decoded.insert(i as usize, r?);
                }
            }
            in_flight -= 1;

            while let Some((syn, tags)) = encoded.remove(&next_send) {
                alice_ep.send(MessageType::Syndrome, &encode_syndrome_msg(&syn))?;
                let got = decode_syndrome_msg(&bob_ep.recv_expect(MessageType::Syndrome)?, m)?;
                if got.block_index != next_send as u64 {
                    return Err(Error::Format(format!(
                        "syndrome for block {} out of order",
                        got.block_index
                    )));
                }
                alice_tags.insert(next_send, tags);
                to_decode.push_back((next_send, got));
                next_send += 1;
            }

            while let Some(d) = decoded.remove(&out.len()) {
                let i = out.len();
                let msg = VerifyMessage {
                    block_index: i as u32,
                    tags: alice_tags.remove(&i).expect("tags sent before decoding"),
                };
                alice_ep.send(MessageType::VerifyTags, &msg.encode())?;
                let theirs = VerifyMessage::decode(&bob_ep.recv_expect(MessageType::VerifyTags)?)?;
                let mask = verify::compare_tags(&d.tags, &theirs.tags);
                bob_ep.send(MessageType::VerifyReply, &mask.to_le_bytes())?;
                let reply = alice_ep.recv_expect(MessageType::VerifyReply)?;
                let mask_a = u16::from_le_bytes(
                    reply
                        .as_slice()
                        .try_into()
                        .map_err(|_| Error::Format("verification reply is not 2 bytes".into()))?,
                );
                let real = alice_blocks[i].len();
                let report = VerifyReport::from_mask(mask_a, ctx.payload());
                out.push(Mapped {
                    alice: BlockResult {
                        index: i as u64,
                        kept: kept_bits(&ctx.pad(&alice_blocks[i]), real, &report),
                    },
                    bob: BlockResult {
                        index: i as u64,
                        kept: kept_bits(&d.corrected, real, &VerifyReport::from_mask(mask, ctx.payload())),
                    },
                    report,
                    converged: d.converged,
                    iterations: d.iterations,
                });
            }
        }
        drop(job_tx);
        Ok(out)
    })
}

fn elapsed(t: Instant) -> f64 {
    t.elapsed().as_secs_f64()
}

fn load_table(cfg: &SessionConfig) -> Result<RateTable> {
    match &cfg.rate_table {
        None => Ok(ldpc::default_rate_table()),
        Some(p) => RateTable::parse(&std::fs::read_to_string(p)?),
    }
}

/// Simulates the quantum exchange, then distills.
pub fn run_session(cfg: &SessionConfig) -> Result<SessionOutput> {
    cfg.validate()?;
    let t = Instant::now();
    let session = simulate_session(cfg.protocol, cfg.pulse_count(), &cfg.channel)?;
    let sim = elapsed(t);
    let mut out = run_on_session(cfg, &session)?;
    out.metrics.timings.simulate_s = sim;
    Ok(out)
}

/// Distills a key from recorded detections.
pub fn run_on_session(cfg: &SessionConfig, session: &Session) -> Result<SessionOutput> {
    cfg.validate()?;
    if session.protocol != cfg.protocol {
        return Err(Error::Config(format!(
            "session holds {} data, config asks for {}",
            session.protocol, cfg.protocol
        )));
    }
    let proto = cfg.protocol;
    let table = load_table(cfg)?;
    let h = ldpc::default_matrix();
    let mut m = SessionMetrics {
        name: cfg.name.clone(),
        protocol: proto.name().into(),
        instances: cfg.plan.instances,
        ..Default::default()
    };
    let start = Instant::now();

    // Upper bound on messages per direction: a few per stage, three per block
    // of the smallest payload, one per window.
    let min_payload = h.n() - table.entries().iter().map(|e| e.f()).max().unwrap_or(0);
    let pool = 3 * session.bob.len().div_ceil(min_payload) + 64;
    let (mut alice_ep, mut bob_ep) = preshared_endpoints(cfg, pool);

    // Sifting.
    let t = Instant::now();
    let ann = Announcement::from_detections(proto, &session.bob);
    bob_ep.send(MessageType::Timestamps, &ann.encode_times())?;
    bob_ep.send(MessageType::Sifting, &sifting::encode_bits(&ann.meta))?;
    let times = Announcement::decode_times(&alice_ep.recv_expect(MessageType::Timestamps)?)?;
    let meta = sifting::decode_bits(&alice_ep.recv_expect(MessageType::Sifting)?)?;
    let al = &cfg.alignment;
    let aligned = sifting::align_sampled(&session.alice.slots(), &times, al.window, al.threshold, al.sample_slots)?;
    let (reply, alice_sifted, stats) =
        sifting::alice_sift(proto, &session.alice, &Announcement { times, meta }, aligned.offset)?;
    let reply_type = if proto == ProtocolKind::Cow {
        MessageType::DecoyPositions
    } else {
        MessageType::Sifting
    };
    alice_ep.send(reply_type, &reply.encode())?;
    let reply = SiftReply::decode(&bob_ep.recv_expect(reply_type)?)?;
    let bob_sifted = sifting::bob_sift(proto, &session.bob, &reply)?;
    m.alignment_offset = aligned.offset;
    m.alignment_correlation = aligned.correlation;
    m.n_q = stats.n_q;
    m.classical_bits_used = stats.classical_bits_used;
    m.n_sift = alice_sifted.n_sift();
    m.timings.sift_s = elapsed(t);

    // Estimation: Alice discloses a sample, Bob answers with the mismatch count.
    let t = Instant::now();
    let ec = &cfg.estimation;
    let idx = estimation::sample_indices(m.n_sift, ec.sample_fraction, cfg.plan.seeds.estimation)?;
    let disclosure = Disclosure {
        bits: alice_sifted.bits.select(&idx),
        indices: idx,
    };
    alice_ep.send(MessageType::Estimation, &disclosure.encode())?;
    let d = Disclosure::decode(&bob_ep.recv_expect(MessageType::Estimation)?)?;
    let bob_est = estimation::estimate_qber(&d.bits, &bob_sifted.bits.select(&d.indices), ec.epsilon_pe)?;
    bob_ep.send(MessageType::Estimation, &(bob_est.errors_found as u64).to_le_bytes())?;
    let errors = alice_ep.recv_expect(MessageType::Estimation)?;
    let errors = u64::from_le_bytes(
        errors
            .as_slice()
            .try_into()
            .map_err(|_| Error::Format("error count is not 8 bytes".into()))?,
    );
    let est: QberEstimate = estimation::estimate_from_count(disclosure.indices.len(), errors as usize, ec.epsilon_pe)?;
    m.sample_size = est.sample_size;
    m.qber = est.qber_hat;
    m.qber_bound = est.qber_bound;
    if estimation::abort_check(&est, ec.abort_threshold) == Decision::Abort {
        return Err(Error::Abort {
            stage: "estimation",
            reason: format!(
                "qber bound {:.4} above threshold {:.4}",
                est.qber_bound, ec.abort_threshold
            ),
        });
    }
    let cut = |k: BitBlock| match cfg.input_bits {
        Some(n) if n < k.len() => k.slice(0..n),
        _ => k,
    };
    let alice_key = cut(estimation::remove_sampled(&alice_sifted.bits, &disclosure.indices));
    let bob_key = cut(estimation::remove_sampled(&bob_sifted.bits, &d.indices));
    m.input_bits = alice_key.len();
    m.timings.estimate_s = elapsed(t);

    // Reconciliation: split, map on the workers, verify.
    let t = Instant::now();
    let ra = ldpc::select_rate(&h, est.qber_bound, &table)?;
    let disclosed = ra.disclosed_bits(h.m());
    m.punctured = ra.punctured.len();
    let ctx = MapContext::new(h.clone(), ra, est.qber_hat, cfg)?;
    let payload = ctx.payload();
    m.block_payload = payload;
    let alice_blocks = split(&alice_key, payload)?;
    let bob_blocks = split(&bob_key, payload)?;
    m.blocks = alice_blocks.len();
    let mapped = map_blocks(
        &ctx,
        &alice_blocks,
        &bob_blocks,
        cfg.plan.instances,
        &mut alice_ep,
        &mut bob_ep,
    )?;
    m.blocks_failed = mapped.iter().filter(|b| !b.report.all_passed()).count();
    m.blocks_converged = mapped.iter().filter(|b| b.converged).count();
    m.mean_iterations = mapped.iter().map(|b| b.iterations as f64).sum::<f64>() / mapped.len().max(1) as f64;
    m.n_corrected = mapped.iter().map(|b| b.alice.kept.len()).sum();
    if est.qber_hat > 0.0 {
        m.f_ec = ldpc::reconciliation_efficiency(disclosed, payload, est.qber_hat);
    }
    m.timings.reconcile_s = elapsed(t);

    // Privacy amplification per window of whole blocks.
    let t = Instant::now();
    let per_window = cfg.plan.blocks_per_window(payload);
    let (mut alice_final, mut bob_final) = (BitBlock::zeros(0), BitBlock::zeros(0));
    for (w, chunk) in mapped.chunks(per_window).enumerate() {
        let alice_in = combine(&chunk.iter().map(|b| b.alice.clone()).collect::<Vec<_>>());
        let bob_in = combine(&chunk.iter().map(|b| b.bob.clone()).collect::<Vec<_>>());
        let (Ok(alice_in), Ok(bob_in)) = (alice_in, bob_in) else {
            continue;
        };
        let contributing = chunk.iter().filter(|b| !b.alice.kept.is_empty()).count();
        let window_input: usize = chunk.iter().map(|b| alice_blocks[b.alice.index as usize].len()).sum();
        let leak_pe = if cfg.pa.charge_estimation {
            (est.sample_size as f64 * window_input as f64 / m.input_bits as f64).ceil() as usize
        } else {
            0
        };
        let policy = PaPolicy {
            epsilon_pa: cfg.pa.epsilon_pa,
            leak_ec: disclosed * contributing,
            leak_pe,
            verify_bits: cfg.pa.verify_bits_per_block * contributing,
            model: cfg.pa.model,
        };
        m.leak_ec += policy.leak_ec;
        let r = pa::output_length(alice_in.len(), est.qber_bound, &policy);
        if r == 0 {
            continue;
        }
        let seed = ToeplitzSeed::random(
            alice_in.len(),
            r,
            &mut rng::indexed_stream(cfg.plan.seeds.pa, "pa", w as u64),
        )?;
        let msg = PaMessage {
            parts: pa::parts_needed(alice_in.len(), r) as u32,
            seed,
            shuffle: if cfg.pa.shuffle {
                Shuffle::Seeded(rng::derive_seed(cfg.plan.seeds.pa, "shuffle", w as u64))
            } else {
                Shuffle::Identity
            },
        };
        alice_ep.send(MessageType::Privacy, &msg.encode())?;
        alice_final.extend(&msg.apply(&alice_in)?);
        let got = PaMessage::decode(&bob_ep.recv_expect(MessageType::Privacy)?)?;
        bob_final.extend(&got.apply(&bob_in)?);
    }
    m.timings.pa_s = elapsed(t);
    m.n_final = alice_final.len();
    m.wall_time_s = elapsed(start);
    m.key_rate_bps = m.n_final as f64 / m.wall_time_s;
    m.auth_messages = alice_ep.sent_key_ids().len() + bob_ep.sent_key_ids().len();
    if alice_ep.alarms() + bob_ep.alarms() > 0 {
        return Err(Error::Authentication("tag alarms raised during the session".into()));
    }
    if m.n_final == 0 {
        return Err(Error::Abort {
            stage: "privacy amplification",
            reason: "no window yields a positive key length".into(),
        });
    }
    Ok(SessionOutput {
        alice_key: alice_final,
        bob_key: bob_final,
        metrics: m,
    })
}

/// Writes the key files, key stores and metrics CSV named in the config.
pub fn persist(cfg: &SessionConfig, out: &SessionOutput) -> Result<()> {
    let o = &cfg.output;
    let fp = cfg.fingerprint();
    for (path, key) in [(&o.key_file, &out.alice_key), (&o.bob_key_file, &out.bob_key)] {
        if let Some(p) = path {
            KeyFile {
                fingerprint: fp,
                key: key.clone(),
            }
            .save(p)?;
        }
    }
    for (path, key) in [(&o.keystore, &out.alice_key), (&o.bob_keystore, &out.bob_key)] {
        if let Some(p) = path {
            KeyStore::open(p)?.append(key, &format!("{} {fp:016x}", cfg.name))?;
        }
    }
    if let Some(p) = &o.metrics_csv {
        std::fs::write(p, report::to_csv(std::slice::from_ref(&out.metrics))?)?;
    }
    Ok(())
}
