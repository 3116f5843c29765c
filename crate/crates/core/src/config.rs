//! Session configuration: JSON with defaults, unknown keys rejected, and the
//! scenario presets.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::chansim::{ChannelParams, ProtocolKind};
use crate::error::{Error, Result};
use crate::estimation;
use crate::pa::KeyLengthModel;
use crate::pipeline::PipelinePlan;
use crate::sifting;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EstimationConfig {
    pub sample_fraction: f64,
    pub epsilon_pe: f64,
    pub abort_threshold: f64,
}

impl Default for EstimationConfig {
    fn default() -> Self {
        EstimationConfig {
            sample_fraction: estimation::DEFAULT_SAMPLE_FRACTION,
            epsilon_pe: estimation::DEFAULT_EPSILON_PE,
            abort_threshold: estimation::DEFAULT_ABORT_THRESHOLD,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AlignmentConfig {
    pub window: u64,
    pub threshold: f64,
    pub sample_slots: u64,
}

impl Default for AlignmentConfig {
    fn default() -> Self {
        AlignmentConfig {
            window: sifting::DEFAULT_WINDOW,
            threshold: sifting::DEFAULT_THRESHOLD,
            sample_slots: sifting::DEFAULT_ALIGN_SAMPLE,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PaConfig {
    pub epsilon_pa: f64,
    pub model: KeyLengthModel,
    /// Charged once per block that contributes verified bits.
    pub verify_bits_per_block: usize,
    /// Charge the estimation sample against each window in proportion to its size.
    pub charge_estimation: bool,
    /// Permute the reconciled key before hashing.
    pub shuffle: bool,
}

impl Default for PaConfig {
    fn default() -> Self {
        PaConfig {
            epsilon_pa: 1e-10,
            model: KeyLengthModel::default(),
            verify_bits_per_block: 128,
            charge_estimation: true,
            shuffle: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AuthConfig {
    /// Refresh `k1` for every message instead of keeping it fixed.
    pub countermeasure: bool,
    /// Seed of the pre-shared key material both ends start with.
    pub preshared_seed: u64,
}

impl Default for AuthConfig {
    fn default() -> Self {
        AuthConfig {
            countermeasure: true,
            preshared_seed: 0x0a17,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    /// Alice's final key.
    pub key_file: Option<PathBuf>,
    pub bob_key_file: Option<PathBuf>,
    pub metrics_csv: Option<PathBuf>,
    /// Key stores the final keys are appended to.
    pub keystore: Option<PathBuf>,
    pub bob_keystore: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SessionConfig {
    pub name: String,
    pub protocol: ProtocolKind,
    pub channel: ChannelParams,
    /// Emitted pulses; derived from `input_bits` when absent.
    pub pulses: Option<usize>,
    /// Bits entering reconciliation after the estimation sample is removed.
    pub input_bits: Option<usize>,
    pub estimation: EstimationConfig,
    pub alignment: AlignmentConfig,
    /// Rate table file; the bundled table when absent.
    pub rate_table: Option<PathBuf>,
    pub pa: PaConfig,
    pub auth: AuthConfig,
    pub plan: PipelinePlan,
    pub output: OutputConfig,
}

impl Default for SessionConfig {
    fn default() -> Self {
        SessionConfig {
            name: "session".into(),
            protocol: ProtocolKind::Bb84,
            channel: ChannelParams::default(),
            pulses: None,
            input_bits: Some(100_000),
            estimation: EstimationConfig::default(),
            alignment: AlignmentConfig::default(),
            rate_table: None,
            pa: PaConfig::default(),
            auth: AuthConfig::default(),
            plan: PipelinePlan::default(),
            output: OutputConfig::default(),
        }
    }
}

/// Expected sifted bits per emitted pulse.
fn sift_yield(proto: ProtocolKind, ch: &ChannelParams) -> f64 {
    let eta = ch.detection_probability();
    match proto {
        ProtocolKind::Bb84 => eta / 2.0,
        ProtocolKind::Bbm92 => eta * ch.detector_efficiency / 2.0,
        ProtocolKind::Cow => eta * (1.0 - ch.decoy_fraction) * (1.0 - ch.monitor_fraction),
    }
}

impl SessionConfig {
    /// Pulses to simulate: explicit, or enough for `input_bits` with margin.
    pub fn pulse_count(&self) -> usize {
        if let Some(p) = self.pulses {
            return p;
        }
        let want = self.input_bits.unwrap_or(100_000) as f64 / (1.0 - self.estimation.sample_fraction);
        let per_pulse = sift_yield(self.protocol, &self.channel);
        (want / per_pulse * 1.05 + 20_000.0).ceil() as usize
    }

    /// Every semantic violation, joined.
    pub fn validate(&self) -> Result<()> {
        let mut bad = Vec::new();
        if let Err(Error::Config(e)) = self.channel.validate() {
            bad.extend(e.split("; ").map(|s| format!("channel.{s}")));
        }
        let e = &self.estimation;
        if !(e.sample_fraction > 0.0 && e.sample_fraction < 1.0) {
            bad.push(format!(
                "estimation.sample_fraction {} not in (0, 1)",
                e.sample_fraction
            ));
        }
        if !(e.epsilon_pe > 0.0 && e.epsilon_pe < 1.0) {
            bad.push(format!("estimation.epsilon_pe {} not in (0, 1)", e.epsilon_pe));
        }
        if !(e.abort_threshold > 0.0 && e.abort_threshold < 0.5) {
            bad.push(format!(
                "estimation.abort_threshold {} not in (0, 0.5)",
                e.abort_threshold
            ));
        }
        if !(self.alignment.threshold > -1.0 && self.alignment.threshold <= 1.0) {
            bad.push(format!(
                "alignment.threshold {} not in (-1, 1]",
                self.alignment.threshold
            ));
        }
        if self.alignment.sample_slots == 0 {
            bad.push("alignment.sample_slots must be positive".into());
        }
        if !(self.pa.epsilon_pa > 0.0 && self.pa.epsilon_pa < 1.0) {
            bad.push(format!("pa.epsilon_pa {} not in (0, 1)", self.pa.epsilon_pa));
        }
        if self.plan.instances == 0 {
            bad.push("plan.instances must be at least 1".into());
        }
        if self.plan.pa_block == 0 {
            bad.push("plan.pa_block must be positive".into());
        }
        if self.pulses == Some(0) {
            bad.push("pulses must be positive".into());
        }
        if self.input_bits == Some(0) {
            bad.push("input_bits must be positive".into());
        }
        if bad.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(bad.join("; ")))
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let value: Value = serde_json::from_str(text).map_err(|e| Error::Config(format!("invalid JSON: {e}")))?;
        let known = serde_json::to_value(SessionConfig::default()).expect("default config serializes");
        let mut bad = Vec::new();
        unknown_keys(&value, &known, "", &mut bad);
        if !bad.is_empty() {
            return Err(Error::Config(bad.join("; ")));
        }
        let cfg: SessionConfig = serde_json::from_value(value).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Fingerprint of the full configuration, seeds included.
    pub fn fingerprint(&self) -> u64 {
        crate::keystore::fingerprint(serde_json::to_string(self).expect("config serializes").as_bytes())
    }
}

/// Keys of `v` absent from the matching object in `known`, as dotted paths.
fn unknown_keys(v: &Value, known: &Value, path: &str, out: &mut Vec<String>) {
    let (Value::Object(vm), Value::Object(km)) = (v, known) else {
        return;
    };
    for (k, sub) in vm {
        let p = if path.is_empty() {
            k.clone()
        } else {
            format!("{path}.{k}")
        };
        match km.get(k) {
            None => out.push(format!("unknown field `{p}`")),
            Some(ks) => unknown_keys(sub, ks, &p, out),
        }
    }
}

pub fn load_config(path: &Path) -> Result<SessionConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    SessionConfig::from_json(&text).map_err(|e| match e {
        Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
        other => other,
    })
}

/// The four rows of the scenario matrix at four instances.
pub const PRESET_NAMES: [&str; 4] = ["bb84_low_qber", "bbm92_mid_qber", "cow_high_qber", "stress_25"];

/// Input sizes used with one, three and four instances.
pub const SWEEP_INPUTS: [(usize, usize); 3] = [(1, 1_007_616), (3, 1_007_616), (4, 983_040)];

pub fn preset(name: &str) -> Option<SessionConfig> {
    let (protocol, qber) = match name {
        "bb84_low_qber" => (ProtocolKind::Bb84, 0.0263),
        "bbm92_mid_qber" => (ProtocolKind::Bbm92, 0.0903),
        "cow_high_qber" => (ProtocolKind::Cow, 0.2140),
        "stress_25" => (ProtocolKind::Bb84, 0.25),
        _ => return None,
    };
    let mut cfg = SessionConfig {
        name: name.into(),
        protocol,
        input_bits: Some(983_040),
        ..Default::default()
    };
    cfg.channel.flip_probability = qber;
    cfg.channel.clock_offset = 137;
    cfg.plan.instances = 4;
    if name == "stress_25" {
        // A smaller sample keeps the estimation charge inside the 512 net bits
        // a block carries; the threshold sits on the last usable code row.
        cfg.estimation.sample_fraction = 0.04;
        cfg.estimation.abort_threshold = 0.27;
    }
    Some(cfg)
}

/// Every preset at every instance count: twelve sessions.
pub fn sweep_scenarios() -> Vec<SessionConfig> {
    let mut out = Vec::new();
    for name in PRESET_NAMES {
        for (instances, input) in SWEEP_INPUTS {
            let mut cfg = preset(name).expect("known preset");
            cfg.name = format!("{name}_p{instances}");
            cfg.plan.instances = instances;
            cfg.input_bits = Some(input);
            out.push(cfg);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_file_gets_defaults() {
        let cfg = SessionConfig::from_json(r#"{"protocol": "cow"}"#).unwrap();
        assert_eq!(cfg.protocol, ProtocolKind::Cow);
        assert_eq!(cfg.estimation, EstimationConfig::default());
        assert_eq!(cfg.plan, PipelinePlan::default());
        let empty = SessionConfig::from_json("{}").unwrap();
        assert_eq!(empty, SessionConfig::default());
    }

    #[test]
    fn unknown_keys_are_all_named() {
        let err = SessionConfig::from_json(r#"{"protcol": "cow", "channel": {"seed": 2, "lossy": true}}"#).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("`protcol`"), "{msg}");
        assert!(msg.contains("`channel.lossy`"), "{msg}");
    }

    #[test]
    fn every_violation_listed() {
        let err = SessionConfig::from_json(
            r#"{"channel": {"transmissivity": 2.0, "flip_probability": 0.7},
                "estimation": {"sample_fraction": 0}, "plan": {"instances": 0}}"#,
        )
        .unwrap_err()
        .to_string();
        for part in ["transmissivity", "flip_probability", "sample_fraction", "instances"] {
            assert!(err.contains(part), "{part}: {err}");
        }
    }

    #[test]
    fn presets_roundtrip_and_match_rows() {
        let p = preset("bb84_low_qber").unwrap();
        assert_eq!((p.plan.instances, p.input_bits), (4, Some(983_040)));
        for name in PRESET_NAMES {
            let cfg = preset(name).unwrap();
            assert_eq!(SessionConfig::from_json(&cfg.to_json()).unwrap(), cfg);
        }
        assert!(preset("nope").is_none());
        let sweep = sweep_scenarios();
        assert_eq!(sweep.len(), PRESET_NAMES.len() * SWEEP_INPUTS.len());
        let names: std::collections::HashSet<_> = sweep.iter().map(|c| c.name.clone()).collect();
        assert_eq!(names.len(), 12);
    }

    #[test]
    fn bundled_preset_files_match() {
        let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../presets");
        for name in PRESET_NAMES {
            let cfg = load_config(&dir.join(format!("{name}.json"))).unwrap();
            assert_eq!(cfg, preset(name).unwrap(), "{name}");
        }
    }

    #[test]
    fn pulse_count_covers_input() {
        for name in PRESET_NAMES {
            let cfg = preset(name).unwrap();
            let expected_sift = cfg.pulse_count() as f64 * sift_yield(cfg.protocol, &cfg.channel);
            let need = cfg.input_bits.unwrap() as f64 / (1.0 - cfg.estimation.sample_fraction);
            assert!(expected_sift > need * 1.04, "{name}");
        }
    }
}
