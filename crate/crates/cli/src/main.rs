//! `qkd-distill`: simulate sessions, distill keys, sweep scenarios and use the
//! keys for file encryption.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use qkd_core::aesapp::{Aes128, Container};
use qkd_core::chansim::{simulate_session, ProtocolKind, Session};
use qkd_core::config::{self, load_config, SessionConfig};
use qkd_core::keystore::KeyStore;
use qkd_core::pipeline::{self, SessionMetrics};
use qkd_core::{report, Error};

#[derive(Parser)]
#[command(name = "qkd-distill", version, about = "Key distillation for discrete-variable QKD")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(clap::Args)]
struct ConfigArgs {
    /// Session configuration (JSON).
    #[arg(long, conflicts_with = "preset")]
    config: Option<PathBuf>,
    /// Built-in scenario: bb84_low_qber, bbm92_mid_qber, cow_high_qber, stress_25.
    #[arg(long)]
    preset: Option<String>,
    #[arg(long)]
    instances: Option<usize>,
    #[arg(long)]
    input_bits: Option<usize>,
}

impl ConfigArgs {
    fn load(&self) -> Result<SessionConfig, Error> {
        let mut cfg = match (&self.config, &self.preset) {
            (Some(p), _) => load_config(p)?,
            (None, Some(name)) => {
                config::preset(name).ok_or_else(|| Error::Config(format!("unknown preset {name:?}")))?
            }
            (None, None) => SessionConfig::default(),
        };
        if let Some(p) = self.instances {
            cfg.plan.instances = p;
        }
        if let Some(n) = self.input_bits {
            cfg.input_bits = Some(n);
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Subcommand)]
enum Cmd {
    /// Simulate the quantum exchange and optionally save it.
    Simulate {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        protocol: Option<ProtocolKind>,
        /// Emitted pulses; derived from the input size when absent.
        #[arg(long)]
        pulses: Option<usize>,
        #[arg(long)]
        emit_session: Option<PathBuf>,
    },
    /// Distill a key from a fresh simulation or a saved session.
    Run {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Session file written by `simulate --emit-session`.
        #[arg(long)]
        session: Option<PathBuf>,
        /// Append the metrics as one JSON line.
        #[arg(long)]
        metrics_out: Option<PathBuf>,
        /// Print the metrics as JSON instead of a table.
        #[arg(long)]
        json: bool,
    },
    /// Every preset at one, three and four instances.
    Sweep {
        /// Overrides every scenario's input size, for quick runs.
        #[arg(long)]
        input_bits: Option<usize>,
        #[arg(long)]
        csv: Option<PathBuf>,
        #[arg(long)]
        metrics_out: Option<PathBuf>,
    },
    /// AES-128-CTR with a key drawn from the store.
    Encrypt {
        #[arg(long)]
        keystore: PathBuf,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
    },
    /// Reverses `encrypt`, drawing the matching key from the peer's store.
    Decrypt {
        #[arg(long)]
        keystore: PathBuf,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
    },
    /// Tabulate metrics written by `run` or `sweep`.
    Report {
        /// JSON-lines metrics files.
        inputs: Vec<PathBuf>,
        #[arg(long)]
        csv: Option<PathBuf>,
    },
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) => 2,
        Error::Abort { .. }
        | Error::Authentication(_)
        | Error::Alignment { .. }
        | Error::NoCode(_)
        | Error::EmptySample => 3,
        Error::KeyExhausted { .. } => 4,
        _ => 1,
    }
}

fn append_metrics(path: &Path, m: &SessionMetrics) -> Result<(), Error> {
    let mut f = std::fs::OpenOptions::new().create(true).append(true).open(path)?;
    writeln!(f, "{}", serde_json::to_string(m).expect("metrics serialize"))?;
    Ok(())
}

fn aes_from_store(path: &Path, label: &str) -> Result<Aes128, Error> {
    let bits = KeyStore::open(path)?.consume(128, label)?;
    let key: [u8; 16] = bits.to_bytes().try_into().expect("128 bits");
    Ok(Aes128::new(&key))
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.cmd {
        Cmd::Simulate {
            cfg,
            protocol,
            pulses,
            emit_session,
        } => {
            let mut c = cfg.load()?;
            if let Some(p) = protocol {
                c.protocol = p;
            }
            c.pulses = pulses.or(c.pulses);
            let s = simulate_session(c.protocol, c.pulse_count(), &c.channel)?;
            println!(
                "{}: {} pulses, {} Alice records, {} detections at Bob",
                c.protocol,
                c.pulse_count(),
                s.alice.len(),
                s.bob.len()
            );
            if let Some(p) = emit_session {
                s.save(&p)?;
                println!("session written to {}", p.display());
            }
        }
        Cmd::Run {
            cfg,
            session,
            metrics_out,
            json,
        } => {
            let c = cfg.load()?;
            let out = match session {
                Some(p) => pipeline::run_on_session(&c, &Session::load(&p)?)?,
                None => pipeline::run_session(&c)?,
            };
            if out.alice_key != out.bob_key {
                return Err(Error::Abort {
                    stage: "final check",
                    reason: "Alice and Bob keys differ".into(),
                });
            }
            pipeline::persist(&c, &out)?;
            if let Some(p) = metrics_out {
                append_metrics(&p, &out.metrics)?;
            }
            if json {
                println!(
                    "{}",
                    serde_json::to_string_pretty(&out.metrics).expect("metrics serialize")
                );
            } else {
                print!("{}", report::to_table(std::slice::from_ref(&out.metrics)));
            }
        }
        Cmd::Sweep {
            input_bits,
            csv,
            metrics_out,
        } => {
            let mut rows = Vec::new();
            let mut aborted = 0;
            for mut c in config::sweep_scenarios() {
                if input_bits.is_some() {
                    c.input_bits = input_bits;
                }
                match pipeline::run_session(&c) {
                    Ok(out) => {
                        eprintln!(
                            "{}: {} key bits in {:.2} s",
                            c.name, out.metrics.n_final, out.metrics.wall_time_s
                        );
                        if let Some(p) = &metrics_out {
                            append_metrics(p, &out.metrics)?;
                        }
                        rows.push(out.metrics);
                    }
                    Err(e) => {
                        eprintln!("{}: {e}", c.name);
                        aborted += 1;
                    }
                }
            }
            print!("{}", report::to_table(&rows));
            if let Some(p) = csv {
                std::fs::write(p, report::to_csv(&rows)?)?;
            }
            if aborted > 0 {
                return Err(Error::Abort {
                    stage: "sweep",
                    reason: format!("{aborted} scenarios aborted"),
                });
            }
        }
        Cmd::Encrypt {
            keystore,
            input,
            output,
        } => {
            let aes = aes_from_store(&keystore, &format!("encrypt {}", input.display()))?;
            let c = Container::seal(&aes, rand::random(), &std::fs::read(&input)?);
            std::fs::write(&output, c.to_bytes())?;
        }
        Cmd::Decrypt {
            keystore,
            input,
            output,
        } => {
            let c = Container::from_bytes(&std::fs::read(&input)?)?;
            let aes = aes_from_store(&keystore, &format!("decrypt {}", input.display()))?;
            std::fs::write(&output, c.open(&aes))?;
        }
        Cmd::Report { inputs, csv } => {
            let mut rows: Vec<SessionMetrics> = Vec::new();
            for p in &inputs {
                for line in std::fs::read_to_string(p)?.lines().filter(|l| !l.trim().is_empty()) {
                    rows.push(serde_json::from_str(line).map_err(|e| Error::Format(format!("{}: {e}", p.display())))?);
                }
            }
            print!("{}", report::to_table(&rows));
            if let Some(p) = csv {
                std::fs::write(p, report::to_csv(&rows)?)?;
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
