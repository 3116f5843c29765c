//! Session metrics as CSV and as a plain-text table.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::pipeline::SessionMetrics;

pub const CSV_COLUMNS: [&str; 9] = [
    "scenario",
    "protocol",
    "input_bits",
    "qber",
    "instances",
    "key_bits",
    "wall_time_s",
    "key_rate_bps",
    "blocks_failed",
];

#[derive(Serialize)]
struct Row<'a> {
    scenario: &'a str,
    protocol: &'a str,
    input_bits: usize,
    qber: f64,
    instances: usize,
    key_bits: usize,
    wall_time_s: f64,
    key_rate_bps: f64,
    blocks_failed: usize,
}

impl<'a> From<&'a SessionMetrics> for Row<'a> {
    fn from(m: &'a SessionMetrics) -> Self {
        Row {
            scenario: &m.name,
            protocol: &m.protocol,
            input_bits: m.input_bits,
            qber: m.qber,
            instances: m.instances,
            key_bits: m.n_final,
            wall_time_s: m.wall_time_s,
            key_rate_bps: m.key_rate_bps,
            blocks_failed: m.blocks_failed,
        }
    }
}

pub fn to_csv(metrics: &[SessionMetrics]) -> Result<String> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
    let csv_err = |e: csv::Error| Error::Format(format!("csv: {e}"));
    w.write_record(CSV_COLUMNS).map_err(csv_err)?;
    for m in metrics {
        w.serialize(Row::from(m)).map_err(csv_err)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Format(format!("csv: {e}")))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

/// Aligned text table in the order of the CSV columns.
pub fn to_table(metrics: &[SessionMetrics]) -> String {
    let head = [
        "Scenario",
        "Protocol",
        "Input (bits)",
        "QBER",
        "Instances",
        "Key (bits)",
        "Time (s)",
        "Key rate (Kbps)",
        "Failed",
    ];
    let rows: Vec<[String; 9]> = metrics
        .iter()
        .map(|m| {
            [
                m.name.clone(),
                m.protocol.to_uppercase(),
                m.input_bits.to_string(),
                format!("{:.2}%", 100.0 * m.qber),
                m.instances.to_string(),
                m.n_final.to_string(),
                format!("{:.3}", m.wall_time_s),
                format!("{:.1}", m.key_rate_bps / 1000.0),
                m.blocks_failed.to_string(),
            ]
        })
        .collect();
    let mut width: Vec<usize> = head.iter().map(|h| h.len()).collect();
    for r in &rows {
        for (w, c) in width.iter_mut().zip(r) {
            *w = (*w).max(c.len());
        }
    }
    let line = |cells: &[String]| -> String {
        let parts: Vec<String> = cells.iter().zip(&width).map(|(c, w)| format!("{c:>w$}")).collect();
        parts.join("  ").trim_end().to_string() + "\n"
    };
    let mut out = line(&head.map(String::from));
    out += &(width.iter().map(|&w| "-".repeat(w)).collect::<Vec<_>>().join("  ") + "\n");
    for r in &rows {
        out += &line(r);
    }
    out
}
