//! Regenerates `assets/rate_table.txt` by Monte Carlo over the bundled code.
//!
//! `cargo run --release --example rate_table -- [trials] [threads] > assets/rate_table.txt`
use qkd_core::ldpc::{self, montecarlo};

fn main() {
    let mut args = std::env::args().skip(1);
    let trials: usize = args.next().and_then(|v| v.parse().ok()).unwrap_or(400);
    let threads: usize = args.next().and_then(|v| v.parse().ok()).unwrap_or(1);
    let h = ldpc::default_matrix();
    let grid: Vec<f64> = (1..=30).map(|k| k as f64 / 100.0).collect();
    let table =
        montecarlo::build_rate_table(&h, 1, &grid, 6144, 64, trials, 0.995, 0.98, 2024, threads).expect("rate table");
    print!("{}", table.to_text());
}
