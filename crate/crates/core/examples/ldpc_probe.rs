//! Convergence probe: `ldpc_probe [protograph.txt] q:punctured ...`
use std::sync::Arc;
use std::time::Instant;

use qkd_core::ldpc::{self, montecarlo, AdaptationPattern, CheckRule, Decoder, Protograph};

fn main() {
    let mut args: Vec<String> = std::env::args().skip(1).collect();
    let trials: usize = std::env::var("TRIALS").ok().and_then(|v| v.parse().ok()).unwrap_or(200);
    let base = if args.first().is_some_and(|a| a.ends_with(".txt")) {
        Protograph::parse(&std::fs::read_to_string(args.remove(0)).unwrap()).unwrap()
    } else {
        ldpc::default_protograph()
    };
    let h = Arc::new(ldpc::build_matrix(&base, ldpc::DEFAULT_LIFT, ldpc::DEFAULT_MATRIX_SEED).unwrap());
    println!(
        "n={} m={} edges={} four_cycle={}",
        h.n(),
        h.m(),
        h.edge_count(),
        h.has_four_cycle()
    );
    let pattern = AdaptationPattern::derive(&h, 1);
    for a in args {
        let (q, p) = a.split_once(':').unwrap();
        let q: f64 = q.parse().unwrap();
        let p: usize = p.parse().unwrap();
        let ra = pattern.adaptation(0, p).unwrap();
        let dec = Decoder::new(h.clone(), ra.clone(), CheckRule::SumProduct).unwrap();
        let t = Instant::now();
        let st = montecarlo::simulate(&dec, q, trials, 42, ldpc::MAX_ITERATIONS, 1).unwrap();
        let (dm, dn) = ra.effective_dims(h.m(), h.n());
        println!(
            "q={q:.4} p={p:5} dims={dm}x{dn} disclose/payload={:.3} fEC={:.3} conv={:.4} miscor={} unsound={} iters={:.1} ms/blk={:.2}",
            dm as f64 / dn as f64,
            ldpc::reconciliation_efficiency(dm, dn, q),
            st.convergence(), st.miscorrected, st.unsound, st.mean_iterations(),
            t.elapsed().as_secs_f64() * 1e3 / trials as f64
        );
    }
}
