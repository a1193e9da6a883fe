//! Both stages end to end, once over an in-process channel and once over a
//! loopback socket, from a config file.
//!
//! cargo run --example full_session [-- <config.toml>]

use std::path::PathBuf;

use ppgd::config::load_session_config;
use ppgd::simulator::{run_full_session, TransportKind};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let path = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("examples/data/employees.toml"));
    let mut cfg = load_session_config(&path)?;

    let mut results = Vec::new();
    for transport in [TransportKind::InProcess, TransportKind::Socket { port: 0 }] {
        cfg.transport = transport;
        let r = run_full_session(&cfg)?;
        println!(
            "{transport:?}: {} records, {} iterations, final ep {}, {:.2} ms, {} segments",
            r.af.len(),
            r.stats.iterations,
            r.stats.final_ep,
            r.stats.elapsed.as_secs_f64() * 1e3,
            r.alice_transcript.len()
        );
        results.push(r);
    }
    println!("transports agree: {}", results[0].same_outcome(&results[1]));
    println!("documents: {:?}", results[0].rdf_paths);
    Ok(())
}
