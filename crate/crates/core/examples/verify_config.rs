//! Audits a configuration: partition, dominance, initial ep, on-disk RDF and
//! handshake order.
//!
//! cargo run --example verify_config [-- <config.toml>]

use std::path::PathBuf;

use ppgd::config::load_session_config;
use ppgd::verify::verify;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let path = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("examples/data/toy.toml"));
    let report = verify(&load_session_config(&path)?);
    print!("{report}");
    if !report.all_passed() {
        std::process::exit(1);
    }
    Ok(())
}
