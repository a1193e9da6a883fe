//! Each party driven separately over TCP, the way two processes would run
//! them. The listening side is whichever party the config makes responder.
//!
//! cargo run --example two_party_socket
//!
//! The same split is available from the binary:
//!   ppgd run --config examples/data/toy.toml --listen 127.0.0.1:7700
//!   ppgd run --config examples/data/toy.toml --connect 127.0.0.1:7700

use std::net::TcpListener;
use std::path::PathBuf;

use ppgd::config::load_session_config;
use ppgd::dataset::PartyId;
use ppgd::protocol::TcpTransport;
use ppgd::simulator::run_party_session;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("examples/data/toy.toml");
    let cfg = load_session_config(path)?;
    let alice = cfg.party_inputs(PartyId::A)?;
    let bob = cfg.party_inputs(PartyId::B)?;

    let listener = TcpListener::bind("127.0.0.1:0")?;
    let addr = listener.local_addr()?;
    println!("B listening on {addr}");

    let (ra, rb) = std::thread::scope(|s| {
        let b = s.spawn(|| {
            let t = TcpTransport::accept(&listener)?;
            run_party_session(&bob, t).map_err(Box::<dyn std::error::Error + Send + Sync>::from)
        });
        let a = TcpTransport::connect(addr)
            .map_err(Box::<dyn std::error::Error + Send + Sync>::from)
            .and_then(|t| run_party_session(&alice, t).map_err(Into::into));
        (a, b.join().unwrap())
    });
    let (ra, rb) = (ra.map_err(|e| e.to_string())?, rb.map_err(|e| e.to_string())?);
    for out in [&ra, &rb] {
        println!(
            "party {}: f = {:?}, {} iterations, final ep {}",
            out.party,
            out.first_stage.values(),
            out.stats.iterations,
            out.stats.final_ep
        );
    }
    println!("\nA's stage-1 transcript:\n{}", ra.transcript.sessions()[0]);
    Ok(())
}
