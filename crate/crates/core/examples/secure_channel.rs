//! Runs the location handshake over an in-process link, printing each frame
//! as it crosses the wire and the decrypted transcript on each side. Then
//! flips one ciphertext byte and shows the session abort.
//!
//! cargo run --example secure_channel

use std::thread;

use ppgd::protocol::{
    exchange_rdf_locations, in_process_pair, CipherConfig, Role, SecureChannel, Tamper, Tap, WireDirection,
};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let key = CipherConfig::default();
    let (a, b) = in_process_pair();
    let (a, wire) = Tap::new(a);

    let (ra, rb) = thread::scope(|s| {
        let bob = s.spawn(|| {
            let mut ch = SecureChannel::new(b, &key);
            exchange_rdf_locations(&mut ch, Role::Responder, "RDF_B", "/srv/b.rdf", "RDF_A").map(|_| ch.into_transcript())
        });
        let mut ch = SecureChannel::new(a, &key);
        let ra = exchange_rdf_locations(&mut ch, Role::Initiator, "RDF_A", "/srv/a.rdf", "RDF_B").map(|_| ch.into_transcript());
        (ra, bob.join().unwrap())
    });

    for (dir, bytes) in wire.lock().unwrap().iter() {
        let arrow = if *dir == WireDirection::Out { "A->B" } else { "B->A" };
        let hex: String = bytes.iter().take(16).map(|b| format!("{b:02x}")).collect();
        println!("{arrow} {:>3} bytes  {hex}..", bytes.len());
    }
    println!("\nA's transcript:\n{}", ra?);
    println!("B's transcript:\n{}", rb?);

    let (a, b) = in_process_pair();
    let a = Tamper::new(a, 2, 6);
    let (ra, rb) = thread::scope(|s| {
        let bob = s.spawn(|| {
            let mut ch = SecureChannel::new(b, &key);
            exchange_rdf_locations(&mut ch, Role::Responder, "RDF_B", "/srv/b.rdf", "RDF_A")
        });
        let mut ch = SecureChannel::new(a, &key);
        let ra = exchange_rdf_locations(&mut ch, Role::Initiator, "RDF_A", "/srv/a.rdf", "RDF_B");
        (ra, bob.join().unwrap())
    });
    println!("with a flipped byte in frame 2:");
    println!("  A: {:?}", ra.err().map(|e| e.to_string()));
    println!("  B: {:?}", rb.err().map(|e| e.to_string()));
    Ok(())
}
