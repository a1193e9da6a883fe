//! Records a session's transcripts to text, then reruns both parties against
//! the recordings with no live peer.
//!
//! cargo run --example replay

use ppgd::gradient::{GdConfig, GdMethod};
use ppgd::protocol::Transcript;
use ppgd::simulator::{replay_session, run_full_session, SessionConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = std::env::temp_dir().join("ppgd-replay");
    let cfg = SessionConfig::toy(GdConfig::new(GdMethod::Batch, 1.0), &dir);
    let live = run_full_session(&cfg)?;

    let a_path = dir.join("alice.transcript");
    let b_path = dir.join("bob.transcript");
    std::fs::write(&a_path, live.alice_transcript.to_text())?;
    std::fs::write(&b_path, live.bob_transcript.to_text())?;
    println!("recorded {} and {}", a_path.display(), b_path.display());

    let a = Transcript::from_text(&std::fs::read_to_string(&a_path)?)?;
    let b = Transcript::from_text(&std::fs::read_to_string(&b_path)?)?;
    let replayed = replay_session(&cfg, &a, &b)?;
    println!(
        "live: {} iterations, ep {}; replayed: {} iterations, ep {}; identical: {}",
        live.stats.iterations,
        live.stats.final_ep,
        replayed.stats.iterations,
        replayed.stats.final_ep,
        live.same_outcome(&replayed)
    );
    Ok(())
}
