//! Splits the toy corpus vertically and prints each party's view next to the
//! expected vector only the harness can see.
//!
//! cargo run --example partition

use ppgd::dataset::{expected_vector, partition_vertical, toy_corpus, toy_partition};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let ds = toy_corpus();
    let (alice, bob) = partition_vertical(&ds, &toy_partition())?;

    for view in [&alice, &bob] {
        println!("party {} holds {:?}", view.party, view.attributes);
        for r in &view.records {
            println!("  emp {} [{}] {:?} known sum {}", r.emp_id, r.category, r.attributes, r.known_sum());
        }
    }
    println!("expected vector E = {:?}", expected_vector(&ds).values);
    Ok(())
}
