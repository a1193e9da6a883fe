//! Builds each party's disguised RDF document, prints it, and shows what the
//! peer can infer from it.
//!
//! cargo run --example rdf_metadata [-- <df>]

use ppgd::dataset::{partition_vertical, toy_corpus, toy_partition};
use ppgd::first_stage::first_stage_predict;
use ppgd::rdf::{category_extrema, generate_rdf, parse_rdf_xml, serialize_rdf_xml, DisguisePolicy, OntologyModel};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let df: f64 = match std::env::args().nth(1) {
        Some(s) => s.parse()?,
        None => DisguisePolicy::DEFAULT_DF,
    };
    let ds = toy_corpus();
    let (alice, bob) = partition_vertical(&ds, &toy_partition())?;
    let ontology = OntologyModel::for_attributes(ds.schema());
    let policy = DisguisePolicy::new(df)?;

    for (cat, attr, ext) in category_extrema(&bob).iter() {
        println!("B {cat}/{attr}: min {} max {}", ext.min, ext.max);
    }

    let doc = generate_rdf(&bob, &ontology, &policy)?;
    let xml = serialize_rdf_xml(&doc);
    println!("\n{}", String::from_utf8_lossy(&xml));

    let parsed = parse_rdf_xml(&xml)?;
    assert_eq!(parsed, doc);
    let af = first_stage_predict(&alice, &parsed, &bob.attributes)?;
    println!("A's first-stage vector with df={df}: {:?}", af.values());
    Ok(())
}
