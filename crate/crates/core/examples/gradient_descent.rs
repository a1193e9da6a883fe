//! Second-stage refinement on the toy vectors, both methods, showing the
//! expectation-probability trace down to the stoppage.
//!
//! cargo run --example gradient_descent [-- <lambda>]

use ppgd::dataset::{expected_vector, toy_corpus, PartyId};
use ppgd::first_stage::FirstStageVector;
use ppgd::gradient::{run_second_stage, GdConfig, GdMethod};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let lambda: f64 = match std::env::args().nth(1) {
        Some(s) => s.parse()?,
        None => 0.5,
    };
    let af = FirstStageVector::new(PartyId::A, vec![270.0, 400.0])?;
    let bf = FirstStageVector::new(PartyId::B, vec![350.0, 400.0])?;
    let e = expected_vector(&toy_corpus());

    for method in [GdMethod::Stochastic, GdMethod::Batch] {
        let stats = run_second_stage(&af, &bf, &e, &GdConfig::new(method, lambda))?;
        println!(
            "{method:<10} {} iterations, final ep {:.6}, p = {:?}",
            stats.iterations, stats.final_ep, stats.final_p.0
        );
        let head: Vec<String> = stats.ep_trace.iter().take(6).map(|x| format!("{x:.4}")).collect();
        println!("           trace {} ..", head.join(" "));
    }

    let mut reckless = GdConfig::new(GdMethod::Stochastic, lambda);
    reckless.eta_s = 0.01;
    println!("eta_s = 0.01: {}", run_second_stage(&af, &bf, &e, &reckless).unwrap_err());
    Ok(())
}
