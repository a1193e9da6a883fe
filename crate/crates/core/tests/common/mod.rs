//! Independent reference computations shared by the integration tests.
//!
//! Nothing here calls into the gradient engine or the first-stage code; the
//! values are recomputed from the raw records with plain arithmetic.

#![allow(dead_code)]

use std::collections::BTreeMap;

use ppgd::dataset::{generate_synthetic, Dataset, PartitionSpec, SyntheticSpec, ValueRange};
use ppgd::gradient::GdMethod;

pub const SAMPLE_RDF: &str = include_str!("../fixtures/sample.rdf");

/// Random table over `attrs` with `n_categories` categories.
pub fn random_dataset(seed: u64, n: usize, n_categories: usize, attrs: &[&str], lo: f64, hi: f64) -> Dataset {
    generate_synthetic(&SyntheticSpec {
        seed,
        n,
        categories: (0..n_categories).map(|c| format!("C{c}")).collect(),
        ranges: attrs
            .iter()
            .map(|a| (a.to_string(), ValueRange { lo, hi }))
            .collect(),
    })
    .unwrap()
}

pub fn expected(ds: &Dataset) -> Vec<f64> {
    ds.records().iter().map(|r| r.attributes.values().sum()).collect()
}

fn value(r: &ppgd::dataset::EmployeeRecord, attr: &str) -> f64 {
    r.attributes
        .get(attr)
        .or_else(|| match attr {
            "GD" => r.attributes.get("GDP"),
            "GDP" => r.attributes.get("GD"),
            _ => None,
        })
        .copied()
        .unwrap()
}

/// f for the party holding `own`: its own values plus, for each peer
/// attribute, the category maximum raised by `df`.
pub fn first_stage(ds: &Dataset, own: &[String], peer: &[String], df: f64) -> Vec<f64> {
    let mut max: BTreeMap<(&str, &str), f64> = BTreeMap::new();
    for r in ds.records() {
        for a in peer {
            let m = max.entry((r.category.as_str(), a.as_str())).or_insert(f64::MIN);
            *m = m.max(value(r, a));
        }
    }
    ds.records()
        .iter()
        .map(|r| {
            let known: f64 = own.iter().map(|a| value(r, a)).sum();
            let inferred: f64 = peer.iter().map(|a| max[&(r.category.as_str(), a.as_str())] + df).sum();
            known + inferred
        })
        .collect()
}

pub fn first_stage_pair(ds: &Dataset, spec: &PartitionSpec, df_a: f64, df_b: f64) -> (Vec<f64>, Vec<f64>) {
    (
        first_stage(ds, &spec.party_a_attrs, &spec.party_b_attrs, df_b),
        first_stage(ds, &spec.party_b_attrs, &spec.party_a_attrs, df_a),
    )
}

/// ep for weights `wa`, `wb`: mean of the two parties' `w^2 f`, squared and
/// summed, over the squared sum of E.
pub fn ep(af: &[f64], bf: &[f64], wa: &[f64], wb: &[f64], e: &[f64]) -> f64 {
    let num: f64 = (0..af.len())
        .map(|i| {
            let p = (wa[i] * wa[i] * af[i] + wb[i] * wb[i] * bf[i]) / 2.0;
            p * p
        })
        .sum();
    let den: f64 = e.iter().map(|x| x * x).sum();
    num / den
}

/// Weights after `t` steps, from the geometric decay formula.
pub fn weights_at(f: &[f64], method: GdMethod, eta: f64, t: i32) -> Vec<f64> {
    match method {
        GdMethod::Stochastic => f.iter().map(|fi| (1.0 - 2.0 * eta * fi).powi(t)).collect(),
        GdMethod::Batch => {
            let s: f64 = f.iter().sum();
            vec![(1.0 - 2.0 * eta * s).powi(t); f.len()]
        }
    }
}

pub fn ep_at(af: &[f64], bf: &[f64], e: &[f64], method: GdMethod, eta: f64, t: i32) -> f64 {
    ep(af, bf, &weights_at(af, method, eta, t), &weights_at(bf, method, eta, t), e)
}

/// First `t` with ep(t) <= lambda, scanning up to `cap`.
pub fn iterations(af: &[f64], bf: &[f64], e: &[f64], method: GdMethod, eta: f64, lambda: f64, cap: i32) -> Option<usize> {
    (0..=cap)
        .find(|&t| ep_at(af, bf, e, method, eta, t) <= lambda)
        .map(|t| t as usize)
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    if a == b {
        0.0
    } else {
        (a - b).abs() / a.abs().max(b.abs())
    }
}

/// Initiator's stage-1 transcript, written out by hand.
pub fn golden_initiator(a_url: &str, b_url: &str) -> String {
    format!(
        "-> CON_INIT\n<- CON_INIT_ACK\n-> REQUEST RDF_B\n<- RESPONSE RDF_B|{b_url}\n\
         <- REQUEST RDF_A\n-> RESPONSE RDF_A|{a_url}\n-> CON_TERM\n<- CON_TERM_ACK\n"
    )
}

pub fn golden_responder(a_url: &str, b_url: &str) -> String {
    format!(
        "<- CON_INIT\n-> CON_INIT_ACK\n<- REQUEST RDF_B\n-> RESPONSE RDF_B|{b_url}\n\
         -> REQUEST RDF_A\n<- RESPONSE RDF_A|{a_url}\n<- CON_TERM\n-> CON_TERM_ACK\n"
    )
}

pub const SEGMENT_KEYWORDS: [&str; 6] = ["CON_INIT", "CON_INIT_ACK", "REQUEST", "RESPONSE", "CON_TERM", "CON_TERM_ACK"];

pub fn contains(haystack: &[u8], needle: &[u8]) -> bool {
    haystack.windows(needle.len()).any(|w| w == needle)
}
