//! Invariant audit for a session configuration.

use std::fmt;

use crate::dataset::{partition_vertical, Dataset, PartyId};
use crate::first_stage::{first_stage_predict, FirstStageVector};
use crate::gradient::{combine, expectation_probability, predict, GdError, WeightVector};
use crate::protocol::{exchange_rdf_locations, in_process_pair, Direction, Role, SecureChannel, Segment, Transcript};
use crate::rdf::{generate_rdf, parse_rdf_xml, serialize_rdf_xml, OntologyModel, RdfDocument};
use crate::simulator::{write_file, SessionConfig};

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct VerifyReport {
    pub checks: Vec<Check>,
}

impl VerifyReport {
    pub fn all_passed(&self) -> bool {
        !self.checks.is_empty() && self.checks.iter().all(|c| c.passed)
    }

    pub fn get(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }

    fn push(&mut self, name: &str, result: Result<String, String>) {
        let (passed, detail) = match result {
            Ok(d) => (true, d),
            Err(d) => (false, d),
        };
        self.checks.push(Check {
            name: name.to_string(),
            passed,
            detail,
        });
    }
}

impl fmt::Display for VerifyReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for c in &self.checks {
            writeln!(f, "{} {:<16} {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail)?;
        }
        Ok(())
    }
}

/// Runs every check it can. A failure that makes later checks meaningless
/// (unreadable dataset, bad partition) ends the report early.
pub fn verify(cfg: &SessionConfig) -> VerifyReport {
    let mut report = VerifyReport::default();
    let ds = match cfg.dataset.load() {
        Ok(ds) => ds,
        Err(e) => {
            report.push("dataset", Err(e.to_string()));
            return report;
        }
    };
    report.push("dataset", Ok(format!("{} records, {} attributes", ds.len(), ds.schema().len())));

    if let Err(e) = check_partition(cfg, &ds) {
        report.push("partition", Err(e));
        return report;
    }
    report.push("partition", Ok("every attribute held by exactly one party".into()));

    let ont = OntologyModel::for_attributes(ds.schema())
        .with_namespace(&cfg.namespace)
        .with_subject_base(&cfg.subject_base);
    let (a, b) = partition_vertical(&ds, &cfg.partition).expect("partition checked");
    let docs = [&a, &b].map(|v| generate_rdf(v, &ont, &cfg.disguise(v.party)));
    let (doc_a, doc_b) = match docs {
        [Ok(da), Ok(db)] => (da, db),
        [Err(e), _] | [_, Err(e)] => {
            report.push("rdf generation", Err(e.to_string()));
            return report;
        }
    };

    let e = crate::dataset::expected_vector(&ds);
    let fs = (
        first_stage_predict(&a, &doc_b, &b.attributes),
        first_stage_predict(&b, &doc_a, &a.attributes),
    );
    match fs {
        (Ok(af), Ok(bf)) => {
            report.push("dominance", check_dominance(&[&af, &bf], &e.values));
            report.push("initial ep", check_initial_ep(&af, &bf, &e));
        }
        (Err(err), _) | (_, Err(err)) => report.push("dominance", Err(err.to_string())),
    }

    for (party, doc) in [(PartyId::A, &doc_a), (PartyId::B, &doc_b)] {
        report.push(&format!("rdf round trip {party}"), check_round_trip(cfg, party, doc));
    }
    report.push("transcript order", check_transcript_order(cfg));
    report
}

fn check_partition(cfg: &SessionConfig, ds: &Dataset) -> Result<(), String> {
    let (a, b) = partition_vertical(ds, &cfg.partition).map_err(|e| e.to_string())?;
    for (i, rec) in ds.records().iter().enumerate() {
        let (ra, rb) = (&a.records[i], &b.records[i]);
        if ra.emp_id != rec.emp_id || rb.emp_id != rec.emp_id {
            return Err(format!("row {i}: views are not aligned"));
        }
        if ra.attributes.len() + rb.attributes.len() != rec.attributes.len() {
            return Err(format!("employee {}: attributes lost or duplicated", rec.emp_id));
        }
        let whole = rec.attributes.values().sum::<f64>();
        let parts = ra.known_sum() + rb.known_sum();
        if (whole - parts).abs() > 1e-9 * whole.abs().max(1.0) {
            return Err(format!("employee {}: views sum to {parts}, record to {whole}", rec.emp_id));
        }
    }
    Ok(())
}

fn check_dominance(fs: &[&FirstStageVector], e: &[f64]) -> Result<String, String> {
    let mut equal = 0;
    for f in fs {
        for (i, (&fi, &ei)) in f.values().iter().zip(e).enumerate() {
            if fi < ei {
                return Err(format!("party {}: f[{i}] = {fi} < E[{i}] = {ei}", f.party));
            }
            if fi == ei {
                equal += 1;
            }
        }
    }
    Ok(match equal {
        0 => "f > E everywhere".into(),
        n => format!("f >= E, {n} entries with equality"),
    })
}

fn check_initial_ep(
    af: &FirstStageVector,
    bf: &FirstStageVector,
    e: &crate::dataset::ExpectedVector,
) -> Result<String, String> {
    let ep0 = (|| -> Result<f64, GdError> {
        let w = WeightVector::ones(af.len());
        expectation_probability(&combine(&predict(&w, af.values())?, &predict(&w, bf.values())?)?, e)
    })()
    .map_err(|err| err.to_string())?;
    if ep0 >= 1.0 {
        Ok(format!("ep0 = {ep0}"))
    } else {
        Err(format!("ep0 = {ep0} < 1"))
    }
}

/// Compares the document on disk (writing it first if absent) with a fresh one.
fn check_round_trip(cfg: &SessionConfig, party: PartyId, doc: &RdfDocument) -> Result<String, String> {
    let path = cfg.rdf_path(party);
    let fresh = serialize_rdf_xml(doc);
    let written = !path.exists();
    if written {
        write_file(&path, &fresh).map_err(|e| e.to_string())?;
    }
    let bytes = std::fs::read(&path).map_err(|e| format!("{}: {e}", path.display()))?;
    let parsed = parse_rdf_xml(&bytes).map_err(|e| format!("{}: {e}", path.display()))?;
    if &parsed != doc {
        return Err(format!("{} does not match the regenerated document", path.display()));
    }
    Ok(format!(
        "{} {} ({} triples)",
        path.display(),
        if written { "written and re-read" } else { "matches" },
        doc.triples().count()
    ))
}

fn expected_stage1(role: Role, me: PartyId, my_url: &str, peer_url: &str) -> Vec<(Direction, Segment)> {
    use Direction::{Received as In, Sent as Out};
    let peer = me.peer();
    match role {
        Role::Initiator => vec![
            (Out, Segment::ConInit),
            (In, Segment::ConInitAck),
            (Out, Segment::request(peer.rdf_name())),
            (In, Segment::response(peer.rdf_name(), peer_url)),
            (In, Segment::request(me.rdf_name())),
            (Out, Segment::response(me.rdf_name(), my_url)),
            (Out, Segment::ConTerm),
            (In, Segment::ConTermAck),
        ],
        Role::Responder => vec![
            (In, Segment::ConInit),
            (Out, Segment::ConInitAck),
            (In, Segment::request(me.rdf_name())),
            (Out, Segment::response(me.rdf_name(), my_url)),
            (Out, Segment::request(peer.rdf_name())),
            (In, Segment::response(peer.rdf_name(), peer_url)),
            (In, Segment::ConTerm),
            (Out, Segment::ConTermAck),
        ],
    }
}

fn check_transcript_order(cfg: &SessionConfig) -> Result<String, String> {
    let url = |p: PartyId| cfg.rdf_path(p).display().to_string();
    let (ta, tb) = in_process_pair();
    let run = |party: PartyId, t| -> Result<Transcript, String> {
        let mut ch = SecureChannel::new(t, &cfg.cipher);
        exchange_rdf_locations(&mut ch, cfg.role_of(party), party.rdf_name(), &url(party), party.peer().rdf_name())
            .map_err(|e| e.to_string())?;
        Ok(ch.into_transcript())
    };
    let (ra, rb) = std::thread::scope(|s| {
        let b = s.spawn(|| run(PartyId::B, tb));
        (run(PartyId::A, ta), b.join().expect("peer thread panicked"))
    });
    for (party, got) in [(PartyId::A, ra?), (PartyId::B, rb?)] {
        let want = expected_stage1(cfg.role_of(party), party, &url(party), &url(party.peer()));
        if got.entries != want {
            return Err(format!("party {party} transcript:\n{got}"));
        }
    }
    Ok("CON_INIT .. CON_TERM_ACK in order on both sides".into())
}
