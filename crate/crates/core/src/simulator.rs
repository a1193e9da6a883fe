//! End-to-end two-party sessions.
//!
//! Both parties run as separate threads that share nothing but a transport.
//! Each one publishes its disguised RDF document, swaps document locations,
//! computes its first-stage vector, then runs the refinement loop while
//! swapping prediction vectors every iteration. The expected vector is
//! handed to both parties by the harness, which is the only code that sees
//! the full dataset.

use std::fmt;
use std::net::{Ipv4Addr, TcpListener};
use std::path::{Path, PathBuf};

use base64::Engine as _;
use thiserror::Error;

use crate::dataset::{
    expected_vector, generate_synthetic, load_csv, partition_vertical, toy_corpus, toy_partition, Dataset,
    DatasetError, ExpectedVector, PartitionSpec, PartitionedView, PartyId, SyntheticSpec,
};
use crate::first_stage::{first_stage_predict, FirstStageError, FirstStageVector};
use crate::gradient::{run_party, GdConfig, GdError, PredictionVector, RunStats};
use crate::protocol::{
    exchange_rdf_locations, exchange_vectors, in_process_pair, CipherConfig, ProtocolError, ReplayTransport, Role,
    SecureChannel, TcpTransport, Transcript, Transport,
};
use crate::rdf::{
    generate_rdf, parse_rdf_xml, serialize_rdf_xml, DisguisePolicy, OntologyModel, RdfError, DEFAULT_SUBJECT_BASE,
    ONTOLOGY_NAMESPACE,
};

const DATA_URI_PREFIX: &str = "data:application/rdf+xml;base64,";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Setup,
    Stage1,
    Stage2,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Stage::Setup => "setup",
            Stage::Stage1 => "first stage",
            Stage::Stage2 => "second stage",
        })
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Failure {
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Rdf(#[from] RdfError),
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
    #[error(transparent)]
    FirstStage(#[from] FirstStageError),
    #[error(transparent)]
    Gradient(#[from] GdError),
    #[error("{0}")]
    Io(String),
    #[error("parties disagree: {0}")]
    Inconsistent(String),
}

#[derive(Debug, Error, Clone, PartialEq)]
#[error("{stage}{}: {failure}", party.map(|p| format!(" (party {p})")).unwrap_or_default())]
pub struct SessionError {
    pub stage: Stage,
    pub party: Option<PartyId>,
    pub failure: Failure,
}

impl SessionError {
    fn new(stage: Stage, party: Option<PartyId>, failure: impl Into<Failure>) -> Self {
        SessionError {
            stage,
            party,
            failure: failure.into(),
        }
    }

    fn is_transport(&self) -> bool {
        matches!(self.failure, Failure::Protocol(ProtocolError::Transport(_)))
            || matches!(&self.failure, Failure::Gradient(GdError::Exchange(m)) if m.starts_with("transport error"))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum DatasetSource {
    /// The two-record toy corpus.
    Toy,
    Csv(PathBuf),
    Synthetic(SyntheticSpec),
}

impl DatasetSource {
    pub fn load(&self) -> Result<Dataset, DatasetError> {
        match self {
            DatasetSource::Toy => Ok(toy_corpus()),
            DatasetSource::Csv(p) => load_csv(p),
            DatasetSource::Synthetic(spec) => generate_synthetic(spec),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TransportKind {
    InProcess,
    /// Loopback TCP; port 0 picks a free port.
    Socket { port: u16 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SessionConfig {
    pub dataset: DatasetSource,
    pub partition: PartitionSpec,
    pub disguise_a: DisguisePolicy,
    pub disguise_b: DisguisePolicy,
    pub cipher: CipherConfig,
    pub gd: GdConfig,
    pub transport: TransportKind,
    pub rdf_dir: PathBuf,
    /// Send documents inside the RESPONSE as `data:` URIs instead of file paths.
    pub inline_rdf: bool,
    /// Party A listens and B initiates.
    pub swap_roles: bool,
    pub namespace: String,
    pub subject_base: String,
}

impl SessionConfig {
    /// Toy corpus, disguising factor 10 on both sides, in-process transport.
    pub fn toy(gd: GdConfig, rdf_dir: impl Into<PathBuf>) -> Self {
        SessionConfig {
            dataset: DatasetSource::Toy,
            partition: toy_partition(),
            disguise_a: DisguisePolicy::default(),
            disguise_b: DisguisePolicy::default(),
            cipher: CipherConfig::default(),
            gd,
            transport: TransportKind::InProcess,
            rdf_dir: rdf_dir.into(),
            inline_rdf: false,
            swap_roles: false,
            namespace: ONTOLOGY_NAMESPACE.to_string(),
            subject_base: DEFAULT_SUBJECT_BASE.to_string(),
        }
    }

    /// Synthetic employee table with the standard split.
    pub fn synthetic(spec: SyntheticSpec, gd: GdConfig, rdf_dir: impl Into<PathBuf>) -> Self {
        SessionConfig {
            dataset: DatasetSource::Synthetic(spec),
            partition: PartitionSpec::employee(),
            ..SessionConfig::toy(gd, rdf_dir)
        }
    }

    pub fn role_of(&self, party: PartyId) -> Role {
        match (party, self.swap_roles) {
            (PartyId::A, false) | (PartyId::B, true) => Role::Initiator,
            _ => Role::Responder,
        }
    }

    pub fn disguise(&self, party: PartyId) -> DisguisePolicy {
        match party {
            PartyId::A => self.disguise_a,
            PartyId::B => self.disguise_b,
        }
    }

    pub fn validate(&self) -> Result<(), SessionError> {
        self.gd
            .validate()
            .map_err(|e| SessionError::new(Stage::Setup, None, e))
    }

    pub fn rdf_path(&self, party: PartyId) -> PathBuf {
        self.rdf_dir.join(format!("{}.rdf", party.rdf_name()))
    }

    /// Everything one party is allowed to hold.
    pub fn party_inputs(&self, party: PartyId) -> Result<PartyInputs, SessionError> {
        self.validate()?;
        let setup = |e: DatasetError| SessionError::new(Stage::Setup, None, e);
        let ds = self.dataset.load().map_err(setup)?;
        let (a, b) = partition_vertical(&ds, &self.partition).map_err(setup)?;
        let (view, peer_attrs) = match party {
            PartyId::A => (a, b.attributes),
            PartyId::B => (b, a.attributes),
        };
        Ok(PartyInputs {
            role: self.role_of(party),
            ontology: OntologyModel::for_attributes(ds.schema())
                .with_namespace(&self.namespace)
                .with_subject_base(&self.subject_base),
            view,
            unknown_attrs: peer_attrs,
            disguise: self.disguise(party),
            expected: expected_vector(&ds),
            cipher: self.cipher.clone(),
            gd: self.gd.clone(),
            rdf_path: self.rdf_path(party),
            inline_rdf: self.inline_rdf,
        })
    }
}

/// One party's private inputs plus the shared session parameters.
#[derive(Debug, Clone)]
pub struct PartyInputs {
    pub role: Role,
    pub view: PartitionedView,
    /// Attributes held by the peer; inferred from its document.
    pub unknown_attrs: Vec<String>,
    pub ontology: OntologyModel,
    pub disguise: DisguisePolicy,
    pub expected: ExpectedVector,
    pub cipher: CipherConfig,
    pub gd: GdConfig,
    pub rdf_path: PathBuf,
    pub inline_rdf: bool,
}

impl PartyInputs {
    pub fn party(&self) -> PartyId {
        self.view.party
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PartyOutcome {
    pub party: PartyId,
    pub first_stage: FirstStageVector,
    pub stats: RunStats,
    pub transcript: Transcript,
    pub rdf_path: PathBuf,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SessionResult {
    pub af: FirstStageVector,
    pub bf: FirstStageVector,
    pub stats: RunStats,
    pub alice_transcript: Transcript,
    pub bob_transcript: Transcript,
    pub rdf_paths: [PathBuf; 2],
}

impl SessionResult {
    /// Equality of everything except wall-clock timings.
    pub fn same_outcome(&self, other: &SessionResult) -> bool {
        self.af == other.af
            && self.bf == other.bf
            && self.stats.same_outcome(&other.stats)
            && self.alice_transcript == other.alice_transcript
            && self.bob_transcript == other.bob_transcript
            && self.rdf_paths == other.rdf_paths
    }

    pub fn transcript(&self, party: PartyId) -> &Transcript {
        match party {
            PartyId::A => &self.alice_transcript,
            PartyId::B => &self.bob_transcript,
        }
    }
}

fn fetch_rdf(url: &str) -> Result<Vec<u8>, Failure> {
    if let Some(b64) = url.strip_prefix(DATA_URI_PREFIX) {
        return base64::engine::general_purpose::STANDARD
            .decode(b64)
            .map_err(|e| Failure::Io(format!("bad inline document: {e}")));
    }
    let path = url.strip_prefix("file://").unwrap_or(url);
    std::fs::read(path).map_err(|e| Failure::Io(format!("cannot read {path}: {e}")))
}

fn publish_rdf(inputs: &PartyInputs) -> Result<String, Failure> {
    let doc = generate_rdf(&inputs.view, &inputs.ontology, &inputs.disguise)?;
    let bytes = serialize_rdf_xml(&doc);
    write_file(&inputs.rdf_path, &bytes)?;
    if inputs.inline_rdf {
        Ok(format!(
            "{DATA_URI_PREFIX}{}",
            base64::engine::general_purpose::STANDARD.encode(&bytes)
        ))
    } else {
        Ok(inputs.rdf_path.display().to_string())
    }
}

pub(crate) fn write_file(path: &Path, bytes: &[u8]) -> Result<(), Failure> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Failure::Io(format!("cannot create {}: {e}", dir.display())))?;
    }
    std::fs::write(path, bytes).map_err(|e| Failure::Io(format!("cannot write {}: {e}", path.display())))
}

/// Runs one party's side of both stages over `transport`.
pub fn run_party_session<T: Transport>(inputs: &PartyInputs, transport: T) -> Result<PartyOutcome, SessionError> {
    let party = inputs.party();
    let peer = party.peer();
    let role = inputs.role;
    let s1 = |e: Failure| SessionError::new(Stage::Stage1, Some(party), e);
    let s2 = |e: Failure| SessionError::new(Stage::Stage2, Some(party), e);

    let my_url = publish_rdf(inputs).map_err(s1)?;
    let mut ch = SecureChannel::new(transport, &inputs.cipher);
    let peer_url = exchange_rdf_locations(&mut ch, role, party.rdf_name(), &my_url, peer.rdf_name())
        .map_err(|e| s1(e.into()))?;
    let peer_doc = fetch_rdf(&peer_url)
        .and_then(|b| parse_rdf_xml(&b).map_err(Failure::from))
        .map_err(s1)?;
    let f = first_stage_predict(&inputs.view, &peer_doc, &inputs.unknown_attrs).map_err(|e| s1(e.into()))?;
    log::debug!("party {party}: first-stage vector ready ({} records)", f.len());

    ch.open(role).map_err(|e| s2(e.into()))?;
    let mut wire_error: Option<ProtocolError> = None;
    let stats = run_party(&f, &inputs.expected, &inputs.gd, |mine: &PredictionVector| {
        exchange_vectors(&mut ch, role, party.vector_name(), mine.values(), peer.vector_name())
            .map(PredictionVector)
            .map_err(|e| {
                let msg = e.to_string();
                wire_error = Some(e);
                GdError::Exchange(msg)
            })
    });
    let stats = match (stats, wire_error) {
        (Ok(s), _) => s,
        (Err(_), Some(e)) => return Err(s2(e.into())),
        (Err(e), None) => return Err(s2(e.into())),
    };
    ch.close(role).map_err(|e| s2(e.into()))?;
    log::debug!(
        "party {party}: stopped after {} iterations, ep {}",
        stats.iterations,
        stats.final_ep
    );
    Ok(PartyOutcome {
        party,
        first_stage: f,
        stats,
        transcript: ch.into_transcript(),
        rdf_path: inputs.rdf_path.clone(),
    })
}

/// Wraps each party's transport before the session starts (capture, fault injection).
pub type TransportWrapper<'a> = &'a (dyn Fn(PartyId, Box<dyn Transport>) -> Box<dyn Transport> + Sync);

pub fn run_full_session(cfg: &SessionConfig) -> Result<SessionResult, SessionError> {
    run_full_session_with(cfg, &|_, t| t)
}

pub fn run_full_session_with(cfg: &SessionConfig, wrap: TransportWrapper<'_>) -> Result<SessionResult, SessionError> {
    let alice = cfg.party_inputs(PartyId::A)?;
    let bob = cfg.party_inputs(PartyId::B)?;

    let (initiator, responder) = if alice.role == Role::Initiator { (&alice, &bob) } else { (&bob, &alice) };
    let (init_out, resp_out) = match cfg.transport {
        TransportKind::InProcess => {
            let (ti, tr) = in_process_pair();
            let ti = wrap(initiator.party(), Box::new(ti));
            let tr = wrap(responder.party(), Box::new(tr));
            std::thread::scope(|s| {
                let r = s.spawn(|| run_party_session(responder, tr));
                let i = run_party_session(initiator, ti);
                (i, r.join().expect("responder thread panicked"))
            })
        }
        TransportKind::Socket { port } => {
            let io = |e: std::io::Error| SessionError::new(Stage::Setup, None, Failure::Io(e.to_string()));
            let listener = TcpListener::bind((Ipv4Addr::LOCALHOST, port)).map_err(io)?;
            let addr = listener.local_addr().map_err(io)?;
            std::thread::scope(|s| {
                let r = s.spawn(|| {
                    let t = TcpTransport::accept(&listener)
                        .map_err(|e| SessionError::new(Stage::Stage1, Some(responder.party()), e))?;
                    run_party_session(responder, wrap(responder.party(), Box::new(t)))
                });
                let i = TcpTransport::connect(addr)
                    .map_err(|e| SessionError::new(Stage::Stage1, Some(initiator.party()), e))
                    .and_then(|t| run_party_session(initiator, wrap(initiator.party(), Box::new(t))));
                (i, r.join().expect("responder thread panicked"))
            })
        }
    };
    let (a, b) = if alice.role == Role::Initiator { (init_out, resp_out) } else { (resp_out, init_out) };
    assemble(a, b)
}

fn assemble(
    a: Result<PartyOutcome, SessionError>,
    b: Result<PartyOutcome, SessionError>,
) -> Result<SessionResult, SessionError> {
    let (a, b) = match (a, b) {
        (Ok(a), Ok(b)) => (a, b),
        // Report the root cause rather than the peer's hang-up.
        (Err(ea), Err(eb)) => return Err(if ea.is_transport() && !eb.is_transport() { eb } else { ea }),
        (Err(e), Ok(_)) | (Ok(_), Err(e)) => return Err(e),
    };
    if !a.stats.same_outcome(&b.stats) {
        return Err(SessionError::new(
            Stage::Stage2,
            None,
            Failure::Inconsistent(format!(
                "A stopped at iteration {} (ep {}), B at {} (ep {})",
                a.stats.iterations, a.stats.final_ep, b.stats.iterations, b.stats.final_ep
            )),
        ));
    }
    Ok(SessionResult {
        af: a.first_stage,
        bf: b.first_stage,
        stats: a.stats,
        alice_transcript: a.transcript,
        bob_transcript: b.transcript,
        rdf_paths: [a.rdf_path, b.rdf_path],
    })
}

/// Re-runs both parties against their recorded transcripts instead of a live
/// peer. The replay fails if either party sends anything the record does not
/// contain.
pub fn replay_session(
    cfg: &SessionConfig,
    alice_transcript: &Transcript,
    bob_transcript: &Transcript,
) -> Result<SessionResult, SessionError> {
    let run = |party: PartyId, t: &Transcript| {
        let inputs = cfg.party_inputs(party)?;
        let mut replay = ReplayTransport::new(t, &cfg.cipher);
        let out = run_party_session(&inputs, &mut replay)?;
        if replay.remaining() != 0 {
            return Err(SessionError::new(
                Stage::Stage2,
                Some(party),
                ProtocolError::Replay(format!("{} recorded segments left over", replay.remaining())),
            ));
        }
        Ok(out)
    };
    assemble(run(PartyId::A, alice_transcript), run(PartyId::B, bob_transcript))
}
