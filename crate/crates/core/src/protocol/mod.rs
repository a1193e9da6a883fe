//! Encrypted segment protocol between the two parties.
//!
//! Every segment is encoded as one text line, encrypted with the shared key
//! and sent as a length-prefixed frame. Two exchanges run over it:
//!
//! ```text
//! RDF locations (once)            prediction vectors (per iteration)
//! A -> CON_INIT                   A -> REQUEST BP
//! B -> CON_INIT_ACK               B -> RESPONSE BP|[..]
//! A -> REQUEST RDF_B              B -> REQUEST AP
//! B -> RESPONSE RDF_B|<url>       A -> RESPONSE AP|[..]
//! B -> REQUEST RDF_A
//! A -> RESPONSE RDF_A|<url>
//! A -> CON_TERM
//! B -> CON_TERM_ACK
//! ```
//!
//! The vector exchanges are bracketed by their own `CON_INIT`/`CON_TERM`
//! handshakes. Piggybacked segments are separate frames sent back-to-back.

mod cipher;
mod frame;
mod segment;
mod transport;

use std::collections::VecDeque;
use std::fmt;

use thiserror::Error;

pub use cipher::{CipherAlgorithm, CipherConfig, DesEcb, SegmentCipher};
pub use frame::{decrypt_frame, encrypt_frame, Frame, MAX_FRAME_LEN};
pub use segment::{decode_segment, encode_segment, Segment, SegmentKind};
pub use transport::{in_process_pair, InProcTransport, Tamper, Tap, TcpTransport, Transport, WireDirection, WireLog};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProtocolError {
    #[error("cannot encode segment: {0}")]
    Encoding(String),
    #[error("malformed segment: {0}")]
    Malformed(String),
    #[error("decryption failed: {0}")]
    Decryption(String),
    #[error("framing error: {0}")]
    Framing(String),
    #[error("transport error: {0}")]
    Transport(String),
    #[error("cipher configuration: {0}")]
    CipherConfig(String),
    #[error("protocol violation: expected {expected}, received {received}")]
    Unexpected { expected: String, received: String },
    #[error("bad vector payload: {0}")]
    Vector(String),
    #[error("replay diverged: {0}")]
    Replay(String),
}

impl ProtocolError {
    pub(crate) fn transport(e: std::io::Error) -> Self {
        ProtocolError::Transport(e.to_string())
    }

    /// Integrity failures: the peer or the wire produced bytes that do not
    /// decrypt or decode.
    pub fn is_security(&self) -> bool {
        matches!(
            self,
            ProtocolError::Decryption(_) | ProtocolError::Malformed(_) | ProtocolError::Framing(_)
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Role {
    /// Opens sessions (sends `CON_INIT`).
    Initiator,
    /// Listens and acknowledges.
    Responder,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Sent,
    Received,
}

impl Direction {
    fn arrow(self) -> &'static str {
        match self {
            Direction::Sent => "->",
            Direction::Received => "<-",
        }
    }
}

/// Ordered record of the segments a party sent and received.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Transcript {
    pub entries: Vec<(Direction, Segment)>,
}

impl Transcript {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Splits at each `CON_TERM_ACK`; each piece is one logical session.
    pub fn sessions(&self) -> Vec<Transcript> {
        let mut out = Vec::new();
        let mut cur = Vec::new();
        for e in &self.entries {
            cur.push(e.clone());
            if e.1 == Segment::ConTermAck {
                out.push(Transcript {
                    entries: std::mem::take(&mut cur),
                });
            }
        }
        if !cur.is_empty() {
            out.push(Transcript { entries: cur });
        }
        out
    }

    pub fn is_complete(&self) -> bool {
        matches!(self.entries.first(), Some((_, Segment::ConInit)))
            && matches!(self.entries.last(), Some((_, Segment::ConTermAck)))
    }

    /// One `-> SEGMENT` / `<- SEGMENT` line per entry.
    pub fn to_text(&self) -> String {
        self.entries
            .iter()
            .map(|(d, s)| format!("{} {s}\n", d.arrow()))
            .collect()
    }

    pub fn from_text(text: &str) -> Result<Transcript, ProtocolError> {
        let entries = text
            .lines()
            .filter(|l| !l.is_empty())
            .map(|line| {
                let (dir, rest) = if let Some(r) = line.strip_prefix("-> ") {
                    (Direction::Sent, r)
                } else if let Some(r) = line.strip_prefix("<- ") {
                    (Direction::Received, r)
                } else {
                    return Err(ProtocolError::Malformed(format!("bad transcript line {line:?}")));
                };
                Ok((dir, decode_segment(format!("{rest}\n").as_bytes())?))
            })
            .collect::<Result<_, _>>()?;
        Ok(Transcript { entries })
    }
}

impl fmt::Display for Transcript {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_text())
    }
}

/// Encrypting, transcript-keeping session over a transport.
pub struct SecureChannel<T> {
    transport: T,
    cipher: Box<dyn SegmentCipher>,
    transcript: Transcript,
}

impl<T: Transport> SecureChannel<T> {
    pub fn new(transport: T, cipher: &CipherConfig) -> Self {
        SecureChannel {
            transport,
            cipher: cipher.build(),
            transcript: Transcript::default(),
        }
    }

    pub fn send(&mut self, seg: Segment) -> Result<(), ProtocolError> {
        let plain = encode_segment(&seg)?;
        self.transport.send_frame(&encrypt_frame(&plain, self.cipher.as_ref()))?;
        log::trace!("sent {seg}");
        self.transcript.entries.push((Direction::Sent, seg));
        Ok(())
    }

    pub fn recv(&mut self) -> Result<Segment, ProtocolError> {
        let frame = self.transport.recv_frame()?;
        let seg = decode_segment(&decrypt_frame(&frame, self.cipher.as_ref())?)?;
        log::trace!("received {seg}");
        self.transcript.entries.push((Direction::Received, seg.clone()));
        Ok(seg)
    }

    fn expect(&mut self, want: Segment) -> Result<(), ProtocolError> {
        let got = self.recv()?;
        if got == want {
            Ok(())
        } else {
            Err(unexpected(&want.to_string(), &got))
        }
    }

    fn expect_request(&mut self, name: &str) -> Result<(), ProtocolError> {
        self.expect(Segment::request(name))
    }

    fn expect_response(&mut self, name: &str) -> Result<String, ProtocolError> {
        match self.recv()? {
            Segment::Response { name: n, value } if n == name => Ok(value),
            got => Err(unexpected(&format!("RESPONSE {name}|..."), &got)),
        }
    }

    /// `CON_INIT` / `CON_INIT_ACK` handshake.
    pub fn open(&mut self, role: Role) -> Result<(), ProtocolError> {
        match role {
            Role::Initiator => {
                self.send(Segment::ConInit)?;
                self.expect(Segment::ConInitAck)
            }
            Role::Responder => {
                self.expect(Segment::ConInit)?;
                self.send(Segment::ConInitAck)
            }
        }
    }

    /// `CON_TERM` / `CON_TERM_ACK` teardown.
    pub fn close(&mut self, role: Role) -> Result<(), ProtocolError> {
        match role {
            Role::Initiator => {
                self.send(Segment::ConTerm)?;
                self.expect(Segment::ConTermAck)
            }
            Role::Responder => {
                self.expect(Segment::ConTerm)?;
                self.send(Segment::ConTermAck)
            }
        }
    }

    pub fn transcript(&self) -> &Transcript {
        &self.transcript
    }

    pub fn into_transcript(self) -> Transcript {
        self.transcript
    }
}

fn unexpected(expected: &str, got: &Segment) -> ProtocolError {
    ProtocolError::Unexpected {
        expected: expected.to_string(),
        received: got.to_string(),
    }
}

/// First-stage location exchange. Returns the peer's RDF location.
///
/// `my_name`/`peer_name` are the document names (`RDF_A`, `RDF_B`); the
/// initiator asks first and piggybacks `CON_TERM` on its response.
pub fn exchange_rdf_locations<T: Transport>(
    ch: &mut SecureChannel<T>,
    role: Role,
    my_name: &str,
    my_url: &str,
    peer_name: &str,
) -> Result<String, ProtocolError> {
    ch.open(role)?;
    match role {
        Role::Initiator => {
            ch.send(Segment::request(peer_name))?;
            let peer_url = ch.expect_response(peer_name)?;
            ch.expect_request(my_name)?;
            ch.send(Segment::response(my_name, my_url))?;
            ch.close(role)?;
            Ok(peer_url)
        }
        Role::Responder => {
            ch.expect_request(my_name)?;
            ch.send(Segment::response(my_name, my_url))?;
            ch.send(Segment::request(peer_name))?;
            let peer_url = ch.expect_response(peer_name)?;
            ch.close(role)?;
            Ok(peer_url)
        }
    }
}

/// JSON array text of a finite, non-empty vector.
pub fn vector_to_json(v: &[f64]) -> Result<String, ProtocolError> {
    if v.is_empty() {
        return Err(ProtocolError::Vector("vector must have at least one element".into()));
    }
    if let Some(x) = v.iter().find(|x| !x.is_finite()) {
        return Err(ProtocolError::Vector(format!("non-finite element {x}")));
    }
    serde_json::to_string(v).map_err(|e| ProtocolError::Vector(e.to_string()))
}

pub fn vector_from_json(s: &str) -> Result<Vec<f64>, ProtocolError> {
    let v: Vec<f64> = serde_json::from_str(s).map_err(|e| ProtocolError::Vector(e.to_string()))?;
    if v.is_empty() {
        return Err(ProtocolError::Vector("empty vector".into()));
    }
    Ok(v)
}

/// One second-stage swap: publish `my_vector` under `my_name`, obtain the
/// peer's vector named `wanted_name`. Must run inside an open session.
pub fn exchange_vectors<T: Transport>(
    ch: &mut SecureChannel<T>,
    role: Role,
    my_name: &str,
    my_vector: &[f64],
    wanted_name: &str,
) -> Result<Vec<f64>, ProtocolError> {
    let mine = vector_to_json(my_vector)?;
    let theirs = match role {
        Role::Initiator => {
            ch.send(Segment::request(wanted_name))?;
            let theirs = ch.expect_response(wanted_name)?;
            ch.expect_request(my_name)?;
            ch.send(Segment::response(my_name, mine))?;
            theirs
        }
        Role::Responder => {
            ch.expect_request(my_name)?;
            ch.send(Segment::response(my_name, mine))?;
            ch.send(Segment::request(wanted_name))?;
            ch.expect_response(wanted_name)?
        }
    };
    let v = vector_from_json(&theirs)?;
    if v.len() != my_vector.len() {
        return Err(ProtocolError::Vector(format!(
            "{wanted_name} has {} elements, expected {}",
            v.len(),
            my_vector.len()
        )));
    }
    Ok(v)
}

/// Stub transport that plays back one party's side of a recorded transcript:
/// received segments are re-encrypted and delivered, sent segments are
/// checked against the record.
pub struct ReplayTransport {
    entries: VecDeque<(Direction, Segment)>,
    cipher: Box<dyn SegmentCipher>,
}

impl ReplayTransport {
    pub fn new(transcript: &Transcript, cipher: &CipherConfig) -> Self {
        ReplayTransport {
            entries: transcript.entries.iter().cloned().collect(),
            cipher: cipher.build(),
        }
    }

    pub fn remaining(&self) -> usize {
        self.entries.len()
    }
}

impl Transport for ReplayTransport {
    fn send_frame(&mut self, frame: &Frame) -> Result<(), ProtocolError> {
        let seg = decode_segment(&decrypt_frame(frame, self.cipher.as_ref())?)?;
        match self.entries.pop_front() {
            Some((Direction::Sent, want)) if want == seg => Ok(()),
            Some((d, want)) => Err(ProtocolError::Replay(format!("sent {seg}, record has {d:?} {want}"))),
            None => Err(ProtocolError::Replay(format!("sent {seg} past end of record"))),
        }
    }

    fn recv_frame(&mut self) -> Result<Frame, ProtocolError> {
        match self.entries.pop_front() {
            Some((Direction::Received, seg)) => Ok(encrypt_frame(&encode_segment(&seg)?, self.cipher.as_ref())),
            Some((d, want)) => Err(ProtocolError::Replay(format!("receive attempted, record has {d:?} {want}"))),
            None => Err(ProtocolError::Replay("receive past end of record".into())),
        }
    }
}
