use std::fmt;

use super::ProtocolError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SegmentKind {
    ConInit,
    ConInitAck,
    Request,
    Response,
    ConTerm,
    ConTermAck,
}

impl SegmentKind {
    pub fn keyword(self) -> &'static str {
        match self {
            SegmentKind::ConInit => "CON_INIT",
            SegmentKind::ConInitAck => "CON_INIT_ACK",
            SegmentKind::Request => "REQUEST",
            SegmentKind::Response => "RESPONSE",
            SegmentKind::ConTerm => "CON_TERM",
            SegmentKind::ConTermAck => "CON_TERM_ACK",
        }
    }

    pub const ALL: [SegmentKind; 6] = [
        SegmentKind::ConInit,
        SegmentKind::ConInitAck,
        SegmentKind::Request,
        SegmentKind::Response,
        SegmentKind::ConTerm,
        SegmentKind::ConTermAck,
    ];

    fn from_keyword(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.keyword() == s)
    }
}

impl fmt::Display for SegmentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.keyword())
    }
}

/// One protocol message unit.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Segment {
    ConInit,
    ConInitAck,
    /// Asks the peer for a named resource (an RDF document or a vector).
    Request(String),
    /// `NAME|VALUE` answer to a request.
    Response { name: String, value: String },
    ConTerm,
    ConTermAck,
}

impl Segment {
    pub fn request(name: impl Into<String>) -> Self {
        Segment::Request(name.into())
    }

    pub fn response(name: impl Into<String>, value: impl Into<String>) -> Self {
        Segment::Response {
            name: name.into(),
            value: value.into(),
        }
    }

    pub fn kind(&self) -> SegmentKind {
        match self {
            Segment::ConInit => SegmentKind::ConInit,
            Segment::ConInitAck => SegmentKind::ConInitAck,
            Segment::Request(_) => SegmentKind::Request,
            Segment::Response { .. } => SegmentKind::Response,
            Segment::ConTerm => SegmentKind::ConTerm,
            Segment::ConTermAck => SegmentKind::ConTermAck,
        }
    }

    /// Payload text as carried on the line, with `|` and `\` escaped in
    /// response fields.
    pub fn message(&self) -> Option<String> {
        match self {
            Segment::Request(name) => Some(name.clone()),
            Segment::Response { name, value } => Some(format!("{}|{}", escape_field(name), escape_field(value))),
            _ => None,
        }
    }
}

impl fmt::Display for Segment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.message() {
            Some(m) => write!(f, "{} {m}", self.kind()),
            None => write!(f, "{}", self.kind()),
        }
    }
}

fn escape_field(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        if matches!(c, '|' | '\\') {
            out.push('\\');
        }
        out.push(c);
    }
    out
}

/// Splits `NAME|VALUE` at its single unescaped delimiter.
fn split_response(message: &str) -> Result<(String, String), ProtocolError> {
    let mut fields = vec![String::new()];
    let mut chars = message.chars();
    while let Some(c) = chars.next() {
        match c {
            '\\' => match chars.next() {
                Some(e @ ('|' | '\\')) => fields.last_mut().unwrap().push(e),
                _ => return Err(ProtocolError::Malformed(format!("bad escape in response {message:?}"))),
            },
            '|' => fields.push(String::new()),
            _ => fields.last_mut().unwrap().push(c),
        }
    }
    match <[String; 2]>::try_from(fields) {
        Ok([name, value]) => Ok((name, value)),
        Err(f) => Err(ProtocolError::Malformed(format!(
            "response needs exactly one '|' delimiter, found {}",
            f.len() - 1
        ))),
    }
}

fn check_text(what: &str, s: &str) -> Result<(), ProtocolError> {
    if s.chars().any(char::is_control) {
        return Err(ProtocolError::Encoding(format!("{what} contains a control character")));
    }
    Ok(())
}

/// Canonical UTF-8 form: `<KIND>\n` or `<KIND> <message>\n`.
pub fn encode_segment(s: &Segment) -> Result<Vec<u8>, ProtocolError> {
    match s {
        Segment::Request(name) => {
            if name.is_empty() {
                return Err(ProtocolError::Encoding("REQUEST needs a non-empty name".into()));
            }
            check_text("REQUEST name", name)?;
        }
        Segment::Response { name, value } => {
            if name.is_empty() {
                return Err(ProtocolError::Encoding("RESPONSE needs a non-empty name".into()));
            }
            check_text("RESPONSE name", name)?;
            check_text("RESPONSE value", value)?;
        }
        _ => {}
    }
    let mut out = s.to_string();
    out.push('\n');
    Ok(out.into_bytes())
}

pub fn decode_segment(bytes: &[u8]) -> Result<Segment, ProtocolError> {
    let text = std::str::from_utf8(bytes).map_err(|_| ProtocolError::Malformed("segment is not UTF-8".into()))?;
    let line = text
        .strip_suffix('\n')
        .ok_or_else(|| ProtocolError::Malformed("segment not terminated by newline".into()))?;
    if line.chars().any(char::is_control) {
        return Err(ProtocolError::Malformed("control character inside segment".into()));
    }
    let (keyword, message) = match line.split_once(' ') {
        Some((k, m)) => (k, Some(m)),
        None => (line, None),
    };
    let kind = SegmentKind::from_keyword(keyword)
        .ok_or_else(|| ProtocolError::Malformed(format!("unknown segment keyword {keyword:?}")))?;
    let seg = match (kind, message) {
        (SegmentKind::ConInit, None) => Segment::ConInit,
        (SegmentKind::ConInitAck, None) => Segment::ConInitAck,
        (SegmentKind::ConTerm, None) => Segment::ConTerm,
        (SegmentKind::ConTermAck, None) => Segment::ConTermAck,
        (SegmentKind::Request, Some(name)) if !name.is_empty() => Segment::Request(name.to_string()),
        (SegmentKind::Response, Some(m)) => {
            let (name, value) = split_response(m)?;
            if name.is_empty() {
                return Err(ProtocolError::Malformed("RESPONSE with empty name".into()));
            }
            Segment::Response { name, value }
        }
        (k, _) => return Err(ProtocolError::Malformed(format!("bad payload for {k}"))),
    };
    Ok(seg)
}
