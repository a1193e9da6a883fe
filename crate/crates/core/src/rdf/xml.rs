//! Reader and writer for the small RDF/XML subset the generator emits:
//! one `rdf:RDF` root, flat `rdf:Description` blocks, and text-only
//! property elements. No blank nodes, collections or nested resources.

use std::fmt::Write as _;

use super::{is_numeric_predicate, Description, Property, RdfDocument, RdfError, ONTOLOGY_PREFIX, RDF_NAMESPACE};

/// Undeclared prefix that appears in published samples in place of the
/// ontology prefix; read as an alias of it.
const ONTOLOGY_PREFIX_ALIAS: &str = "n.0";

fn escape(s: &str, out: &mut String) {
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&apos;"),
            _ => out.push(c),
        }
    }
}

fn qualified(predicate: &str) -> String {
    if predicate.contains(':') {
        predicate.to_string()
    } else {
        format!("{ONTOLOGY_PREFIX}:{predicate}")
    }
}

pub fn serialize_rdf_xml(doc: &RdfDocument) -> Vec<u8> {
    let mut out = String::new();
    out.push_str("<rdf:RDF xmlns:");
    out.push_str(ONTOLOGY_PREFIX);
    out.push_str("=\"");
    escape(&doc.namespace, &mut out);
    out.push_str("\"\n    xmlns:rdf=\"");
    out.push_str(RDF_NAMESPACE);
    out.push('"');
    for (prefix, uri) in &doc.extra_namespaces {
        let _ = write!(out, "\n    xmlns:{prefix}=\"");
        escape(uri, &mut out);
        out.push('"');
    }
    out.push_str(">\n");
    for d in &doc.descriptions {
        out.push_str("  <rdf:Description rdf:about=\"");
        escape(&d.about, &mut out);
        out.push_str("\">\n");
        for p in &d.properties {
            let tag = qualified(&p.predicate);
            let _ = write!(out, "    <{tag}>");
            escape(&p.literal, &mut out);
            let _ = writeln!(out, "</{tag}>");
        }
        out.push_str("  </rdf:Description>\n");
    }
    out.push_str("</rdf:RDF>\n");
    out.into_bytes()
}

type Attrs<'a> = Vec<(&'a str, String)>;

struct Cursor<'a> {
    src: &'a str,
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn error(&self, message: impl Into<String>) -> RdfError {
        self.error_at(self.pos, message)
    }

    fn error_at(&self, pos: usize, message: impl Into<String>) -> RdfError {
        let before = &self.src[..pos.min(self.src.len())];
        let line = before.matches('\n').count() + 1;
        let column = before.len() - before.rfind('\n').map_or(0, |i| i + 1) + 1;
        RdfError::Parse {
            line,
            column,
            message: message.into(),
        }
    }

    fn rest(&self) -> &'a str {
        &self.src[self.pos..]
    }

    fn eof(&self) -> bool {
        self.pos >= self.src.len()
    }

    fn starts_with(&self, s: &str) -> bool {
        self.rest().starts_with(s)
    }

    fn skip_ws(&mut self) {
        let trimmed = self.rest().trim_start();
        self.pos = self.src.len() - trimmed.len();
    }

    /// Skips whitespace, comments and processing instructions.
    fn skip_misc(&mut self) -> Result<(), RdfError> {
        loop {
            self.skip_ws();
            let close = if self.starts_with("<!--") {
                "-->"
            } else if self.starts_with("<?") {
                "?>"
            } else {
                return Ok(());
            };
            match self.rest().find(close) {
                Some(i) => self.pos += i + close.len(),
                None => return Err(self.error("unterminated comment or declaration")),
            }
        }
    }

    fn expect(&mut self, s: &str) -> Result<(), RdfError> {
        if self.starts_with(s) {
            self.pos += s.len();
            Ok(())
        } else if self.eof() {
            Err(self.error(format!("unexpected end of input, expected {s:?}")))
        } else {
            Err(self.error(format!("expected {s:?}")))
        }
    }

    fn name(&mut self) -> Result<&'a str, RdfError> {
        let rest = self.rest();
        let len = rest
            .find(|c: char| c.is_whitespace() || matches!(c, '>' | '/' | '=' | '<' | '"'))
            .unwrap_or(rest.len());
        if len == 0 {
            return Err(self.error("expected a name"));
        }
        self.pos += len;
        Ok(&rest[..len])
    }

    /// Attributes up to the end of a start tag. Returns them and whether the
    /// tag was self-closing.
    fn attributes(&mut self) -> Result<(Attrs<'a>, bool), RdfError> {
        let mut attrs = Vec::new();
        loop {
            self.skip_ws();
            if self.starts_with("/>") {
                self.pos += 2;
                return Ok((attrs, true));
            }
            if self.starts_with(">") {
                self.pos += 1;
                return Ok((attrs, false));
            }
            if self.eof() {
                return Err(self.error("unexpected end of input inside tag"));
            }
            let key = self.name()?;
            self.skip_ws();
            self.expect("=")?;
            self.skip_ws();
            let quote = match self.rest().chars().next() {
                Some(q @ ('"' | '\'')) => q,
                _ => return Err(self.error("expected quoted attribute value")),
            };
            self.pos += 1;
            let start = self.pos;
            let end = self
                .rest()
                .find(quote)
                .ok_or_else(|| self.error("unterminated attribute value"))?;
            self.pos += end + 1;
            attrs.push((key, self.unescape(start, &self.src[start..start + end])?));
        }
    }

    fn unescape(&self, start: usize, raw: &str) -> Result<String, RdfError> {
        let mut out = String::with_capacity(raw.len());
        let mut rest = raw;
        while let Some(i) = rest.find('&') {
            out.push_str(&rest[..i]);
            let tail = &rest[i..];
            let semi = tail
                .find(';')
                .ok_or_else(|| self.error_at(start + raw.len() - rest.len() + i, "unterminated entity"))?;
            let ent = &tail[1..semi];
            let c = match ent {
                "amp" => '&',
                "lt" => '<',
                "gt" => '>',
                "quot" => '"',
                "apos" => '\'',
                _ if ent.starts_with("#x") => u32::from_str_radix(&ent[2..], 16)
                    .ok()
                    .and_then(char::from_u32)
                    .ok_or_else(|| self.error_at(start, format!("bad character reference &{ent};")))?,
                _ if ent.starts_with('#') => ent[1..]
                    .parse::<u32>()
                    .ok()
                    .and_then(char::from_u32)
                    .ok_or_else(|| self.error_at(start, format!("bad character reference &{ent};")))?,
                _ => return Err(self.error_at(start, format!("unknown entity &{ent};"))),
            };
            out.push(c);
            rest = &tail[semi + 1..];
        }
        out.push_str(rest);
        Ok(out)
    }
}

struct Namespaces {
    ontology_prefix: String,
    namespace: String,
    extra: Vec<(String, String)>,
}

impl Namespaces {
    /// Maps a property element name onto a stored predicate.
    fn predicate(&self, qname: &str) -> Option<String> {
        let (prefix, local) = qname.split_once(':')?;
        if prefix == self.ontology_prefix || prefix == ONTOLOGY_PREFIX_ALIAS {
            Some(local.to_string())
        } else if self.extra.iter().any(|(p, _)| p == prefix) {
            Some(qname.to_string())
        } else {
            None
        }
    }
}

/// Parses the RDF/XML subset. Any structural problem or non-numeric
/// `hasMax*`/`hasMin*` literal fails the whole document.
pub fn parse_rdf_xml(bytes: &[u8]) -> Result<RdfDocument, RdfError> {
    let src = std::str::from_utf8(bytes).map_err(|e| {
        let prefix = &bytes[..e.valid_up_to()];
        let line = prefix.iter().filter(|&&b| b == b'\n').count() + 1;
        RdfError::Parse {
            line,
            column: prefix.len() - prefix.iter().rposition(|&b| b == b'\n').map_or(0, |i| i + 1) + 1,
            message: "input is not valid UTF-8".into(),
        }
    })?;
    let mut c = Cursor { src, pos: 0 };

    c.skip_misc()?;
    c.expect("<")?;
    let root_at = c.pos;
    let root = c.name()?;
    if root != "rdf:RDF" {
        return Err(c.error_at(root_at, format!("expected root element rdf:RDF, found {root}")));
    }
    let (attrs, self_closing) = c.attributes()?;
    let mut ontology: Option<(String, String)> = None;
    let mut extra = Vec::new();
    for (k, v) in attrs {
        let Some(prefix) = k.strip_prefix("xmlns:") else {
            return Err(c.error_at(root_at, format!("unexpected attribute {k} on rdf:RDF")));
        };
        if prefix == "rdf" {
            if v != RDF_NAMESPACE {
                return Err(c.error_at(root_at, format!("rdf prefix bound to {v}")));
            }
        } else if ontology.is_none() {
            ontology = Some((prefix.to_string(), v));
        } else {
            extra.push((prefix.to_string(), v));
        }
    }
    let (ontology_prefix, namespace) =
        ontology.ok_or_else(|| c.error_at(root_at, "no ontology namespace declared"))?;
    let ns = Namespaces {
        ontology_prefix,
        namespace,
        extra,
    };

    let mut descriptions = Vec::new();
    if !self_closing {
        loop {
            c.skip_misc()?;
            if c.eof() {
                return Err(c.error("unexpected end of input, expected </rdf:RDF>"));
            }
            if c.starts_with("</") {
                c.pos += 2;
                let at = c.pos;
                let name = c.name()?;
                if name != "rdf:RDF" {
                    return Err(c.error_at(at, format!("mismatched end tag {name}, expected rdf:RDF")));
                }
                c.skip_ws();
                c.expect(">")?;
                break;
            }
            descriptions.push(parse_description(&mut c, &ns)?);
        }
    }
    c.skip_misc()?;
    if !c.eof() {
        return Err(c.error("trailing content after </rdf:RDF>"));
    }
    Ok(RdfDocument {
        namespace: ns.namespace,
        extra_namespaces: ns.extra,
        descriptions,
    })
}

fn parse_description(c: &mut Cursor<'_>, ns: &Namespaces) -> Result<Description, RdfError> {
    c.expect("<")?;
    let at = c.pos;
    let name = c.name()?;
    if name != "rdf:Description" {
        return Err(c.error_at(at, format!("expected rdf:Description, found {name}")));
    }
    let (attrs, self_closing) = c.attributes()?;
    let about = attrs
        .into_iter()
        .find(|(k, _)| *k == "rdf:about")
        .map(|(_, v)| v)
        .ok_or_else(|| c.error_at(at, "rdf:Description without rdf:about"))?;
    let mut properties = Vec::new();
    if self_closing {
        return Ok(Description { about, properties });
    }
    loop {
        c.skip_misc()?;
        if c.eof() {
            return Err(c.error("unexpected end of input inside rdf:Description"));
        }
        if c.starts_with("</") {
            c.pos += 2;
            let at = c.pos;
            let end = c.name()?;
            if end != "rdf:Description" {
                return Err(c.error_at(at, format!("mismatched end tag {end}, expected rdf:Description")));
            }
            c.skip_ws();
            c.expect(">")?;
            return Ok(Description { about, properties });
        }
        c.expect("<")?;
        let at = c.pos;
        let qname = c.name()?;
        let predicate = ns
            .predicate(qname)
            .ok_or_else(|| c.error_at(at, format!("undeclared prefix in {qname}")))?;
        let (attrs, self_closing) = c.attributes()?;
        if !attrs.is_empty() {
            return Err(c.error_at(at, format!("attributes on property {qname} are not supported")));
        }
        let literal = if self_closing {
            String::new()
        } else {
            let text_at = c.pos;
            let end = c
                .rest()
                .find('<')
                .ok_or_else(|| c.error("unexpected end of input inside property"))?;
            let raw = &c.src[text_at..text_at + end];
            c.pos += end;
            let literal = c.unescape(text_at, raw)?;
            if !c.starts_with("</") {
                return Err(c.error(format!("nested element inside {qname} is not supported")));
            }
            c.pos += 2;
            let end_at = c.pos;
            let end_name = c.name()?;
            if ns.predicate(end_name).as_deref() != Some(predicate.as_str()) {
                return Err(c.error_at(end_at, format!("mismatched end tag {end_name}, expected {qname}")));
            }
            c.skip_ws();
            c.expect(">")?;
            if is_numeric_predicate(&predicate) {
                match literal.trim().parse::<f64>() {
                    Ok(v) if v.is_finite() && v >= 0.0 => {}
                    _ => {
                        return Err(c.error_at(
                            text_at,
                            format!("{predicate} literal {literal:?} is not a non-negative number"),
                        ))
                    }
                }
            }
            literal
        };
        properties.push(Property { predicate, literal });
    }
}
