//! Ontology model and disguised RDF metadata.
//!
//! Each party summarises its own columns per employee category: for every
//! attribute it publishes the category maximum and minimum, shifted up by a
//! private disguising factor. Receivers use the `hasMax*` literals as upper
//! bounds for the attributes they do not hold.

mod xml;

use std::collections::{BTreeMap, BTreeSet, HashMap};

use thiserror::Error;

use crate::dataset::PartitionedView;
use crate::numeric::exact_sum;

pub use xml::{parse_rdf_xml, serialize_rdf_xml};

pub const ONTOLOGY_NAMESPACE: &str = "http://www.ppgd.com/";
pub const ONTOLOGY_PREFIX: &str = "j.0";
pub const RDF_NAMESPACE: &str = "http://www.w3.org/1999/02/22-rdf-syntax-ns#";
pub const DEFAULT_SUBJECT_BASE: &str = "http://www.SkumarSolutions.com/ID";

pub const HAS_NAME: &str = "hasName";
pub const HAS_DATA: &str = "hasData";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RdfError {
    #[error("rdf parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("rdf generation error: {0}")]
    Generation(String),
    #[error("rdf inference error: {0}")]
    Inference(String),
    #[error("invalid disguising factor {0}")]
    Disguise(f64),
}

pub fn max_relation(attr: &str) -> String {
    format!("hasMax{attr}")
}

pub fn min_relation(attr: &str) -> String {
    format!("hasMin{attr}")
}

/// Relations shared by both parties: `hasMax<a>`/`hasMin<a>` per attribute,
/// `hasName`, and `hasData` (never serialized).
#[derive(Debug, Clone, PartialEq)]
pub struct OntologyModel {
    pub namespace: String,
    pub subject_base: String,
    relations: BTreeSet<String>,
}

impl OntologyModel {
    pub fn for_attributes<I>(attrs: I) -> Self
    where
        I: IntoIterator,
        I::Item: AsRef<str>,
    {
        let mut relations: BTreeSet<String> = [HAS_NAME, HAS_DATA].iter().map(|s| s.to_string()).collect();
        for a in attrs {
            relations.insert(max_relation(a.as_ref()));
            relations.insert(min_relation(a.as_ref()));
        }
        OntologyModel {
            namespace: ONTOLOGY_NAMESPACE.to_string(),
            subject_base: DEFAULT_SUBJECT_BASE.to_string(),
            relations,
        }
    }

    pub fn with_subject_base(mut self, base: impl Into<String>) -> Self {
        self.subject_base = base.into();
        self
    }

    pub fn with_namespace(mut self, ns: impl Into<String>) -> Self {
        self.namespace = ns.into();
        self
    }

    pub fn relations(&self) -> impl Iterator<Item = &str> {
        self.relations.iter().map(String::as_str)
    }

    pub fn has_relation(&self, rel: &str) -> bool {
        self.relations.contains(rel)
    }

    pub fn subject_for(&self, emp_id: u64) -> String {
        format!("{}{}", self.subject_base, emp_id)
    }
}

/// Additive disguise applied to every published extremum.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DisguisePolicy {
    df: f64,
}

impl DisguisePolicy {
    pub const DEFAULT_DF: f64 = 10.0;

    pub fn new(df: f64) -> Result<Self, RdfError> {
        if df.is_finite() && df >= 0.0 {
            Ok(DisguisePolicy { df })
        } else {
            Err(RdfError::Disguise(df))
        }
    }

    pub fn df(&self) -> f64 {
        self.df
    }
}

impl Default for DisguisePolicy {
    fn default() -> Self {
        DisguisePolicy { df: Self::DEFAULT_DF }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Extrema {
    pub max: f64,
    pub min: f64,
}

/// `(category, attribute) -> (max, min)` over a party's view.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ExtremaTable {
    entries: BTreeMap<(String, String), Extrema>,
}

impl ExtremaTable {
    pub fn get(&self, category: &str, attr: &str) -> Option<Extrema> {
        self.entries.get(&(category.to_string(), attr.to_string())).copied()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &str, Extrema)> {
        self.entries.iter().map(|((c, a), e)| (c.as_str(), a.as_str(), *e))
    }
}

pub fn category_extrema(view: &PartitionedView) -> ExtremaTable {
    let mut entries: BTreeMap<(String, String), Extrema> = BTreeMap::new();
    for r in &view.records {
        for (a, &v) in &r.attributes {
            entries
                .entry((r.category.clone(), a.clone()))
                .and_modify(|e| {
                    e.max = e.max.max(v);
                    e.min = e.min.min(v);
                })
                .or_insert(Extrema { max: v, min: v });
        }
    }
    ExtremaTable { entries }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RdfTriple {
    pub subject: String,
    pub predicate: String,
    pub object: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Property {
    /// Local name under the ontology namespace, or `prefix:local` for any
    /// other declared namespace.
    pub predicate: String,
    pub literal: String,
}

/// One `rdf:Description` block.
#[derive(Debug, Clone, PartialEq)]
pub struct Description {
    pub about: String,
    pub properties: Vec<Property>,
}

impl Description {
    pub fn literal(&self, predicate: &str) -> Option<&str> {
        self.properties
            .iter()
            .find(|p| p.predicate == predicate)
            .map(|p| p.literal.as_str())
    }

    /// Employee id encoded as the trailing digits of the subject URI.
    pub fn emp_id(&self) -> Option<u64> {
        let digits = self.about.len() - self.about.trim_end_matches(|c: char| c.is_ascii_digit()).len();
        self.about[self.about.len() - digits..].parse().ok()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RdfDocument {
    pub namespace: String,
    /// Namespace bindings other than `rdf` and the ontology prefix.
    pub extra_namespaces: Vec<(String, String)>,
    pub descriptions: Vec<Description>,
}

impl RdfDocument {
    pub fn empty(namespace: impl Into<String>) -> Self {
        RdfDocument {
            namespace: namespace.into(),
            extra_namespaces: Vec::new(),
            descriptions: Vec::new(),
        }
    }

    pub fn triples(&self) -> impl Iterator<Item = RdfTriple> + '_ {
        self.descriptions.iter().flat_map(|d| {
            d.properties.iter().map(move |p| RdfTriple {
                subject: d.about.clone(),
                predicate: p.predicate.clone(),
                object: p.literal.clone(),
            })
        })
    }

    pub fn description_for(&self, emp_id: u64) -> Option<&Description> {
        self.descriptions.iter().find(|d| d.emp_id() == Some(emp_id))
    }

    pub(crate) fn index_by_id(&self) -> HashMap<u64, &Description> {
        self.descriptions
            .iter()
            .filter_map(|d| d.emp_id().map(|id| (id, d)))
            .collect()
    }
}

/// Shortest decimal text that parses back to the same `f64`.
pub(crate) fn format_amount(v: f64) -> String {
    format!("{v}")
}

pub(crate) fn is_numeric_predicate(predicate: &str) -> bool {
    !predicate.contains(':') && (predicate.starts_with("hasMax") || predicate.starts_with("hasMin"))
}

/// Builds the disguised metadata document for one party's view.
///
/// Every record gets `hasMax<a> = category max + df` and
/// `hasMin<a> = category min + df` for each of the view's attributes, in
/// attribute order, followed by `hasName`.
pub fn generate_rdf(
    view: &PartitionedView,
    ont: &OntologyModel,
    policy: &DisguisePolicy,
) -> Result<RdfDocument, RdfError> {
    for a in &view.attributes {
        for rel in [max_relation(a), min_relation(a)] {
            if !ont.has_relation(&rel) {
                return Err(RdfError::Generation(format!("ontology has no relation {rel} for attribute {a}")));
            }
        }
    }
    let extrema = category_extrema(view);
    let df = policy.df();
    let descriptions = view
        .records
        .iter()
        .map(|r| {
            let mut properties = Vec::with_capacity(2 * view.attributes.len() + 1);
            for a in &view.attributes {
                let e = extrema
                    .get(&r.category, a)
                    .expect("every record contributes to its own category");
                properties.push(Property {
                    predicate: max_relation(a),
                    literal: format_amount(e.max + df),
                });
                properties.push(Property {
                    predicate: min_relation(a),
                    literal: format_amount(e.min + df),
                });
            }
            properties.push(Property {
                predicate: HAS_NAME.to_string(),
                literal: r.name.clone(),
            });
            Description {
                about: ont.subject_for(r.emp_id),
                properties,
            }
        })
        .collect();
    Ok(RdfDocument {
        namespace: ont.namespace.clone(),
        extra_namespaces: Vec::new(),
        descriptions,
    })
}

fn upper_bounds<S: AsRef<str>>(d: &Description, unknown_attrs: &[S]) -> Result<Vec<f64>, RdfError> {
    unknown_attrs
        .iter()
        .map(|a| {
            let rel = max_relation(a.as_ref());
            let lit = d
                .literal(&rel)
                .ok_or_else(|| RdfError::Inference(format!("{} has no {rel}", d.about)))?;
            lit.parse()
                .map_err(|_| RdfError::Inference(format!("{} has non-numeric {rel} {lit:?}", d.about)))
        })
        .collect()
}

/// Sum of the disguised upper bounds of `unknown_attrs` for one employee.
pub fn infer_unknown_sum<S: AsRef<str>>(
    doc: &RdfDocument,
    emp_id: u64,
    unknown_attrs: &[S],
) -> Result<f64, RdfError> {
    if unknown_attrs.is_empty() {
        return Ok(0.0);
    }
    let d = doc
        .description_for(emp_id)
        .ok_or_else(|| RdfError::Inference(format!("no description for employee {emp_id}")))?;
    Ok(exact_sum(upper_bounds(d, unknown_attrs)?))
}

/// The individual upper bounds behind [`infer_unknown_sum`], in `unknown_attrs` order.
pub(crate) fn upper_bounds_with_index<S: AsRef<str>>(
    index: &HashMap<u64, &Description>,
    emp_id: u64,
    unknown_attrs: &[S],
) -> Result<Vec<f64>, RdfError> {
    if unknown_attrs.is_empty() {
        return Ok(Vec::new());
    }
    let d = index
        .get(&emp_id)
        .ok_or_else(|| RdfError::Inference(format!("no description for employee {emp_id}")))?;
    upper_bounds(d, unknown_attrs)
}
