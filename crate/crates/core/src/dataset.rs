//! Unpartitioned employee data, vertical partitioning and the expected vector.
//!
//! A [`Dataset`] is the full `n x m` table that neither party sees in the
//! two-party setting. It is split column-wise into two [`PartitionedView`]s;
//! identifiers, names and categories are kept on both sides.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::numeric::exact_sum;

/// Attribute layout of the employee table used in the salary experiment.
pub const EMPLOYEE_SCHEMA: [&str; 8] = [
    "Basic",
    "HRA",
    "flat",
    "Travel",
    "PF",
    "Gratuity",
    "GDP",
    "PerformanceAward",
];

/// Salary attributes held by the first party in the salary experiment.
pub const ALICE_ATTRIBUTES: [&str; 4] = ["Basic", "HRA", "flat", "Travel"];
/// Salary attributes held by the second party in the salary experiment.
pub const BOB_ATTRIBUTES: [&str; 4] = ["PF", "Gratuity", "GDP", "PerformanceAward"];

/// Employee categories used as the generalization criterion.
pub const EMPLOYEE_CATEGORIES: [&str; 3] = ["TeamLead", "ProjectManager", "ProgramManager"];

const ID_COLUMN: &str = "EmpID";
const NAME_COLUMN: &str = "name";
const CATEGORY_COLUMN: &str = "Category";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DatasetError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("invalid dataset: {0}")]
    Invalid(String),
    #[error("{path}: {message}")]
    Parse { path: String, message: String },
    #[error("{path}: row {row}, column {column}: {message}")]
    Cell {
        path: String,
        row: usize,
        column: String,
        message: String,
    },
    #[error("partition error: {0}")]
    Partition(String),
    #[error("{path}: {message}")]
    Io { path: String, message: String },
}

/// Which side of the vertical split a view or vector belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum PartyId {
    A,
    B,
}

impl PartyId {
    pub fn peer(self) -> PartyId {
        match self {
            PartyId::A => PartyId::B,
            PartyId::B => PartyId::A,
        }
    }

    /// Name of the RDF document a party publishes (`RDF_A` / `RDF_B`).
    pub fn rdf_name(self) -> &'static str {
        match self {
            PartyId::A => "RDF_A",
            PartyId::B => "RDF_B",
        }
    }

    /// Name of the second-stage prediction vector a party publishes.
    pub fn vector_name(self) -> &'static str {
        match self {
            PartyId::A => "AP",
            PartyId::B => "BP",
        }
    }
}

impl fmt::Display for PartyId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PartyId::A => f.write_str("A"),
            PartyId::B => f.write_str("B"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmployeeRecord {
    pub emp_id: u64,
    pub name: String,
    pub category: String,
    /// Attribute name to currency amount.
    pub attributes: BTreeMap<String, f64>,
}

impl EmployeeRecord {
    pub fn value(&self, attr: &str) -> Option<f64> {
        self.attributes.get(attr).copied()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    schema: Vec<String>,
    records: Vec<EmployeeRecord>,
}

impl Dataset {
    /// Builds a dataset, checking identifier uniqueness, key sets and value ranges.
    pub fn new(schema: Vec<String>, records: Vec<EmployeeRecord>) -> Result<Self, DatasetError> {
        if schema.is_empty() {
            return Err(DatasetError::Invalid("schema has no attributes".into()));
        }
        if records.is_empty() {
            return Err(DatasetError::Invalid("no records".into()));
        }
        let keys: BTreeSet<&str> = schema.iter().map(String::as_str).collect();
        if keys.len() != schema.len() {
            return Err(DatasetError::Invalid("duplicate attribute in schema".into()));
        }
        let mut ids = HashSet::new();
        for r in &records {
            if !ids.insert(r.emp_id) {
                return Err(DatasetError::Invalid(format!("duplicate emp_id {}", r.emp_id)));
            }
            if r.category.is_empty() {
                return Err(DatasetError::Invalid(format!("record {} has empty category", r.emp_id)));
            }
            let rk: BTreeSet<&str> = r.attributes.keys().map(String::as_str).collect();
            if rk != keys {
                return Err(DatasetError::Invalid(format!(
                    "record {} attributes do not match schema",
                    r.emp_id
                )));
            }
            if let Some((a, v)) = r.attributes.iter().find(|(_, v)| !(v.is_finite() && **v >= 0.0)) {
                return Err(DatasetError::Invalid(format!(
                    "record {} attribute {a} has invalid amount {v}",
                    r.emp_id
                )));
            }
        }
        Ok(Dataset { schema, records })
    }

    pub fn schema(&self) -> &[String] {
        &self.schema
    }

    pub fn records(&self) -> &[EmployeeRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Multiplies every attribute value by `factor`.
    pub fn scaled(&self, factor: f64) -> Result<Dataset, DatasetError> {
        let records = self
            .records
            .iter()
            .map(|r| EmployeeRecord {
                attributes: r.attributes.iter().map(|(k, v)| (k.clone(), v * factor)).collect(),
                ..r.clone()
            })
            .collect();
        Dataset::new(self.schema.clone(), records)
    }

    /// Writes the dataset in the employee CSV layout, amounts with two decimals.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<(), DatasetError> {
        let path = path.as_ref();
        let io = |e: csv::Error| DatasetError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        };
        let mut w = csv::Writer::from_path(path).map_err(io)?;
        let mut header = vec![ID_COLUMN.to_string(), NAME_COLUMN.to_string()];
        header.extend(self.schema.iter().cloned());
        header.push(CATEGORY_COLUMN.to_string());
        w.write_record(&header).map_err(io)?;
        for r in &self.records {
            let mut row = vec![r.emp_id.to_string(), r.name.clone()];
            row.extend(self.schema.iter().map(|a| format!("{:.2}", r.attributes[a])));
            row.push(r.category.clone());
            w.write_record(&row).map_err(io)?;
        }
        w.flush().map_err(|e| DatasetError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })
    }
}

/// The two-record toy corpus: both records in category `TL`.
pub fn toy_corpus() -> Dataset {
    let schema: Vec<String> = ["Basic", "HRA", "PF", "GD"].iter().map(|s| s.to_string()).collect();
    let rec = |id: u64, vals: [f64; 4]| EmployeeRecord {
        emp_id: id,
        name: format!("r{id}"),
        category: "TL".into(),
        attributes: schema.iter().cloned().zip(vals).collect(),
    };
    let records = vec![rec(1, [100.0, 50.0, 30.0, 20.0]), rec(2, [200.0, 80.0, 60.0, 40.0])];
    Dataset::new(schema.clone(), records).expect("toy corpus is valid")
}

/// Partition of the toy corpus: A = {Basic, HRA}, B = {PF, GD}.
pub fn toy_partition() -> PartitionSpec {
    PartitionSpec::new(["Basic", "HRA"], ["PF", "GD"])
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValueRange {
    pub lo: f64,
    pub hi: f64,
}

/// Parameters for [`generate_synthetic`].
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpec {
    pub seed: u64,
    pub n: usize,
    pub categories: Vec<String>,
    /// Attribute name and the uniform range its values are drawn from, in schema order.
    pub ranges: Vec<(String, ValueRange)>,
}

impl SyntheticSpec {
    /// Employee schema, three categories, every attribute uniform in `[lo, hi]`.
    pub fn employee(seed: u64, n: usize, lo: f64, hi: f64) -> Self {
        SyntheticSpec {
            seed,
            n,
            categories: EMPLOYEE_CATEGORIES.iter().map(|s| s.to_string()).collect(),
            ranges: EMPLOYEE_SCHEMA
                .iter()
                .map(|a| (a.to_string(), ValueRange { lo, hi }))
                .collect(),
        }
    }
}

/// Generates a reproducible dataset: same spec, same bytes.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<Dataset, DatasetError> {
    if spec.n == 0 {
        return Err(DatasetError::Config("n must be at least 1".into()));
    }
    if spec.categories.is_empty() || spec.categories.iter().any(String::is_empty) {
        return Err(DatasetError::Config("category list must be non-empty".into()));
    }
    if spec.ranges.is_empty() {
        return Err(DatasetError::Config("at least one attribute range is required".into()));
    }
    for (a, r) in &spec.ranges {
        if !(r.lo.is_finite() && r.hi.is_finite() && r.lo >= 0.0 && r.lo <= r.hi) {
            return Err(DatasetError::Config(format!(
                "invalid range [{}, {}] for {a}",
                r.lo, r.hi
            )));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let records = (1..=spec.n as u64)
        .map(|id| {
            let category = spec.categories[rng.gen_range(0..spec.categories.len())].clone();
            let attributes = spec
                .ranges
                .iter()
                .map(|(a, r)| {
                    let v = if r.lo == r.hi { r.lo } else { rng.gen_range(r.lo..=r.hi) };
                    // Rounding may not leave the range since both bounds are
                    // clamped back in.
                    let v = ((v * 100.0).round() / 100.0).clamp(r.lo, r.hi);
                    (a.clone(), v)
                })
                .collect();
            EmployeeRecord {
                emp_id: id,
                name: format!("emp{id:04}"),
                category,
                attributes,
            }
        })
        .collect();
    let schema = spec.ranges.iter().map(|(a, _)| a.clone()).collect();
    Dataset::new(schema, records).map_err(|e| DatasetError::Config(e.to_string()))
}

fn canonical_column(name: &str) -> &str {
    // Prose and table disagree on this column's name.
    if name == "GD" {
        "GDP"
    } else {
        name
    }
}

/// Maps `name` onto the schema, honouring the `GD`/`GDP` alias in either direction.
fn resolve_column<'a>(schema: &'a [String], name: &'a str) -> &'a str {
    if schema.iter().any(|s| s == name) {
        return name;
    }
    let alias = match name {
        "GD" => "GDP",
        "GDP" => "GD",
        _ => return name,
    };
    schema.iter().find(|s| *s == alias).map_or(name, String::as_str)
}

/// Loads the employee CSV layout: `EmpID,name,<attributes...>,Category`.
///
/// Every column other than `EmpID`, `name` and `Category` is an attribute,
/// so `m` follows the header. `GD` is read as `GDP`.
pub fn load_csv(path: impl AsRef<Path>) -> Result<Dataset, DatasetError> {
    let path = path.as_ref();
    let shown = path.display().to_string();
    let file = std::fs::File::open(path).map_err(|e| DatasetError::Io {
        path: shown.clone(),
        message: e.to_string(),
    })?;
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file);
    let parse_err = |message: String| DatasetError::Parse {
        path: shown.clone(),
        message,
    };
    let header: Vec<String> = reader
        .headers()
        .map_err(|e| parse_err(e.to_string()))?
        .iter()
        .map(|h| canonical_column(h).to_string())
        .collect();
    let col = |name: &str| header.iter().position(|h| h == name);
    let id_col = col(ID_COLUMN).ok_or_else(|| parse_err(format!("missing column {ID_COLUMN}")))?;
    let name_col = col(NAME_COLUMN).ok_or_else(|| parse_err(format!("missing column {NAME_COLUMN}")))?;
    let cat_col =
        col(CATEGORY_COLUMN).ok_or_else(|| parse_err(format!("missing column {CATEGORY_COLUMN}")))?;
    let attr_cols: Vec<(usize, String)> = header
        .iter()
        .enumerate()
        .filter(|(i, _)| ![id_col, name_col, cat_col].contains(i))
        .map(|(i, h)| (i, h.clone()))
        .collect();
    if attr_cols.is_empty() {
        return Err(parse_err("no attribute columns".into()));
    }

    let mut records = Vec::new();
    let mut seen = HashSet::new();
    for (idx, row) in reader.records().enumerate() {
        let row_no = idx + 1;
        let row = row.map_err(|e| parse_err(format!("row {row_no}: {e}")))?;
        let cell_err = |column: &str, message: String| DatasetError::Cell {
            path: shown.clone(),
            row: row_no,
            column: column.to_string(),
            message,
        };
        if row.len() != header.len() {
            return Err(cell_err(
                "*",
                format!("expected {} fields, found {}", header.len(), row.len()),
            ));
        }
        let emp_id: u64 = row[id_col]
            .parse()
            .ok()
            .filter(|id| *id > 0)
            .ok_or_else(|| cell_err(ID_COLUMN, format!("not a positive integer: {:?}", &row[id_col])))?;
        if !seen.insert(emp_id) {
            return Err(cell_err(ID_COLUMN, format!("duplicate emp_id {emp_id}")));
        }
        let category = row[cat_col].to_string();
        if category.is_empty() {
            return Err(cell_err(CATEGORY_COLUMN, "empty category".into()));
        }
        let mut attributes = BTreeMap::new();
        for (i, a) in &attr_cols {
            let v: f64 = row[*i]
                .parse()
                .ok()
                .filter(|v: &f64| v.is_finite() && *v >= 0.0)
                .ok_or_else(|| cell_err(a, format!("not a non-negative amount: {:?}", &row[*i])))?;
            attributes.insert(a.clone(), v);
        }
        records.push(EmployeeRecord {
            emp_id,
            name: row[name_col].to_string(),
            category,
            attributes,
        });
    }
    if records.is_empty() {
        return Err(parse_err("no records".into()));
    }
    Dataset::new(attr_cols.into_iter().map(|(_, a)| a).collect(), records)
        .map_err(|e| parse_err(e.to_string()))
}

/// Attribute split between the two parties.
#[derive(Debug, Clone, PartialEq)]
pub struct PartitionSpec {
    pub party_a_attrs: Vec<String>,
    pub party_b_attrs: Vec<String>,
}

impl PartitionSpec {
    pub fn new<A, B>(a: A, b: B) -> Self
    where
        A: IntoIterator,
        A::Item: Into<String>,
        B: IntoIterator,
        B::Item: Into<String>,
    {
        PartitionSpec {
            party_a_attrs: a.into_iter().map(Into::into).collect(),
            party_b_attrs: b.into_iter().map(Into::into).collect(),
        }
    }

    /// The employee split: A holds the allowance columns, B the deductions and awards.
    pub fn employee() -> Self {
        PartitionSpec::new(ALICE_ATTRIBUTES, BOB_ATTRIBUTES)
    }

    pub fn attrs(&self, party: PartyId) -> &[String] {
        match party {
            PartyId::A => &self.party_a_attrs,
            PartyId::B => &self.party_b_attrs,
        }
    }

    /// Same spec with the two sides exchanged.
    pub fn swapped(&self) -> Self {
        PartitionSpec {
            party_a_attrs: self.party_b_attrs.clone(),
            party_b_attrs: self.party_a_attrs.clone(),
        }
    }

    pub fn validate(&self, schema: &[String]) -> Result<(), DatasetError> {
        let a: BTreeSet<&str> = self.party_a_attrs.iter().map(|x| resolve_column(schema, x)).collect();
        let b: BTreeSet<&str> = self.party_b_attrs.iter().map(|x| resolve_column(schema, x)).collect();
        if a.is_empty() || b.is_empty() {
            return Err(DatasetError::Partition("both parties need at least one attribute".into()));
        }
        if a.len() != self.party_a_attrs.len() || b.len() != self.party_b_attrs.len() {
            return Err(DatasetError::Partition("duplicate attribute within a party".into()));
        }
        if let Some(x) = a.intersection(&b).next() {
            return Err(DatasetError::Partition(format!("attribute {x} assigned to both parties")));
        }
        let all: BTreeSet<&str> = a.union(&b).copied().collect();
        let schema: BTreeSet<&str> = schema.iter().map(String::as_str).collect();
        if all != schema {
            let missing: Vec<_> = schema.difference(&all).collect();
            let extra: Vec<_> = all.difference(&schema).collect();
            return Err(DatasetError::Partition(format!(
                "spec does not cover schema (missing {missing:?}, unknown {extra:?})"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ViewRecord {
    pub emp_id: u64,
    pub name: String,
    pub category: String,
    pub attributes: BTreeMap<String, f64>,
}

impl ViewRecord {
    pub fn known_sum(&self) -> f64 {
        exact_sum(self.attributes.values().copied())
    }
}

/// One party's columns of the dataset, rows in source order.
#[derive(Debug, Clone, PartialEq)]
pub struct PartitionedView {
    pub party: PartyId,
    /// This party's attributes in schema order.
    pub attributes: Vec<String>,
    pub records: Vec<ViewRecord>,
}

impl PartitionedView {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
}

/// Splits `ds` column-wise into the views of party A and party B.
pub fn partition_vertical(
    ds: &Dataset,
    spec: &PartitionSpec,
) -> Result<(PartitionedView, PartitionedView), DatasetError> {
    spec.validate(ds.schema())?;
    let view = |party: PartyId| {
        let wanted: BTreeSet<&str> = spec
            .attrs(party)
            .iter()
            .map(|a| resolve_column(ds.schema(), a))
            .collect();
        let attributes: Vec<String> = ds
            .schema()
            .iter()
            .filter(|a| wanted.contains(a.as_str()))
            .cloned()
            .collect();
        let records = ds
            .records()
            .iter()
            .map(|r| ViewRecord {
                emp_id: r.emp_id,
                name: r.name.clone(),
                category: r.category.clone(),
                attributes: attributes.iter().map(|a| (a.clone(), r.attributes[a])).collect(),
            })
            .collect();
        PartitionedView {
            party,
            attributes,
            records,
        }
    };
    Ok((view(PartyId::A), view(PartyId::B)))
}

/// Per-record totals over all attributes; the target of the second stage.
#[derive(Debug, Clone, PartialEq)]
pub struct ExpectedVector {
    pub values: Vec<f64>,
}

impl ExpectedVector {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

pub fn expected_vector(ds: &Dataset) -> ExpectedVector {
    ExpectedVector {
        values: ds
            .records()
            .iter()
            .map(|r| exact_sum(ds.schema().iter().map(|a| r.attributes[a])))
            .collect(),
    }
}
