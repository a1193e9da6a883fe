//! First-stage estimate: known attribute sums plus inferred upper bounds.

use thiserror::Error;

use crate::dataset::{PartitionedView, PartyId};
use crate::numeric::exact_sum;
use crate::rdf::{upper_bounds_with_index, RdfDocument, RdfError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FirstStageError {
    #[error(transparent)]
    Inference(#[from] RdfError),
    #[error("alignment error: {0}")]
    Alignment(String),
    #[error("invalid first-stage vector: {0}")]
    Invalid(String),
    #[error("employee {emp_id}: first-stage value {value} is not strictly positive")]
    NonPositive { emp_id: u64, value: f64 },
}

/// Per-record upper-bound estimate `f`, aligned with the dataset order.
#[derive(Debug, Clone, PartialEq)]
pub struct FirstStageVector {
    pub party: PartyId,
    values: Vec<f64>,
}

impl FirstStageVector {
    pub fn new(party: PartyId, values: Vec<f64>) -> Result<Self, FirstStageError> {
        if values.is_empty() {
            return Err(FirstStageError::Invalid("empty".into()));
        }
        if let Some((i, v)) = values.iter().enumerate().find(|(_, v)| !(v.is_finite() && **v > 0.0)) {
            return Err(FirstStageError::Invalid(format!("element {i} is {v}, must be positive")));
        }
        Ok(FirstStageVector { party, values })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::MIN, f64::max)
    }

    pub fn sum(&self) -> f64 {
        exact_sum(self.values.iter().copied())
    }
}

/// `f_i = sum(known attributes of record i) + sum(peer hasMax bounds of unknown_attrs)`.
pub fn first_stage_predict<S: AsRef<str>>(
    view: &PartitionedView,
    peer_doc: &RdfDocument,
    unknown_attrs: &[S],
) -> Result<FirstStageVector, FirstStageError> {
    if peer_doc.descriptions.len() != view.len() {
        return Err(FirstStageError::Alignment(format!(
            "peer document describes {} records, view has {}",
            peer_doc.descriptions.len(),
            view.len()
        )));
    }
    let index = peer_doc.index_by_id();
    let values = view
        .records
        .iter()
        .map(|r| {
            let bounds = upper_bounds_with_index(&index, r.emp_id, unknown_attrs)?;
            let v = exact_sum(r.attributes.values().copied().chain(bounds));
            if v.is_finite() && v > 0.0 {
                Ok(v)
            } else {
                Err(FirstStageError::NonPositive {
                    emp_id: r.emp_id,
                    value: v,
                })
            }
        })
        .collect::<Result<Vec<_>, FirstStageError>>()?;
    Ok(FirstStageVector {
        party: view.party,
        values,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{expected_vector, partition_vertical, toy_corpus, toy_partition, Dataset, EmployeeRecord};
    use crate::rdf::{generate_rdf, DisguisePolicy, OntologyModel};

    fn docs(ds: &Dataset, spec: &crate::dataset::PartitionSpec, df: f64) -> (PartitionedView, PartitionedView, RdfDocument, RdfDocument) {
        let (a, b) = partition_vertical(ds, spec).unwrap();
        let ont = OntologyModel::for_attributes(ds.schema());
        let p = DisguisePolicy::new(df).unwrap();
        let da = generate_rdf(&a, &ont, &p).unwrap();
        let db = generate_rdf(&b, &ont, &p).unwrap();
        (a, b, da, db)
    }

    #[test]
    fn toy_first_stage_vectors() {
        let (a, b, da, db) = docs(&toy_corpus(), &toy_partition(), 10.0);
        let af = first_stage_predict(&a, &db, &b.attributes).unwrap();
        let bf = first_stage_predict(&b, &da, &a.attributes).unwrap();
        assert_eq!(af.values(), [270.0, 400.0]);
        assert_eq!(bf.values(), [350.0, 400.0]);
        assert_eq!((af.party, bf.party), (PartyId::A, PartyId::B));
    }

    #[test]
    fn one_record_per_category_without_disguise_is_exact() {
        let mut ds = toy_corpus().records().to_vec();
        ds[1].category = "PM".into();
        let ds = Dataset::new(toy_corpus().schema().to_vec(), ds).unwrap();
        let (a, b, da, db) = docs(&ds, &toy_partition(), 0.0);
        let e = expected_vector(&ds);
        assert_eq!(first_stage_predict(&a, &db, &b.attributes).unwrap().values(), e.values.as_slice());
        assert_eq!(first_stage_predict(&b, &da, &a.attributes).unwrap().values(), e.values.as_slice());
    }

    #[test]
    fn misaligned_peer_document() {
        let (a, b, _, mut db) = docs(&toy_corpus(), &toy_partition(), 10.0);
        db.descriptions.pop();
        assert!(matches!(
            first_stage_predict(&a, &db, &b.attributes),
            Err(FirstStageError::Alignment(_))
        ));
        let (a, _, _, db) = docs(&toy_corpus(), &toy_partition(), 10.0);
        assert!(matches!(
            first_stage_predict(&a, &db, &["Travel"]),
            Err(FirstStageError::Inference(_))
        ));
    }

    #[test]
    fn zero_total_rejected() {
        let rec = |id, x: f64, y: f64| EmployeeRecord {
            emp_id: id,
            name: format!("z{id}"),
            category: format!("c{id}"),
            attributes: [("x".to_string(), x), ("y".to_string(), y)].into(),
        };
        let ds = Dataset::new(vec!["x".into(), "y".into()], vec![rec(1, 0.0, 0.0), rec(2, 1.0, 1.0)]).unwrap();
        let spec = crate::dataset::PartitionSpec::new(["x"], ["y"]);
        let (a, b, _, db) = docs(&ds, &spec, 0.0);
        assert_eq!(
            first_stage_predict(&a, &db, &b.attributes).unwrap_err(),
            FirstStageError::NonPositive { emp_id: 1, value: 0.0 }
        );
    }
}
