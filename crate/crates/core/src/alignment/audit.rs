use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::schema::Polarity;

/// Three annotators' judgements of one extracted record.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AuditVotes {
    pub item_id: String,
    /// Polarity the extractor predicted for the record.
    pub predicted_polarity: Polarity,
    /// Is the (attribute, value) pair a correct sensory fact?
    pub pair_correct: Vec<bool>,
    /// Does the evidence span support the value?
    pub evidence_supports: Vec<bool>,
    /// Each annotator's polarity label.
    pub polarity_labels: Vec<Polarity>,
    /// Is the negated flag correct?
    pub negation_correct: Vec<bool>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    pub pair_precision: f64,
    pub evidence_faithfulness: f64,
    /// `None` when every record was predicted `unknown`.
    pub polarity_accuracy: Option<f64>,
    pub negation_accuracy: f64,
    pub n_items: usize,
    pub n_records: usize,
    pub n_polarity_records: usize,
}

fn majority(votes: &[bool]) -> bool {
    votes.iter().filter(|v| **v).count() >= 2
}

fn polarity_majority(votes: &[Polarity]) -> Option<Polarity> {
    votes
        .iter()
        .copied()
        .find(|p| votes.iter().filter(|q| *q == p).count() >= 2)
}

/// Majority vote per record and dimension, then the fraction of records that
/// pass. Polarity is scored only where the prediction is not `unknown`, and a
/// three-way split counts as disagreement.
pub fn aggregate_audit(records: &[AuditVotes]) -> Result<AuditReport> {
    if records.is_empty() {
        return Err(Error::InvalidArgument("audit needs at least one record".into()));
    }
    let (mut pair, mut evid, mut neg, mut pol_ok, mut pol_n) = (0usize, 0usize, 0usize, 0usize, 0usize);
    let mut items = alloc::collections::BTreeSet::new();
    for (index, r) in records.iter().enumerate() {
        for got in [
            r.pair_correct.len(),
            r.evidence_supports.len(),
            r.polarity_labels.len(),
            r.negation_correct.len(),
        ] {
            if got != 3 {
                return Err(Error::VoteCount { index, got });
            }
        }
        items.insert(r.item_id.as_str());
        pair += majority(&r.pair_correct) as usize;
        evid += majority(&r.evidence_supports) as usize;
        neg += majority(&r.negation_correct) as usize;
        if r.predicted_polarity != Polarity::Unknown {
            pol_n += 1;
            pol_ok += (polarity_majority(&r.polarity_labels) == Some(r.predicted_polarity)) as usize;
        }
    }
    let n = records.len() as f64;
    Ok(AuditReport {
        pair_precision: pair as f64 / n,
        evidence_faithfulness: evid as f64 / n,
        polarity_accuracy: (pol_n > 0).then(|| pol_ok as f64 / pol_n as f64),
        negation_accuracy: neg as f64 / n,
        n_items: items.len(),
        n_records: records.len(),
        n_polarity_records: pol_n,
    })
}
