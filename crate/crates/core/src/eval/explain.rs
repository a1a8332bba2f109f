use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math;
use crate::schema::{ItemAnnotation, SensoryFacet, SensoryRecord};
use crate::student::SensoryEmbeddingTable;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SharedFacet {
    pub facet: SensoryFacet,
    pub recommended: Vec<SensoryRecord>,
    pub history: Vec<SensoryRecord>,
}

/// Why an item was recommended: the most sensorially similar history item
/// and the facets both items have records for.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Explanation {
    pub recommended: String,
    pub anchor: String,
    pub similarity: f64,
    pub shared: Vec<SharedFacet>,
}

pub fn cosine(a: &[f32], b: &[f32]) -> f64 {
    let (mut ab, mut aa, mut bb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (x, y) = (*x as f64, *y as f64);
        ab += x * y;
        aa += x * x;
        bb += y * y;
    }
    if aa == 0.0 || bb == 0.0 {
        0.0
    } else {
        ab / (math::sqrt(aa) * math::sqrt(bb))
    }
}

/// Picks the history item whose sensory row is most cosine-similar to the
/// recommended item's (the earliest one on ties) and lists the facets both
/// items are annotated with. Items without annotations share nothing.
pub fn explain(
    recommended: &str,
    history: &[String],
    table: &SensoryEmbeddingTable,
    annotations: &[ItemAnnotation],
) -> Result<Explanation> {
    if history.is_empty() {
        return Err(Error::EmptySequence);
    }
    let missing: Vec<String> = core::iter::once(recommended)
        .chain(history.iter().map(String::as_str))
        .filter(|id| table.get(id).is_none())
        .map(String::from)
        .collect();
    if !missing.is_empty() {
        return Err(Error::MissingSensoryRows(missing));
    }
    let rec_row = table.get(recommended).expect("checked");
    let mut best = (f64::NEG_INFINITY, 0);
    for (i, h) in history.iter().enumerate() {
        let c = cosine(rec_row, table.get(h).expect("checked"));
        if c > best.0 {
            best = (c, i);
        }
    }
    let anchor = &history[best.1];
    let records = |id: &str| -> Vec<SensoryRecord> {
        annotations
            .iter()
            .filter(|a| a.item_id == id)
            .flat_map(|a| a.attributes.iter().cloned())
            .collect()
    };
    let (ra, ha) = (records(recommended), records(anchor));
    let shared = SensoryFacet::ALL
        .iter()
        .filter_map(|&f| {
            let r: Vec<SensoryRecord> = ra.iter().filter(|x| x.attribute == f).cloned().collect();
            let h: Vec<SensoryRecord> = ha.iter().filter(|x| x.attribute == f).cloned().collect();
            (!r.is_empty() && !h.is_empty()).then_some(SharedFacet {
                facet: f,
                recommended: r,
                history: h,
            })
        })
        .collect();
    Ok(Explanation {
        recommended: recommended.into(),
        anchor: anchor.clone(),
        similarity: best.0,
        shared,
    })
}
