use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use crate::error::{Error, Result};

/// Per-item sensory vectors, rows sorted by item id.
#[derive(Clone, Debug, PartialEq)]
pub struct SensoryEmbeddingTable {
    dim: usize,
    ids: Vec<String>,
    data: Vec<f32>,
    index: BTreeMap<String, usize>,
}

impl SensoryEmbeddingTable {
    /// Builds a table from `(id, vector)` rows in any order.
    pub fn from_rows(dim: usize, rows: Vec<(String, Vec<f32>)>) -> Result<Self> {
        let mut rows = rows;
        rows.sort_by(|a, b| a.0.cmp(&b.0));
        let mut ids = Vec::with_capacity(rows.len());
        let mut data = Vec::with_capacity(rows.len() * dim);
        for (id, v) in rows {
            if v.len() != dim {
                return Err(Error::ShapeMismatch {
                    op: "embedding table row",
                    left: alloc::vec![dim],
                    right: alloc::vec![v.len()],
                });
            }
            if ids.last() == Some(&id) {
                return Err(Error::DuplicateItem(id));
            }
            ids.push(id);
            data.extend(v);
        }
        Self::from_parts(dim, ids, data)
    }

    /// Rows exactly as stored; ids must be unique.
    pub fn from_parts(dim: usize, ids: Vec<String>, data: Vec<f32>) -> Result<Self> {
        if data.len() != ids.len() * dim {
            return Err(Error::ShapeMismatch {
                op: "embedding table",
                left: alloc::vec![ids.len(), dim],
                right: alloc::vec![data.len()],
            });
        }
        let mut index = BTreeMap::new();
        for (i, id) in ids.iter().enumerate() {
            if index.insert(id.clone(), i).is_some() {
                return Err(Error::DuplicateItem(id.clone()));
            }
        }
        Ok(Self { dim, ids, data, index })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn get(&self, id: &str) -> Option<&[f32]> {
        self.index.get(id).map(|&i| self.row(i))
    }
}
