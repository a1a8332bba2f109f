//! Binary files: the `SENS` embedding table (plus its JSONL id index) and
//! the `SRCK` parameter checkpoint.
//!
//! `SENS` layout, little-endian:
//!
//! ```text
//! magic "SENS" | version u32 | n_rows u64 | dim u32 | dtype u32 (0 = f32) | n_rows*dim f32
//! ```
//!
//! `SRCK` layout, little-endian:
//!
//! ```text
//! magic "SRCK" | version u32 | count u32
//! count x ( name_len u32 | name utf-8 | dtype u8 (0 = f64, 1 = f32) | rank u32 | dims u64*rank | payload )
//! ```

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use sensrec_core::kernel::{ParamStore, Tensor};
use sensrec_core::student::SensoryEmbeddingTable;

pub const TABLE_MAGIC: &[u8; 4] = b"SENS";
pub const TABLE_VERSION: u32 = 1;
pub const CKPT_MAGIC: &[u8; 4] = b"SRCK";
pub const CKPT_VERSION: u32 = 1;

const DTYPE_F64: u8 = 0;
const DTYPE_F32: u8 = 1;

#[derive(Debug, thiserror::Error)]
pub enum FormatError {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("bad magic {found:?}, expected {expected:?}")]
    Magic { found: [u8; 4], expected: [u8; 4] },
    #[error("unsupported version {0}")]
    Version(u32),
    #[error("unsupported dtype tag {0}")]
    Dtype(u32),
    #[error("truncated input: wanted {want} bytes at offset {at}, have {have}")]
    Truncated { at: usize, want: usize, have: usize },
    #[error("{0} trailing bytes")]
    Trailing(usize),
    #[error("index: {0}")]
    Index(String),
    #[error("parameter name is not utf-8")]
    Name,
    #[error(transparent)]
    Core(#[from] sensrec_core::Error),
}

struct Reader<'a> {
    buf: &'a [u8],
    at: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], FormatError> {
        let have = self.buf.len() - self.at;
        if n > have {
            return Err(FormatError::Truncated {
                at: self.at,
                want: n,
                have,
            });
        }
        let s = &self.buf[self.at..self.at + n];
        self.at += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8, FormatError> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32, FormatError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, FormatError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn magic(&mut self, expected: &[u8; 4]) -> Result<(), FormatError> {
        let found: [u8; 4] = self.take(4)?.try_into().unwrap();
        if &found != expected {
            return Err(FormatError::Magic {
                found,
                expected: *expected,
            });
        }
        Ok(())
    }

    fn finish(self) -> Result<(), FormatError> {
        match self.buf.len() - self.at {
            0 => Ok(()),
            n => Err(FormatError::Trailing(n)),
        }
    }
}

fn count(n: u64, at: usize) -> Result<usize, FormatError> {
    usize::try_from(n).map_err(|_| FormatError::Truncated {
        at,
        want: usize::MAX,
        have: 0,
    })
}

pub fn encode_table(t: &SensoryEmbeddingTable) -> Vec<u8> {
    let mut out = Vec::with_capacity(24 + t.data().len() * 4);
    out.extend_from_slice(TABLE_MAGIC);
    out.extend_from_slice(&TABLE_VERSION.to_le_bytes());
    out.extend_from_slice(&(t.len() as u64).to_le_bytes());
    out.extend_from_slice(&(t.dim() as u32).to_le_bytes());
    out.extend_from_slice(&0u32.to_le_bytes());
    for v in t.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

/// Header fields and payload of a `SENS` file.
pub fn decode_table_payload(bytes: &[u8]) -> Result<(usize, usize, Vec<f32>), FormatError> {
    let mut r = Reader { buf: bytes, at: 0 };
    r.magic(TABLE_MAGIC)?;
    let version = r.u32()?;
    if version != TABLE_VERSION {
        return Err(FormatError::Version(version));
    }
    let n_rows = count(r.u64()?, r.at)?;
    let dim = r.u32()? as usize;
    let dtype = r.u32()?;
    if dtype != 0 {
        return Err(FormatError::Dtype(dtype));
    }
    let n = n_rows
        .checked_mul(dim)
        .and_then(|n| n.checked_mul(4))
        .ok_or(FormatError::Truncated {
            at: r.at,
            want: usize::MAX,
            have: bytes.len() - r.at,
        })?;
    let data = r
        .take(n)?
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    r.finish()?;
    Ok((n_rows, dim, data))
}

#[derive(Serialize, Deserialize)]
struct IndexLine {
    row: usize,
    item_id: String,
}

pub fn encode_index(t: &SensoryEmbeddingTable) -> Vec<u8> {
    let mut out = Vec::new();
    for (row, id) in t.ids().iter().enumerate() {
        serde_json::to_writer(
            &mut out,
            &IndexLine {
                row,
                item_id: id.clone(),
            },
        )
        .expect("index line");
        out.push(b'\n');
    }
    out
}

pub fn decode_index(text: &str) -> Result<Vec<String>, FormatError> {
    let mut ids = Vec::new();
    for (i, line) in text.lines().filter(|l| !l.trim().is_empty()).enumerate() {
        let l: IndexLine =
            serde_json::from_str(line).map_err(|e| FormatError::Index(format!("line {}: {e}", i + 1)))?;
        if l.row != i {
            return Err(FormatError::Index(format!(
                "line {} has row {}, expected {i}",
                i + 1,
                l.row
            )));
        }
        ids.push(l.item_id);
    }
    Ok(ids)
}

/// `foo.sens` → `foo.index.jsonl`.
pub fn index_path(table: &Path) -> PathBuf {
    table.with_extension("index.jsonl")
}

pub fn write_table(path: &Path, t: &SensoryEmbeddingTable) -> Result<(), FormatError> {
    fs::write(path, encode_table(t))?;
    fs::write(index_path(path), encode_index(t))?;
    Ok(())
}

pub fn read_table(path: &Path) -> Result<SensoryEmbeddingTable, FormatError> {
    let (n_rows, dim, data) = decode_table_payload(&fs::read(path)?)?;
    let ids = decode_index(&fs::read_to_string(index_path(path))?)?;
    if ids.len() != n_rows {
        return Err(FormatError::Index(format!("{} ids for {n_rows} rows", ids.len())));
    }
    Ok(SensoryEmbeddingTable::from_parts(dim, ids, data)?)
}

pub fn encode_params(store: &ParamStore) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(CKPT_MAGIC);
    out.extend_from_slice(&CKPT_VERSION.to_le_bytes());
    out.extend_from_slice(&(store.len() as u32).to_le_bytes());
    for (_, p) in store.iter() {
        out.extend_from_slice(&(p.name.len() as u32).to_le_bytes());
        out.extend_from_slice(p.name.as_bytes());
        out.push(DTYPE_F64);
        let shape = p.value.shape();
        out.extend_from_slice(&(shape.len() as u32).to_le_bytes());
        for &d in shape {
            out.extend_from_slice(&(d as u64).to_le_bytes());
        }
        for v in p.value.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

/// Parameters in file order. `f32` payloads are widened to `f64`.
pub fn decode_params(bytes: &[u8]) -> Result<ParamStore, FormatError> {
    let mut r = Reader { buf: bytes, at: 0 };
    r.magic(CKPT_MAGIC)?;
    let version = r.u32()?;
    if version != CKPT_VERSION {
        return Err(FormatError::Version(version));
    }
    let n = r.u32()?;
    let mut store = ParamStore::new();
    for _ in 0..n {
        let len = r.u32()? as usize;
        let name = String::from_utf8(r.take(len)?.to_vec()).map_err(|_| FormatError::Name)?;
        let dtype = r.u8()?;
        let rank = r.u32()? as usize;
        let mut shape = Vec::with_capacity(rank.min(8));
        for _ in 0..rank {
            shape.push(count(r.u64()?, r.at)?);
        }
        let numel = shape
            .iter()
            .try_fold(1usize, |a, &d| a.checked_mul(d))
            .ok_or(FormatError::Truncated {
                at: r.at,
                want: usize::MAX,
                have: 0,
            })?;
        let data: Vec<f64> = match dtype {
            DTYPE_F64 => r
                .take(numel.checked_mul(8).unwrap_or(usize::MAX))?
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                .collect(),
            DTYPE_F32 => r
                .take(numel.checked_mul(4).unwrap_or(usize::MAX))?
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
                .collect(),
            t => return Err(FormatError::Dtype(t as u32)),
        };
        store.add(name, Tensor::new(shape, data)?);
    }
    r.finish()?;
    Ok(store)
}

pub fn write_params(path: &Path, store: &ParamStore) -> Result<(), FormatError> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    w.write_all(&encode_params(store))?;
    w.flush()?;
    Ok(())
}

pub fn read_params(path: &Path) -> Result<ParamStore, FormatError> {
    decode_params(&fs::read(path)?)
}

/// `model.ckpt` → `model.json`.
pub fn sidecar_path(ckpt: &Path) -> PathBuf {
    ckpt.with_extension("json")
}
