//! Matrix container shared by embedding exports, ELSA models and encoder
//! checkpoints.
//!
//! Layout, all integers little-endian:
//!
//! | offset | size | content                                         |
//! |--------|------|-------------------------------------------------|
//! | 0      | 8    | magic `BFMATRIX`                                |
//! | 8      | 8    | `u64` length `H` of the header in bytes          |
//! | 16     | H    | UTF-8 JSON header ([`MatrixHeader`])            |
//! | 16 + H | N    | `n_rows * n_cols` floats, row-major, `f32`/`f64` |
//!
//! Nothing may follow the payload.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"BFMATRIX";
pub const FORMAT_VERSION: u32 = 1;

pub const KIND_EMBEDDINGS: &str = "embeddings";
pub const KIND_ELSA: &str = "elsa-model";
pub const KIND_CHECKPOINT: &str = "encoder-checkpoint";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    F32,
    F64,
}

impl Precision {
    pub fn width(self) -> usize {
        match self {
            Precision::F32 => 4,
            Precision::F64 => 8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixHeader {
    pub version: u32,
    pub kind: String,
    pub n_rows: usize,
    pub n_cols: usize,
    pub precision: Precision,
    /// Either empty or one external ID per row.
    pub item_ids: Vec<String>,
    pub normalized: bool,
    #[serde(default)]
    pub extra: serde_json::Value,
}

impl MatrixHeader {
    pub fn new(
        kind: &str,
        n_rows: usize,
        n_cols: usize,
        precision: Precision,
        item_ids: Vec<String>,
        normalized: bool,
    ) -> Self {
        Self {
            version: FORMAT_VERSION,
            kind: kind.to_owned(),
            n_rows,
            n_cols,
            precision,
            item_ids,
            normalized,
            extra: serde_json::Value::Object(Default::default()),
        }
    }

    pub fn with_extra(mut self, extra: serde_json::Value) -> Self {
        self.extra = extra;
        self
    }

    fn payload_len(&self) -> Option<usize> {
        self.n_rows
            .checked_mul(self.n_cols)?
            .checked_mul(self.precision.width())
    }
}

pub fn write(path: &Path, header: &MatrixHeader, data: &[f64]) -> Result<()> {
    if data.len() != header.n_rows * header.n_cols {
        return Err(Error::DimensionMismatch {
            op: "matfile::write",
            expected: header.n_rows * header.n_cols,
            got: data.len(),
        });
    }
    if !header.item_ids.is_empty() && header.item_ids.len() != header.n_rows {
        return Err(Error::DimensionMismatch {
            op: "matfile::write item ids",
            expected: header.n_rows,
            got: header.item_ids.len(),
        });
    }
    let json = serde_json::to_vec(header).expect("header serializes");
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io = |e| Error::io(path, e);
    w.write_all(MAGIC).map_err(io)?;
    w.write_all(&(json.len() as u64).to_le_bytes()).map_err(io)?;
    w.write_all(&json).map_err(io)?;
    match header.precision {
        Precision::F64 => {
            for v in data {
                w.write_all(&v.to_le_bytes()).map_err(io)?;
            }
        }
        Precision::F32 => {
            for v in data {
                w.write_all(&(*v as f32).to_le_bytes()).map_err(io)?;
            }
        }
    }
    w.flush().map_err(io)
}

pub fn read(path: &Path) -> Result<(MatrixHeader, Vec<f64>)> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut r = BufReader::new(file);
    let mut magic = [0u8; 8];
    read_exact(&mut r, &mut magic, path, "magic")?;
    if &magic != MAGIC {
        return Err(Error::corrupt(path, "bad magic"));
    }
    let mut len = [0u8; 8];
    read_exact(&mut r, &mut len, path, "header length")?;
    let header_len = u64::from_le_bytes(len);
    if header_len > 1 << 34 {
        return Err(Error::corrupt(path, "header length out of range"));
    }
    let mut json = vec![0u8; header_len as usize];
    read_exact(&mut r, &mut json, path, "header")?;
    let header: MatrixHeader = serde_json::from_slice(&json)
        .map_err(|e| Error::corrupt(path, format!("header: {e}")))?;
    if header.version != FORMAT_VERSION {
        return Err(Error::corrupt(
            path,
            format!("unsupported version {}", header.version),
        ));
    }
    if !header.item_ids.is_empty() && header.item_ids.len() != header.n_rows {
        return Err(Error::corrupt(
            path,
            format!(
                "{} item ids for {} rows",
                header.item_ids.len(),
                header.n_rows
            ),
        ));
    }
    let n_bytes = header
        .payload_len()
        .ok_or_else(|| Error::corrupt(path, "payload size overflows"))?;
    let mut payload = vec![0u8; n_bytes];
    read_exact(&mut r, &mut payload, path, "payload")?;
    let mut trailing = [0u8; 1];
    match r.read(&mut trailing) {
        Ok(0) => {}
        Ok(_) => return Err(Error::corrupt(path, "trailing bytes after payload")),
        Err(e) => return Err(Error::io(path, e)),
    }
    let data: Vec<f64> = match header.precision {
        Precision::F64 => payload
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect(),
        Precision::F32 => payload
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
            .collect(),
    };
    if data.iter().any(|v| !v.is_finite()) {
        return Err(Error::corrupt(path, "non-finite value in payload"));
    }
    Ok((header, data))
}

fn read_exact(r: &mut impl Read, buf: &mut [u8], path: &Path, what: &str) -> Result<()> {
    r.read_exact(buf).map_err(|e| {
        if e.kind() == std::io::ErrorKind::UnexpectedEof {
            Error::corrupt(path, format!("truncated while reading {what}"))
        } else {
            Error::io(path, e)
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn header(n_rows: usize, n_cols: usize, p: Precision) -> MatrixHeader {
        MatrixHeader::new(
            KIND_EMBEDDINGS,
            n_rows,
            n_cols,
            p,
            (0..n_rows).map(|i| format!("item{i}")).collect(),
            false,
        )
    }

    #[test]
    fn byte_layout_is_stable() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.bin");
        let h = header(1, 2, Precision::F32);
        write(&path, &h, &[1.0, -2.0]).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        assert_eq!(&bytes[..8], b"BFMATRIX");
        let hl = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
        let json: serde_json::Value = serde_json::from_slice(&bytes[16..16 + hl]).unwrap();
        assert_eq!(json["precision"], "f32");
        assert_eq!(json["n_rows"], 1);
        assert_eq!(&bytes[16 + hl..], &[0, 0, 0x80, 0x3f, 0, 0, 0, 0xc0]);
    }

    #[test]
    fn trailing_bytes_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.bin");
        write(&path, &header(1, 1, Precision::F64), &[1.0]).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        bytes.push(0);
        std::fs::write(&path, bytes).unwrap();
        assert!(matches!(read(&path), Err(Error::CorruptFile { .. })));
    }

    #[test]
    fn bad_magic_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.bin");
        std::fs::write(&path, b"NOTAMATRIX-------").unwrap();
        assert!(matches!(read(&path), Err(Error::CorruptFile { .. })));
    }

    #[test]
    fn write_checks_lengths() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.bin");
        assert!(write(&path, &header(2, 2, Precision::F64), &[1.0]).is_err());
    }
}
