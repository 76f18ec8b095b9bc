//! `SHARDSET1` dataset cache.
//!
//! ```text
//! magic        9 bytes  "SHARDSET1"
//! feature_len  u32 LE
//! row_count    u64 LE
//! label_count  u32 LE
//! rows         row_count x (feature_len x f32 LE, i32 LE label; -1 = unlabeled)
//! ```
//! User ids are not stored; rows read back carry user 0.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::Dataset;
use crate::error::{Error, Result};
use crate::nn::Matrix;

pub const CACHE_MAGIC: &[u8; 9] = b"SHARDSET1";

pub fn write_cache_to<W: Write>(mut w: W, data: &Dataset) -> Result<()> {
    w.write_all(CACHE_MAGIC)?;
    w.write_all(&(data.feature_len() as u32).to_le_bytes())?;
    w.write_all(&(data.len() as u64).to_le_bytes())?;
    w.write_all(&(data.label_count as u32).to_le_bytes())?;
    for (row, label) in data.features.row_iter().zip(&data.labels) {
        for v in row {
            w.write_all(&v.to_le_bytes())?;
        }
        let l: i32 = match label {
            Some(l) => i32::try_from(*l).map_err(|_| Error::Format(format!("label {l} too large")))?,
            None => -1,
        };
        w.write_all(&l.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_cache(path: impl AsRef<Path>, data: &Dataset) -> Result<()> {
    let path = path.as_ref();
    let f = File::create(path).map_err(|e| Error::file(path, e))?;
    write_cache_to(BufWriter::new(f), data)
}

fn read_array<const N: usize, R: Read>(r: &mut R) -> Result<[u8; N]> {
    let mut buf = [0u8; N];
    r.read_exact(&mut buf).map_err(|e| match e.kind() {
        std::io::ErrorKind::UnexpectedEof => Error::Format("dataset cache truncated".into()),
        _ => Error::Io(e),
    })?;
    Ok(buf)
}

pub fn read_cache_from<R: Read>(mut r: R) -> Result<Dataset> {
    let magic: [u8; 9] = read_array(&mut r)?;
    if &magic != CACHE_MAGIC {
        return Err(Error::Format("not a SHARDSET1 dataset cache".into()));
    }
    let feature_len = u32::from_le_bytes(read_array(&mut r)?) as usize;
    let rows = u64::from_le_bytes(read_array(&mut r)?) as usize;
    let label_count = u32::from_le_bytes(read_array(&mut r)?) as usize;
    let mut values = Vec::with_capacity(rows.saturating_mul(feature_len).min(1 << 28));
    let mut labels = Vec::with_capacity(rows.min(1 << 24));
    for _ in 0..rows {
        for _ in 0..feature_len {
            values.push(f32::from_le_bytes(read_array(&mut r)?));
        }
        let l = i32::from_le_bytes(read_array(&mut r)?);
        labels.push(match l {
            -1 => None,
            l if l >= 0 => Some(l as usize),
            l => return Err(Error::Format(format!("invalid label {l} in dataset cache"))),
        });
    }
    let mut trailing = [0u8; 1];
    if r.read(&mut trailing)? != 0 {
        return Err(Error::Format("trailing bytes after dataset cache rows".into()));
    }
    Dataset::new(Matrix::from_vec(rows, feature_len, values)?, labels, vec![0; rows], label_count)
}

pub fn read_cache(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    let f = File::open(path).map_err(|e| Error::file(path, e))?;
    read_cache_from(BufReader::new(f))
}
