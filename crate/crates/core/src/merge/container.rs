//! Tensor container: `M3DRTNSR`, u64 LE header length, JSON header
//! `{name: {dtype, shape, offset, length}}` with offsets relative to the data
//! region, then the little-endian data region.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{CheckpointTensors, Tensor};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"M3DRTNSR";

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Entry {
    dtype: String,
    shape: Vec<usize>,
    offset: u64,
    length: u64,
}

pub fn to_bytes(ckpt: &CheckpointTensors) -> Vec<u8> {
    let mut header = BTreeMap::new();
    let mut offset = 0u64;
    for (name, t) in &ckpt.tensors {
        let length = (t.data.len() * 4) as u64;
        header.insert(
            name.as_str(),
            Entry {
                dtype: "f32".into(),
                shape: t.shape.clone(),
                offset,
                length,
            },
        );
        offset += length;
    }
    let header = serde_json::to_vec(&header).expect("header serializes");
    let mut out = Vec::with_capacity(16 + header.len() + offset as usize);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(header.len() as u64).to_le_bytes());
    out.extend_from_slice(&header);
    for t in ckpt.tensors.values() {
        for v in &t.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

pub fn from_bytes(bytes: &[u8]) -> Result<CheckpointTensors> {
    if bytes.len() < 8 || &bytes[..8] != MAGIC {
        return Err(Error::BadMagic);
    }
    if bytes.len() < 16 {
        return Err(Error::TruncatedData("missing header length".into()));
    }
    let hlen = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes"));
    let hend = 16u64
        .checked_add(hlen)
        .filter(|&e| e <= bytes.len() as u64)
        .ok_or_else(|| Error::TruncatedData(format!("header of {hlen} bytes runs past end of file")))?
        as usize;
    let header: BTreeMap<String, Entry> =
        serde_json::from_slice(&bytes[16..hend]).map_err(|e| Error::CorruptHeader(e.to_string()))?;
    let data = &bytes[hend..];
    let mut tensors = BTreeMap::new();
    for (name, e) in header {
        if e.dtype != "f32" {
            return Err(Error::CorruptHeader(format!("{name}: unsupported dtype `{}`", e.dtype)));
        }
        if e.shape.contains(&0) {
            return Err(Error::CorruptHeader(format!("{name}: zero-sized dimension")));
        }
        let count = e
            .shape
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .ok_or_else(|| Error::CorruptHeader(format!("{name}: shape overflows")))?;
        if count as u64 * 4 != e.length {
            return Err(Error::CorruptHeader(format!(
                "{name}: length {} does not match shape {:?}",
                e.length, e.shape
            )));
        }
        let end = e
            .offset
            .checked_add(e.length)
            .filter(|&end| end <= data.len() as u64)
            .ok_or_else(|| {
                Error::TruncatedData(format!(
                    "{name}: bytes {}..{} past data region of {}",
                    e.offset,
                    e.offset.saturating_add(e.length),
                    data.len()
                ))
            })?;
        let raw = &data[e.offset as usize..end as usize];
        let values = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        tensors.insert(name, Tensor::new(e.shape, values)?);
    }
    Ok(CheckpointTensors { tensors })
}

pub fn load_checkpoint(path: &Path) -> Result<CheckpointTensors> {
    from_bytes(&fs::read(path).map_err(|e| Error::io(path, e))?)
}

pub fn save_checkpoint(path: &Path, ckpt: &CheckpointTensors) -> Result<()> {
    fs::write(path, to_bytes(ckpt)).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one() -> CheckpointTensors {
        CheckpointTensors::from_iter([(
            "w".to_string(),
            Tensor::new(vec![2, 2], vec![1.0, -2.0, 0.5, 3.25]).unwrap(),
        )])
    }

    #[test]
    fn single_tensor() {
        let c = from_bytes(&to_bytes(&one())).unwrap();
        assert_eq!(c.tensors.len(), 1);
        assert_eq!(c.tensors["w"].data.len(), 4);
    }

    #[test]
    fn round_trip_bits() {
        let mut c = one();
        c.tensors.insert(
            "a.bias".into(),
            Tensor::new(vec![3], vec![f32::MIN_POSITIVE, -0.0, 1e30]).unwrap(),
        );
        let bytes = to_bytes(&c);
        let back = from_bytes(&bytes).unwrap();
        assert_eq!(to_bytes(&back), bytes);
        let bits = |t: &Tensor| t.data.iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&back.tensors["a.bias"]), bits(&c.tensors["a.bias"]));
    }

    #[test]
    fn errors() {
        assert!(matches!(from_bytes(b"NOTMAGIC\0\0\0\0\0\0\0\0"), Err(Error::BadMagic)));
        let mut b = to_bytes(&one());
        b.truncate(b.len() - 1);
        assert!(matches!(from_bytes(&b), Err(Error::TruncatedData(_))));

        let header = br#"{"w":{"dtype":"f32","shape":[1],"offset":64,"length":4}}"#;
        let mut b = MAGIC.to_vec();
        b.extend_from_slice(&(header.len() as u64).to_le_bytes());
        b.extend_from_slice(header);
        b.extend_from_slice(&[0; 4]);
        assert!(matches!(from_bytes(&b), Err(Error::TruncatedData(_))));

        let mut b = MAGIC.to_vec();
        b.extend_from_slice(&3u64.to_le_bytes());
        b.extend_from_slice(b"{x}");
        assert!(matches!(from_bytes(&b), Err(Error::CorruptHeader(_))));
    }
}
