//! Parameter checkpoints.
//!
//! Layout: one line of compact JSON (the manifest), a `\n`, then a blob of
//! little-endian `f32` values. Manifest offsets are byte offsets into the
//! blob, in manifest order.

use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Result, TensorError};
use crate::params::ParamStore;
use crate::tensor::Tensor;

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub offset: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format_version: u32,
    pub params: Vec<ManifestEntry>,
}

pub fn write_checkpoint<W: Write>(store: &ParamStore, mut out: W) -> Result<()> {
    let mut params = Vec::with_capacity(store.len());
    let mut offset = 0;
    for (name, t) in store.iter() {
        params.push(ManifestEntry {
            name: name.to_string(),
            shape: t.shape().to_vec(),
            offset,
        });
        offset += t.numel() * 4;
    }
    let manifest = Manifest {
        format_version: FORMAT_VERSION,
        params,
    };
    let header = serde_json::to_string(&manifest)
        .map_err(|e| TensorError::Checkpoint(e.to_string()))?;
    out.write_all(header.as_bytes())?;
    out.write_all(b"\n")?;
    for (_, t) in store.iter() {
        for &v in t.data() {
            out.write_all(&(v as f32).to_le_bytes())?;
        }
    }
    out.flush()?;
    Ok(())
}

pub fn read_checkpoint<R: Read>(input: R) -> Result<ParamStore> {
    let mut reader = BufReader::new(input);
    let mut header = String::new();
    reader.read_line(&mut header)?;
    let manifest: Manifest = serde_json::from_str(header.trim_end())
        .map_err(|e| TensorError::Checkpoint(format!("bad manifest: {e}")))?;
    if manifest.format_version != FORMAT_VERSION {
        return Err(TensorError::Checkpoint(format!(
            "unsupported format version {}",
            manifest.format_version
        )));
    }
    let mut blob = Vec::new();
    reader.read_to_end(&mut blob)?;

    let mut store = ParamStore::new();
    for entry in manifest.params {
        let numel: usize = entry.shape.iter().product();
        let end = entry.offset + numel * 4;
        if end > blob.len() {
            return Err(TensorError::Checkpoint(format!(
                "`{}` runs past the end of the blob",
                entry.name
            )));
        }
        let data = blob[entry.offset..end]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
            .collect();
        store.insert(entry.name, Tensor::new(entry.shape, data)?);
    }
    Ok(store)
}

pub fn save(store: &ParamStore, path: &Path) -> Result<()> {
    let file = std::fs::File::create(path)?;
    write_checkpoint(store, std::io::BufWriter::new(file))
}

pub fn load(path: &Path) -> Result<ParamStore> {
    read_checkpoint(std::fs::File::open(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn manifest_layout() {
        let mut s = ParamStore::new();
        s.insert("b", Tensor::new(vec![3], vec![1.0, 2.0, 3.0]).unwrap());
        s.insert("a/w", Tensor::full(&[2, 2], 0.5));
        let mut buf = Vec::new();
        write_checkpoint(&s, &mut buf).unwrap();
        let nl = buf.iter().position(|&b| b == b'\n').unwrap();
        let m: Manifest = serde_json::from_slice(&buf[..nl]).unwrap();
        assert_eq!(m.format_version, 1);
        assert_eq!(m.params[0].name, "a/w");
        assert_eq!(m.params[1].offset, 16);
        assert_eq!(buf.len() - nl - 1, 7 * 4);
        assert_eq!(&buf[nl + 1 + 16..nl + 1 + 20], &1.0f32.to_le_bytes());
        assert_eq!(read_checkpoint(&buf[..]).unwrap(), s);
    }

    #[test]
    fn truncated_blob_is_rejected() {
        let mut s = ParamStore::new();
        s.insert("w", Tensor::full(&[4], 1.0));
        let mut buf = Vec::new();
        write_checkpoint(&s, &mut buf).unwrap();
        buf.truncate(buf.len() - 1);
        assert!(read_checkpoint(&buf[..]).is_err());
    }
}
