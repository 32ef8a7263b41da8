//! Parameter checkpoint file.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! magic        8 bytes   "FTMCKPT1"
//! header_len   u64
//! header       header_len bytes of UTF-8 JSON:
//!              {"meta": <any JSON>, "tensors": [{"name": str, "shape": [usize]}, ...]}
//! payload      f64 values of every tensor, row-major, in header order
//! ```

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::{Tensor, TensorError};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"FTMCKPT1";

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub meta: serde_json::Value,
    pub tensors: Vec<(String, Tensor)>,
}

#[derive(Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
struct Header {
    meta: serde_json::Value,
    tensors: Vec<TensorEntry>,
}

impl Checkpoint {
    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.tensors.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }
}

pub fn write_checkpoint<W: Write>(mut out: W, ckpt: &Checkpoint) -> Result<(), TensorError> {
    let header = Header {
        meta: ckpt.meta.clone(),
        tensors: ckpt
            .tensors
            .iter()
            .map(|(name, t)| TensorEntry {
                name: name.clone(),
                shape: t.shape().to_vec(),
            })
            .collect(),
    };
    let header = serde_json::to_vec(&header).map_err(|e| TensorError::Checkpoint(e.to_string()))?;
    out.write_all(CHECKPOINT_MAGIC)?;
    out.write_all(&(header.len() as u64).to_le_bytes())?;
    out.write_all(&header)?;
    for (_, t) in &ckpt.tensors {
        for v in t.data() {
            out.write_all(&v.to_le_bytes())?;
        }
    }
    out.flush()?;
    Ok(())
}

pub fn read_checkpoint<R: Read>(mut input: R) -> Result<Checkpoint, TensorError> {
    let mut magic = [0u8; 8];
    input.read_exact(&mut magic)?;
    if &magic != CHECKPOINT_MAGIC {
        return Err(TensorError::Checkpoint("bad magic".into()));
    }
    let mut len = [0u8; 8];
    input.read_exact(&mut len)?;
    let mut header = vec![0u8; u64::from_le_bytes(len) as usize];
    input.read_exact(&mut header)?;
    let header: Header =
        serde_json::from_slice(&header).map_err(|e| TensorError::Checkpoint(e.to_string()))?;
    let mut tensors = Vec::with_capacity(header.tensors.len());
    let mut buf = [0u8; 8];
    for entry in header.tensors {
        let n: usize = entry.shape.iter().product();
        let mut data = Vec::with_capacity(n);
        for _ in 0..n {
            input.read_exact(&mut buf)?;
            data.push(f64::from_le_bytes(buf));
        }
        tensors.push((entry.name, Tensor::new(&entry.shape, data)?));
    }
    let mut trailing = Vec::new();
    input.read_to_end(&mut trailing)?;
    if !trailing.is_empty() {
        return Err(TensorError::Checkpoint(format!(
            "{} trailing bytes after payload",
            trailing.len()
        )));
    }
    Ok(Checkpoint {
        meta: header.meta,
        tensors,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let ckpt = Checkpoint {
            meta: serde_json::json!({"labels": ["D000200"]}),
            tensors: vec![
                ("w".into(), Tensor::from_rows(&[vec![1.0, -2.5], vec![0.0, 1e-300]]).unwrap()),
                ("b".into(), Tensor::vector(vec![f64::MIN_POSITIVE]).unwrap()),
            ],
        };
        let mut bytes = Vec::new();
        write_checkpoint(&mut bytes, &ckpt).unwrap();
        assert_eq!(&bytes[..8], CHECKPOINT_MAGIC);
        let back = read_checkpoint(bytes.as_slice()).unwrap();
        assert_eq!(back, ckpt);
        assert_eq!(back.get("b").unwrap().data(), &[f64::MIN_POSITIVE]);
    }

    #[test]
    fn truncated_payload_fails() {
        let ckpt = Checkpoint {
            meta: serde_json::Value::Null,
            tensors: vec![("w".into(), Tensor::zeros(&[3]))],
        };
        let mut bytes = Vec::new();
        write_checkpoint(&mut bytes, &ckpt).unwrap();
        bytes.truncate(bytes.len() - 4);
        assert!(read_checkpoint(bytes.as_slice()).is_err());
        assert!(read_checkpoint(&b"NOTACKPT"[..]).is_err());
    }
}
