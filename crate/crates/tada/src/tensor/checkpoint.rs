//! Named-array checkpoint container.
//!
//! Layout: a UTF-8 text header, then raw little-endian f64 data.
//!
//! ```text
//! tada-checkpoint v1
//! arrays <count>
//! <name> <dim0,dim1,...|scalar> <offset> <len>
//! ...
//! end-header
//! <data bytes>
//! ```
//!
//! Offsets and lengths count f64 elements from the start of the data block.
//! Array order in the header is the save order; loading preserves it.

use std::collections::BTreeMap;
use std::io::Read;
use std::path::Path;

use super::{Tensor, TensorError};
use crate::fsutil;

const MAGIC: &str = "tada-checkpoint v1";

/// Serialize named tensors. Names must be unique and contain no whitespace.
pub fn save(path: &Path, arrays: &[(String, &Tensor)]) -> Result<(), TensorError> {
    let mut seen = BTreeMap::new();
    for (name, _) in arrays {
        if name.is_empty() || name.chars().any(char::is_whitespace) {
            return Err(TensorError::CheckpointFormat(format!(
                "invalid array name {name:?}"
            )));
        }
        if seen.insert(name.clone(), ()).is_some() {
            return Err(TensorError::CheckpointFormat(format!(
                "duplicate array name {name:?}"
            )));
        }
    }
    let mut header = String::new();
    header.push_str(MAGIC);
    header.push('\n');
    header.push_str(&format!("arrays {}\n", arrays.len()));
    let mut offset = 0usize;
    for (name, t) in arrays {
        let dims = if t.shape.is_empty() {
            "scalar".to_string()
        } else {
            t.shape
                .iter()
                .map(|d| d.to_string())
                .collect::<Vec<_>>()
                .join(",")
        };
        header.push_str(&format!("{name} {dims} {offset} {}\n", t.data.len()));
        offset += t.data.len();
    }
    header.push_str("end-header\n");

    let mut bytes = header.into_bytes();
    bytes.reserve(offset * 8);
    for (_, t) in arrays {
        for v in &t.data {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
    }
    fsutil::atomic_write(path, &bytes).map_err(TensorError::CheckpointIo)
}

/// Load a checkpoint saved by [`save`]. Tensors come back non-trainable.
pub fn load(path: &Path) -> Result<Vec<(String, Tensor)>, TensorError> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(TensorError::CheckpointIo)?;

    let header_end = find_header_end(&bytes)?;
    let header = std::str::from_utf8(&bytes[..header_end])
        .map_err(|_| TensorError::CheckpointFormat("header is not UTF-8".into()))?;
    let data = &bytes[header_end..];

    let mut lines = header.lines();
    if lines.next() != Some(MAGIC) {
        return Err(TensorError::CheckpointFormat("bad magic line".into()));
    }
    let count: usize = lines
        .next()
        .and_then(|l| l.strip_prefix("arrays "))
        .and_then(|n| n.parse().ok())
        .ok_or_else(|| TensorError::CheckpointFormat("bad arrays line".into()))?;

    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let line = lines
            .next()
            .ok_or_else(|| TensorError::CheckpointFormat("truncated header".into()))?;
        let mut parts = line.split_whitespace();
        let (name, dims, offset, len) = (
            parts.next(),
            parts.next(),
            parts.next(),
            parts.next(),
        );
        let (name, dims, offset, len) = match (name, dims, offset, len, parts.next()) {
            (Some(n), Some(d), Some(o), Some(l), None) => (n, d, o, l),
            _ => {
                return Err(TensorError::CheckpointFormat(format!(
                    "bad array line {line:?}"
                )))
            }
        };
        let offset: usize = offset
            .parse()
            .map_err(|_| TensorError::CheckpointFormat(format!("bad offset in {line:?}")))?;
        let len: usize = len
            .parse()
            .map_err(|_| TensorError::CheckpointFormat(format!("bad length in {line:?}")))?;
        let shape: Vec<usize> = if dims == "scalar" {
            vec![]
        } else {
            dims.split(',')
                .map(|d| {
                    d.parse().map_err(|_| {
                        TensorError::CheckpointFormat(format!("bad dims in {line:?}"))
                    })
                })
                .collect::<Result<_, _>>()?
        };
        let numel: usize = shape.iter().product();
        if numel != len {
            return Err(TensorError::CheckpointFormat(format!(
                "shape/length mismatch in {line:?}"
            )));
        }
        let byte_start = offset * 8;
        let byte_end = byte_start + len * 8;
        if byte_end > data.len() {
            return Err(TensorError::CheckpointFormat(format!(
                "data block too short for {name:?}"
            )));
        }
        let values: Vec<f64> = data[byte_start..byte_end]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        out.push((name.to_string(), Tensor::new(shape, values)?));
    }
    if lines.next() != Some("end-header") {
        return Err(TensorError::CheckpointFormat("missing end-header".into()));
    }
    Ok(out)
}

fn find_header_end(bytes: &[u8]) -> Result<usize, TensorError> {
    let needle = b"end-header\n";
    let mut i = 0;
    while i + needle.len() <= bytes.len() {
        if &bytes[i..i + needle.len()] == needle && (i == 0 || bytes[i - 1] == b'\n') {
            return Ok(i + needle.len());
        }
        i += 1;
    }
    Err(TensorError::CheckpointFormat(
        "missing end-header".into(),
    ))
}
