//! Shared binary container layout and atomic file writes.
//!
//! ```text
//! magic (5 bytes) | header length (u64 LE) | header (UTF-8 JSON) | payload
//! ```
//!
//! Payload contents are defined by each file type.

use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};

pub const MAGIC_LEN: usize = 5;

pub fn encode(magic: &[u8; MAGIC_LEN], header: &[u8], payload: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(MAGIC_LEN + 8 + header.len() + payload.len());
    out.extend_from_slice(magic);
    out.extend_from_slice(&(header.len() as u64).to_le_bytes());
    out.extend_from_slice(header);
    out.extend_from_slice(payload);
    out
}

/// Splits a container into `(header, payload)` after checking the magic.
pub fn decode<'a>(magic: &[u8; MAGIC_LEN], bytes: &'a [u8]) -> Result<(&'a [u8], &'a [u8])> {
    if bytes.len() < MAGIC_LEN + 8 || &bytes[..MAGIC_LEN] != magic {
        return Err(Error::Format(format!(
            "missing magic string {:?}",
            String::from_utf8_lossy(magic)
        )));
    }
    let len = u64::from_le_bytes(bytes[MAGIC_LEN..MAGIC_LEN + 8].try_into().unwrap()) as usize;
    let rest = &bytes[MAGIC_LEN + 8..];
    if len > rest.len() {
        return Err(Error::Format("header length exceeds file size".into()));
    }
    Ok(rest.split_at(len))
}

pub fn f64s_to_le(values: &[f64], out: &mut Vec<u8>) {
    out.reserve(values.len() * 8);
    for v in values {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

/// Reads exactly `count` little-endian `f64`s from the front of `bytes`.
pub fn le_to_f64s(bytes: &[u8], count: usize) -> Result<(Vec<f64>, &[u8])> {
    let need = count * 8;
    if bytes.len() < need {
        return Err(Error::Format(format!("payload truncated: need {need} bytes, have {}", bytes.len())));
    }
    let (head, tail) = bytes.split_at(need);
    let values = head
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok((values, tail))
}

/// Writes `bytes` to a temporary file beside `path`, then renames it into
/// place.
pub fn write_atomic(path: impl AsRef<Path>, bytes: &[u8]) -> Result<()> {
    let path = path.as_ref();
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::io(dir, e))?;
    tmp.write_all(bytes).map_err(|e| Error::io(path, e))?;
    tmp.as_file().sync_all().map_err(|e| Error::io(path, e))?;
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}

pub fn read(path: impl AsRef<Path>) -> Result<Vec<u8>> {
    let path = path.as_ref();
    std::fs::read(path).map_err(|e| Error::io(path, e))
}
