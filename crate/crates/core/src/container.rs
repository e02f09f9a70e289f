//! The `.nqr` binary container shared by datasets, noise banks, external
//! series and model checkpoints.
//!
//! Layout: one line of JSON (the header) terminated by `\n`, followed by a
//! raw little-endian payload. The header records the container kind, a
//! format version, the payload length and its SHA-256 digest, plus a
//! kind-specific `meta` object.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const FORMAT_TAG: &str = "nqr";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ContainerKind {
    Dataset,
    NoiseBank,
    Series,
    Checkpoint,
}

impl ContainerKind {
    pub fn name(self) -> &'static str {
        match self {
            ContainerKind::Dataset => "dataset",
            ContainerKind::NoiseBank => "noisebank",
            ContainerKind::Series => "series",
            ContainerKind::Checkpoint => "checkpoint",
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Header {
    pub format: String,
    pub version: u32,
    pub kind: ContainerKind,
    pub payload_bytes: u64,
    pub checksum: String,
    pub meta: serde_json::Value,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    let mut out = String::with_capacity(64);
    for b in digest.iter() {
        out.push_str(&format!("{b:02x}"));
    }
    out
}

/// Serializes a container to bytes.
pub fn encode(kind: ContainerKind, meta: serde_json::Value, payload: &[u8]) -> Result<Vec<u8>> {
    let header = Header {
        format: FORMAT_TAG.to_string(),
        version: FORMAT_VERSION,
        kind,
        payload_bytes: payload.len() as u64,
        checksum: format!("sha256:{}", sha256_hex(payload)),
        meta,
    };
    let mut out = serde_json::to_vec(&header)?;
    out.push(b'\n');
    out.extend_from_slice(payload);
    Ok(out)
}

pub fn write(path: &Path, kind: ContainerKind, meta: serde_json::Value, payload: &[u8]) -> Result<()> {
    let bytes = encode(kind, meta, payload)?;
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&bytes).map_err(|e| Error::io(path, e))?;
    Ok(())
}

/// Parses and validates a container, returning its header and payload.
///
/// `expected` is checked against the header kind when given.
pub fn decode(bytes: &[u8], expected: Option<ContainerKind>) -> Result<(Header, Vec<u8>)> {
    if bytes.is_empty() {
        return Err(Error::Format("empty file".into()));
    }
    let nl = bytes
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| Error::Format("missing header line".into()))?;
    let header: Header = serde_json::from_slice(&bytes[..nl])
        .map_err(|e| Error::Format(format!("unreadable header: {e}")))?;
    if header.format != FORMAT_TAG {
        return Err(Error::Format(format!("unknown format tag {:?}", header.format)));
    }
    if header.version != FORMAT_VERSION {
        return Err(Error::Version { expected: FORMAT_VERSION, found: header.version });
    }
    if let Some(kind) = expected {
        if header.kind != kind {
            return Err(Error::TypeTag {
                expected: kind.name().to_string(),
                found: header.kind.name().to_string(),
            });
        }
    }
    let payload = &bytes[nl + 1..];
    if payload.len() as u64 != header.payload_bytes {
        return Err(Error::Format(format!(
            "payload truncated or padded: header says {} bytes, found {}",
            header.payload_bytes,
            payload.len()
        )));
    }
    let found = format!("sha256:{}", sha256_hex(payload));
    if found != header.checksum {
        return Err(Error::Checksum { expected: header.checksum.clone(), found });
    }
    Ok((header, payload.to_vec()))
}

pub fn read(path: &Path, expected: Option<ContainerKind>) -> Result<(Header, Vec<u8>)> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes, expected)
}

/// Little-endian payload writer.
#[derive(Debug, Default)]
pub struct PayloadWriter {
    buf: Vec<u8>,
}

impl PayloadWriter {
    pub fn with_capacity(bytes: usize) -> Self {
        Self { buf: Vec::with_capacity(bytes) }
    }

    pub fn f32(&mut self, v: f32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn f64(&mut self, v: f64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn finish(self) -> Vec<u8> {
        self.buf
    }
}

/// Little-endian payload reader that reports truncation instead of panicking.
#[derive(Debug)]
pub struct PayloadReader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> PayloadReader<'a> {
    pub fn new(buf: &'a [u8]) -> Self {
        Self { buf, pos: 0 }
    }

    fn take<const N: usize>(&mut self) -> Result<[u8; N]> {
        let end = self.pos + N;
        if end > self.buf.len() {
            return Err(Error::Format(format!("payload ends at byte {}, needed {end}", self.buf.len())));
        }
        let mut out = [0u8; N];
        out.copy_from_slice(&self.buf[self.pos..end]);
        self.pos = end;
        Ok(out)
    }

    pub fn f32(&mut self) -> Result<f32> {
        Ok(f32::from_le_bytes(self.take()?))
    }

    pub fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take()?))
    }

    pub fn remaining(&self) -> usize {
        self.buf.len() - self.pos
    }

    pub fn finish(self) -> Result<()> {
        if self.remaining() != 0 {
            return Err(Error::Format(format!("{} trailing payload bytes", self.remaining())));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip_and_checksum() {
        let payload: Vec<u8> = (0..64u8).collect();
        let bytes = encode(ContainerKind::Series, serde_json::json!({"n": 4}), &payload).unwrap();
        let (h, p) = decode(&bytes, Some(ContainerKind::Series)).unwrap();
        assert_eq!(p, payload);
        assert_eq!(h.meta["n"], 4);

        let mut bad = bytes.clone();
        let last = bad.len() - 1;
        bad[last] ^= 0x01;
        assert!(matches!(decode(&bad, None), Err(Error::Checksum { .. })));

        assert!(matches!(
            decode(&bytes, Some(ContainerKind::Dataset)),
            Err(Error::TypeTag { .. })
        ));
        assert!(matches!(decode(&bytes[..bytes.len() - 3], None), Err(Error::Format(_))));
        assert!(matches!(decode(&[], None), Err(Error::Format(_))));
    }

    #[test]
    fn version_mismatch() {
        let bytes = encode(ContainerKind::Series, serde_json::Value::Null, &[]).unwrap();
        let text = String::from_utf8(bytes).unwrap().replace("\"version\":1", "\"version\":9");
        assert!(matches!(decode(text.as_bytes(), None), Err(Error::Version { found: 9, .. })));
    }

    #[test]
    fn reader_reports_truncation() {
        let mut w = PayloadWriter::default();
        w.f32(1.5);
        w.f64(-2.25);
        let buf = w.finish();
        let mut r = PayloadReader::new(&buf);
        assert_eq!(r.f32().unwrap(), 1.5);
        assert_eq!(r.f64().unwrap(), -2.25);
        assert!(r.f32().is_err());
    }
}
