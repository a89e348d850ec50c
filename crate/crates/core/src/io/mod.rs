//! On-disk formats: policy checkpoints, demonstration files, metrics CSV and
//! content digests.
//!
//! Both binary containers share one framing: a five-byte magic, a
//! little-endian `u32` header length, a JSON header, then little-endian
//! payload. Readers reject wrong magic, truncated or oversized headers and
//! payloads whose length disagrees with the header.

mod checkpoint;
mod demos;
mod metrics;

use serde::de::DeserializeOwned;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub use checkpoint::{read_checkpoint, write_checkpoint, Checkpoint, CheckpointMeta, DiscriminatorSection, CHECKPOINT_MAGIC};
pub use demos::{demonstrations_from_bytes, demonstrations_to_bytes, read_demonstrations, write_demonstrations, DEMO_MAGIC};
pub use metrics::{append_metrics, read_metrics, write_metrics_header};

/// Headers larger than this are treated as corruption.
pub const MAX_HEADER_LEN: u32 = 1 << 20;

/// Lowercase hex SHA-256 of a byte string.
pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Digest of a value's compact JSON encoding. Struct fields serialize in
/// declaration order, so equal values always hash equally.
pub fn json_digest<T: Serialize + ?Sized>(value: &T) -> Result<String> {
    Ok(sha256_hex(&serde_json::to_vec(value)?))
}

fn put_header<T: Serialize>(out: &mut Vec<u8>, magic: &[u8; 5], header: &T) -> Result<()> {
    let json = serde_json::to_vec(header)?;
    out.extend_from_slice(magic);
    put_json(out, &json)
}

fn put_json(out: &mut Vec<u8>, json: &[u8]) -> Result<()> {
    let len = u32::try_from(json.len())
        .ok()
        .filter(|&l| l <= MAX_HEADER_LEN)
        .ok_or_else(|| Error::format("header too large"))?;
    out.extend_from_slice(&len.to_le_bytes());
    out.extend_from_slice(json);
    Ok(())
}

fn put_f32s(out: &mut Vec<u8>, values: &[f64]) {
    for &v in values {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
}

/// Cursor over a byte buffer that turns every short read into a format error.
struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn new(bytes: &'a [u8]) -> Self {
        Reader { bytes, pos: 0 }
    }

    fn remaining(&self) -> usize {
        self.bytes.len() - self.pos
    }

    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if n > self.remaining() {
            return Err(Error::format(format!(
                "truncated {what}: need {n} bytes, {} left",
                self.remaining()
            )));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn magic(&mut self, expected: &[u8; 5]) -> Result<()> {
        let got = self.take(5, "magic")?;
        if got != expected {
            return Err(Error::format(format!(
                "bad magic {:?}, expected {:?}",
                String::from_utf8_lossy(got),
                String::from_utf8_lossy(expected)
            )));
        }
        Ok(())
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        let b = self.take(4, what)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn u8(&mut self, what: &str) -> Result<u8> {
        Ok(self.take(1, what)?[0])
    }

    fn json<T: DeserializeOwned>(&mut self, what: &str) -> Result<T> {
        let len = self.u32(what)?;
        if len > MAX_HEADER_LEN {
            return Err(Error::format(format!("{what} length {len} exceeds the limit")));
        }
        let raw = self.take(len as usize, what)?;
        serde_json::from_slice(raw).map_err(|e| Error::format(format!("{what}: {e}")))
    }

    fn f32s(&mut self, n: usize, what: &str) -> Result<Vec<f64>> {
        let bytes = n.checked_mul(4).ok_or_else(|| Error::format(format!("{what} too large")))?;
        let raw = self.take(bytes, what)?;
        let out: Vec<f64> = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
            .collect();
        if out.iter().any(|v| !v.is_finite()) {
            return Err(Error::format(format!("{what} contains non-finite values")));
        }
        Ok(out)
    }

    fn finish(&self, what: &str) -> Result<()> {
        if self.remaining() != 0 {
            return Err(Error::format(format!("{} trailing bytes after {what}", self.remaining())));
        }
        Ok(())
    }
}
