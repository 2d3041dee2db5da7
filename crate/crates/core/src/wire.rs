//! Canonical binary encoding helpers.
//!
//! Every persistent or signed byte form in this crate (envelopes,
//! attestation documents, images, models, bundles) is built from the same
//! primitives: fixed-order fields, 4-byte big-endian length prefixes for
//! variable data, little-endian IEEE floats for tensor payloads. Two
//! encoders must agree byte for byte, so all encoding goes through here.

use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum WireError {
    #[error("unexpected end of input at offset {offset}")]
    UnexpectedEof { offset: usize },
    #[error("bad magic at offset {offset}: expected {expected}")]
    BadMagic { offset: usize, expected: String },
    #[error("invalid field at offset {offset}: {what}")]
    Invalid { offset: usize, what: String },
    #[error("{trailing} trailing bytes after offset {offset}")]
    TrailingBytes { offset: usize, trailing: usize },
}

/// Sequential writer producing the canonical byte form.
#[derive(Default)]
pub struct Writer {
    buf: Vec<u8>,
}

impl Writer {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn put_raw(&mut self, bytes: &[u8]) {
        self.buf.extend_from_slice(bytes);
    }

    pub fn put_u8(&mut self, v: u8) {
        self.buf.push(v);
    }

    pub fn put_u32(&mut self, v: u32) {
        self.buf.extend_from_slice(&v.to_be_bytes());
    }

    pub fn put_u64(&mut self, v: u64) {
        self.buf.extend_from_slice(&v.to_be_bytes());
    }

    pub fn put_f32(&mut self, v: f32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn put_f64(&mut self, v: f64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    /// Length-prefixed byte string (4-byte big-endian length).
    pub fn put_bytes(&mut self, bytes: &[u8]) {
        self.put_u32(bytes.len() as u32);
        self.put_raw(bytes);
    }

    pub fn put_str(&mut self, s: &str) {
        self.put_bytes(s.as_bytes());
    }

    pub fn finish(self) -> Vec<u8> {
        self.buf
    }
}

/// Sequential reader over a canonical byte form, tracking the offset for
/// error reporting.
pub struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    pub fn new(buf: &'a [u8]) -> Self {
        Self { buf, pos: 0 }
    }

    pub fn offset(&self) -> usize {
        self.pos
    }

    pub fn remaining(&self) -> usize {
        self.buf.len() - self.pos
    }

    pub fn take(&mut self, n: usize) -> Result<&'a [u8], WireError> {
        if self.remaining() < n {
            return Err(WireError::UnexpectedEof { offset: self.pos });
        }
        let out = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    pub fn expect_magic(&mut self, magic: &[u8]) -> Result<(), WireError> {
        let offset = self.pos;
        let got = self.take(magic.len()).map_err(|_| WireError::BadMagic {
            offset,
            expected: String::from_utf8_lossy(magic).into_owned(),
        })?;
        if got != magic {
            return Err(WireError::BadMagic {
                offset,
                expected: String::from_utf8_lossy(magic).into_owned(),
            });
        }
        Ok(())
    }

    pub fn u8(&mut self) -> Result<u8, WireError> {
        Ok(self.take(1)?[0])
    }

    pub fn u32(&mut self) -> Result<u32, WireError> {
        Ok(u32::from_be_bytes(self.take(4)?.try_into().unwrap()))
    }

    pub fn u64(&mut self) -> Result<u64, WireError> {
        Ok(u64::from_be_bytes(self.take(8)?.try_into().unwrap()))
    }

    pub fn f32(&mut self) -> Result<f32, WireError> {
        Ok(f32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    pub fn f64(&mut self) -> Result<f64, WireError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    /// Length-prefixed byte string.
    pub fn bytes(&mut self) -> Result<&'a [u8], WireError> {
        let len = self.u32()? as usize;
        if len > self.remaining() {
            return Err(WireError::UnexpectedEof { offset: self.pos });
        }
        self.take(len)
    }

    pub fn string(&mut self) -> Result<String, WireError> {
        let offset = self.pos;
        let raw = self.bytes()?;
        String::from_utf8(raw.to_vec()).map_err(|_| WireError::Invalid {
            offset,
            what: "not valid utf-8".into(),
        })
    }

    /// Fails when input remains; every canonical decoder ends with this.
    pub fn done(&self) -> Result<(), WireError> {
        if self.remaining() != 0 {
            return Err(WireError::TrailingBytes {
                offset: self.pos,
                trailing: self.remaining(),
            });
        }
        Ok(())
    }
}
