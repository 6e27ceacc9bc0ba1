//! Canonical binary encoding shared by everything that gets hashed or signed.
//!
//! Fields are written in a fixed order. Integers are big-endian, strings and
//! byte blobs carry a 4-byte big-endian length prefix, and an absent optional
//! field is written as a zero length marker.

use thiserror::Error;

#[derive(Debug, Default, Clone)]
pub struct CanonicalWriter {
    buf: Vec<u8>,
}

impl CanonicalWriter {
    pub fn new() -> Self {
        Self::default()
    }

    /// Starts the buffer with a length-prefixed domain tag.
    pub fn with_domain(domain: &str) -> Self {
        let mut w = Self::new();
        w.str(domain);
        w
    }

    pub fn u8(&mut self, v: u8) -> &mut Self {
        self.buf.push(v);
        self
    }

    pub fn u32(&mut self, v: u32) -> &mut Self {
        self.buf.extend_from_slice(&v.to_be_bytes());
        self
    }

    pub fn u64(&mut self, v: u64) -> &mut Self {
        self.buf.extend_from_slice(&v.to_be_bytes());
        self
    }

    pub fn i64(&mut self, v: i64) -> &mut Self {
        self.buf.extend_from_slice(&v.to_be_bytes());
        self
    }

    pub fn bool(&mut self, v: bool) -> &mut Self {
        self.u8(u8::from(v))
    }

    pub fn raw(&mut self, bytes: &[u8]) -> &mut Self {
        self.buf.extend_from_slice(bytes);
        self
    }

    pub fn bytes(&mut self, bytes: &[u8]) -> &mut Self {
        let len = u32::try_from(bytes.len()).expect("canonical field exceeds u32 length");
        self.u32(len);
        self.raw(bytes)
    }

    pub fn str(&mut self, s: &str) -> &mut Self {
        self.bytes(s.as_bytes())
    }

    /// Zero-length marker for `None`, otherwise the length-prefixed payload.
    pub fn optional(&mut self, payload: Option<&[u8]>) -> &mut Self {
        match payload {
            None => self.u32(0),
            Some(p) => self.bytes(p),
        }
    }

    pub fn finish(self) -> Vec<u8> {
        self.buf
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum DecodeError {
    #[error("unexpected end of input at offset {0}")]
    Truncated(usize),
    #[error("invalid utf-8 string at offset {0}")]
    Utf8(usize),
    #[error("{0}")]
    Invalid(String),
}

/// Cursor over canonical bytes; the inverse of [`CanonicalWriter`].
#[derive(Debug)]
pub struct CanonicalReader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> CanonicalReader<'a> {
    pub fn new(buf: &'a [u8]) -> Self {
        Self { buf, pos: 0 }
    }

    pub fn is_empty(&self) -> bool {
        self.pos == self.buf.len()
    }

    pub fn take(&mut self, n: usize) -> Result<&'a [u8], DecodeError> {
        let end = self.pos.checked_add(n).ok_or(DecodeError::Truncated(self.pos))?;
        let out = self.buf.get(self.pos..end).ok_or(DecodeError::Truncated(self.pos))?;
        self.pos = end;
        Ok(out)
    }

    pub fn u8(&mut self) -> Result<u8, DecodeError> {
        Ok(self.take(1)?[0])
    }

    pub fn u32(&mut self) -> Result<u32, DecodeError> {
        Ok(u32::from_be_bytes(self.take(4)?.try_into().unwrap()))
    }

    pub fn u64(&mut self) -> Result<u64, DecodeError> {
        Ok(u64::from_be_bytes(self.take(8)?.try_into().unwrap()))
    }

    pub fn i64(&mut self) -> Result<i64, DecodeError> {
        Ok(i64::from_be_bytes(self.take(8)?.try_into().unwrap()))
    }

    pub fn bytes(&mut self) -> Result<&'a [u8], DecodeError> {
        let len = self.u32()? as usize;
        self.take(len)
    }

    pub fn str(&mut self) -> Result<&'a str, DecodeError> {
        let at = self.pos;
        std::str::from_utf8(self.bytes()?).map_err(|_| DecodeError::Utf8(at))
    }

    pub fn expect_domain(&mut self, domain: &str) -> Result<(), DecodeError> {
        let got = self.str()?;
        if got == domain {
            Ok(())
        } else {
            Err(DecodeError::Invalid(format!("expected domain {domain:?}, found {got:?}")))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layout_is_big_endian_and_length_prefixed() {
        let mut w = CanonicalWriter::new();
        w.u32(1).str("ab").optional(None).i64(-1);
        assert_eq!(
            w.finish(),
            vec![0, 0, 0, 1, 0, 0, 0, 2, b'a', b'b', 0, 0, 0, 0, 255, 255, 255, 255, 255, 255, 255, 255]
        );
    }

    #[test]
    fn reader_inverts_writer() {
        let mut w = CanonicalWriter::with_domain("d");
        w.u64(7).str("héllo").bytes(&[1, 2, 3]);
        let bytes = w.finish();
        let mut r = CanonicalReader::new(&bytes);
        r.expect_domain("d").unwrap();
        assert_eq!(r.u64().unwrap(), 7);
        assert_eq!(r.str().unwrap(), "héllo");
        assert_eq!(r.bytes().unwrap(), &[1, 2, 3]);
        assert!(r.is_empty());
        assert_eq!(r.u8(), Err(DecodeError::Truncated(bytes.len())));
    }
}
