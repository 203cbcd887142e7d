//! Canonical byte encoding used for Fiat–Shamir transcripts and proof serialization.
//!
//! Integers are written as a big-endian `u32` byte length followed by the minimal
//! big-endian magnitude (zero is a zero-length string). Sequences carry a `u32`
//! element count. The encoding is injective, so hashing it is unambiguous.

use num_bigint::BigUint;
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum DecodeError {
    #[error("unexpected end of input")]
    Truncated,
    #[error("non-canonical integer encoding")]
    NonCanonical,
    #[error("{0} trailing bytes after value")]
    Trailing(usize),
    #[error("length {0} exceeds limit")]
    TooLong(usize),
}

#[derive(Default, Debug, Clone)]
pub struct Writer {
    buf: Vec<u8>,
}

impl Writer {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn put_u32(&mut self, v: u32) -> &mut Self {
        self.buf.extend_from_slice(&v.to_be_bytes());
        self
    }

    pub fn put_u64(&mut self, v: u64) -> &mut Self {
        self.buf.extend_from_slice(&v.to_be_bytes());
        self
    }

    pub fn put_bytes(&mut self, bytes: &[u8]) -> &mut Self {
        self.put_u32(bytes.len() as u32);
        self.buf.extend_from_slice(bytes);
        self
    }

    pub fn put_uint(&mut self, v: &BigUint) -> &mut Self {
        if v.bits() == 0 {
            self.put_u32(0)
        } else {
            self.put_bytes(&v.to_bytes_be())
        }
    }

    pub fn into_bytes(self) -> Vec<u8> {
        self.buf
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.buf
    }
}

/// Cursor over an encoded buffer.
pub struct Reader<'a> {
    buf: &'a [u8],
}

// Upper bound on any single length field; a 2048-bit integer is 256 bytes.
const MAX_FIELD: usize = 1 << 20;

impl<'a> Reader<'a> {
    pub fn new(buf: &'a [u8]) -> Self {
        Self { buf }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8], DecodeError> {
        if self.buf.len() < n {
            return Err(DecodeError::Truncated);
        }
        let (head, tail) = self.buf.split_at(n);
        self.buf = tail;
        Ok(head)
    }

    pub fn get_u32(&mut self) -> Result<u32, DecodeError> {
        let b = self.take(4)?;
        Ok(u32::from_be_bytes(b.try_into().expect("4 bytes")))
    }

    pub fn get_u64(&mut self) -> Result<u64, DecodeError> {
        let b = self.take(8)?;
        Ok(u64::from_be_bytes(b.try_into().expect("8 bytes")))
    }

    pub fn get_len(&mut self) -> Result<usize, DecodeError> {
        let n = self.get_u32()? as usize;
        if n > MAX_FIELD {
            return Err(DecodeError::TooLong(n));
        }
        Ok(n)
    }

    pub fn get_bytes(&mut self) -> Result<&'a [u8], DecodeError> {
        let n = self.get_len()?;
        self.take(n)
    }

    pub fn get_uint(&mut self) -> Result<BigUint, DecodeError> {
        let bytes = self.get_bytes()?;
        if bytes.first() == Some(&0) {
            return Err(DecodeError::NonCanonical);
        }
        Ok(BigUint::from_bytes_be(bytes))
    }

    pub fn finish(self) -> Result<(), DecodeError> {
        if self.buf.is_empty() {
            Ok(())
        } else {
            Err(DecodeError::Trailing(self.buf.len()))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn zero_is_empty_string() {
        let mut w = Writer::new();
        w.put_uint(&BigUint::from(0u32));
        assert_eq!(w.as_bytes(), &[0, 0, 0, 0]);
    }

    #[test]
    fn leading_zero_rejected() {
        let mut r = Reader::new(&[0, 0, 0, 2, 0, 5]);
        assert_eq!(r.get_uint(), Err(DecodeError::NonCanonical));
    }

    proptest! {
        #[test]
        fn uint_roundtrip(bytes in proptest::collection::vec(any::<u8>(), 0..64), tag in any::<u64>()) {
            let v = BigUint::from_bytes_be(&bytes);
            let mut w = Writer::new();
            w.put_u64(tag).put_uint(&v);
            let buf = w.into_bytes();
            let mut r = Reader::new(&buf);
            prop_assert_eq!(r.get_u64().unwrap(), tag);
            prop_assert_eq!(r.get_uint().unwrap(), v);
            prop_assert!(r.finish().is_ok());
            // every strict prefix fails to decode
            for cut in 0..buf.len() {
                let mut r = Reader::new(&buf[..cut]);
                let ok = r.get_u64().and_then(|_| r.get_uint()).is_ok();
                prop_assert!(!ok);
            }
        }
    }
}
