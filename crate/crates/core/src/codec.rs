//! Canonical length-prefixed tuple encoding.
//!
//! Every element is written as a 4-byte big-endian length followed by its
//! bytes. Integers are 8-byte big-endian elements and enum variants are
//! 1-byte tag elements. Fixed-width values (digests, keys, signatures) are
//! written at their natural width. A value has exactly one encoding, so
//! hashes and signatures over encodings are stable across runs.

use alloc::vec::Vec;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum DecodeError {
    #[error("input ended before the value was complete")]
    UnexpectedEnd,
    #[error("element has length {actual}, expected {expected}")]
    LengthMismatch { expected: usize, actual: usize },
    #[error("unknown tag {0}")]
    UnknownTag(u8),
    #[error("{0} trailing bytes after value")]
    Trailing(usize),
}

#[derive(Default, Debug, Clone)]
pub struct Encoder {
    buf: Vec<u8>,
}

impl Encoder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn bytes(&mut self, data: &[u8]) -> &mut Self {
        let len = u32::try_from(data.len()).expect("element longer than 4 GiB");
        self.buf.extend_from_slice(&len.to_be_bytes());
        self.buf.extend_from_slice(data);
        self
    }

    pub fn u64(&mut self, v: u64) -> &mut Self {
        self.bytes(&v.to_be_bytes())
    }

    pub fn tag(&mut self, t: u8) -> &mut Self {
        self.bytes(&[t])
    }

    pub fn finish(&mut self) -> Vec<u8> {
        core::mem::take(&mut self.buf)
    }
}

pub struct Decoder<'a> {
    input: &'a [u8],
}

impl<'a> Decoder<'a> {
    pub fn new(input: &'a [u8]) -> Self {
        Self { input }
    }

    pub fn bytes(&mut self) -> Result<&'a [u8], DecodeError> {
        if self.input.len() < 4 {
            return Err(DecodeError::UnexpectedEnd);
        }
        let (len, rest) = self.input.split_at(4);
        let len = u32::from_be_bytes(len.try_into().unwrap()) as usize;
        if rest.len() < len {
            return Err(DecodeError::UnexpectedEnd);
        }
        let (value, rest) = rest.split_at(len);
        self.input = rest;
        Ok(value)
    }

    pub fn fixed<const N: usize>(&mut self) -> Result<[u8; N], DecodeError> {
        let b = self.bytes()?;
        b.try_into().map_err(|_| DecodeError::LengthMismatch { expected: N, actual: b.len() })
    }

    pub fn u64(&mut self) -> Result<u64, DecodeError> {
        Ok(u64::from_be_bytes(self.fixed::<8>()?))
    }

    pub fn tag(&mut self) -> Result<u8, DecodeError> {
        Ok(self.fixed::<1>()?[0])
    }

    pub fn finish(self) -> Result<(), DecodeError> {
        match self.input.len() {
            0 => Ok(()),
            n => Err(DecodeError::Trailing(n)),
        }
    }
}
