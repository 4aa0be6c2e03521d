//! Canonical binary encoding.
//!
//! Every hash and signature in the ledger is computed over bytes produced by
//! this module, so the layout is normative:
//!
//! * integers are fixed-width big-endian,
//! * byte strings and text carry a 4-byte big-endian length prefix,
//! * sequences carry a 4-byte big-endian element count,
//! * optional values and booleans are a single `0x00`/`0x01` byte,
//! * struct fields appear in declaration order,
//! * union payloads are prefixed by a 1-byte tag.
//!
//! Decoding is strict: unknown tags, non-0/1 flag bytes, invalid UTF-8 and
//! trailing bytes are all errors, so every value has exactly one encoding.

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DecodeError {
    #[error("unexpected end of input at offset {offset}")]
    UnexpectedEnd { offset: usize },
    #[error("invalid tag {tag:#04x} for {what}")]
    InvalidTag { what: &'static str, tag: u8 },
    #[error("invalid length {len} for {what}")]
    InvalidLength { what: &'static str, len: usize },
    #[error("invalid utf-8 text")]
    InvalidUtf8,
    #[error("{0} trailing bytes after value")]
    TrailingBytes(usize),
    #[error("invalid value: {0}")]
    InvalidValue(&'static str),
}

pub type DecodeResult<T> = Result<T, DecodeError>;

/// Append-only canonical writer.
#[derive(Debug, Default, Clone)]
pub struct Encoder {
    buf: Vec<u8>,
}

impl Encoder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn u8(&mut self, v: u8) -> &mut Self {
        self.buf.push(v);
        self
    }

    pub fn u16(&mut self, v: u16) -> &mut Self {
        self.buf.extend_from_slice(&v.to_be_bytes());
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

    pub fn bool(&mut self, v: bool) -> &mut Self {
        self.u8(u8::from(v))
    }

    pub fn bytes(&mut self, v: &[u8]) -> &mut Self {
        let len = u32::try_from(v.len()).expect("byte string longer than u32::MAX");
        self.u32(len);
        self.buf.extend_from_slice(v);
        self
    }

    pub fn str(&mut self, v: &str) -> &mut Self {
        self.bytes(v.as_bytes())
    }

    pub fn len(&mut self, n: usize) -> &mut Self {
        self.u32(u32::try_from(n).expect("sequence longer than u32::MAX"))
    }

    pub fn value<T: Encode + ?Sized>(&mut self, v: &T) -> &mut Self {
        v.encode(self);
        self
    }

    pub fn option<T: Encode>(&mut self, v: Option<&T>) -> &mut Self {
        match v {
            None => self.u8(0),
            Some(inner) => self.u8(1).value(inner),
        }
    }

    pub fn seq<T: Encode>(&mut self, items: &[T]) -> &mut Self {
        self.len(items.len());
        for item in items {
            item.encode(self);
        }
        self
    }

    pub fn finish(self) -> Vec<u8> {
        self.buf
    }
}

/// Strict canonical reader over a borrowed buffer.
#[derive(Debug)]
pub struct Decoder<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Decoder<'a> {
    pub fn new(buf: &'a [u8]) -> Self {
        Self { buf, pos: 0 }
    }

    fn take(&mut self, n: usize) -> DecodeResult<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|end| *end <= self.buf.len())
            .ok_or(DecodeError::UnexpectedEnd { offset: self.pos })?;
        let out = &self.buf[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    pub fn array<const N: usize>(&mut self) -> DecodeResult<[u8; N]> {
        let mut out = [0u8; N];
        out.copy_from_slice(self.take(N)?);
        Ok(out)
    }

    pub fn u8(&mut self) -> DecodeResult<u8> {
        Ok(self.take(1)?[0])
    }

    pub fn u16(&mut self) -> DecodeResult<u16> {
        Ok(u16::from_be_bytes(self.array()?))
    }

    pub fn u32(&mut self) -> DecodeResult<u32> {
        Ok(u32::from_be_bytes(self.array()?))
    }

    pub fn u64(&mut self) -> DecodeResult<u64> {
        Ok(u64::from_be_bytes(self.array()?))
    }

    pub fn bool(&mut self) -> DecodeResult<bool> {
        match self.u8()? {
            0 => Ok(false),
            1 => Ok(true),
            tag => Err(DecodeError::InvalidTag { what: "bool", tag }),
        }
    }

    pub fn bytes(&mut self) -> DecodeResult<&'a [u8]> {
        let len = self.u32()? as usize;
        self.take(len)
    }

    /// A length-prefixed byte string whose length must be exactly `N`.
    pub fn fixed<const N: usize>(&mut self, what: &'static str) -> DecodeResult<[u8; N]> {
        let raw = self.bytes()?;
        <[u8; N]>::try_from(raw).map_err(|_| DecodeError::InvalidLength { what, len: raw.len() })
    }

    pub fn string(&mut self) -> DecodeResult<String> {
        let raw = self.bytes()?;
        std::str::from_utf8(raw)
            .map(str::to_owned)
            .map_err(|_| DecodeError::InvalidUtf8)
    }

    pub fn value<T: Decode>(&mut self) -> DecodeResult<T> {
        T::decode(self)
    }

    pub fn option<T: Decode>(&mut self) -> DecodeResult<Option<T>> {
        match self.u8()? {
            0 => Ok(None),
            1 => Ok(Some(T::decode(self)?)),
            tag => Err(DecodeError::InvalidTag { what: "option", tag }),
        }
    }

    pub fn seq<T: Decode>(&mut self) -> DecodeResult<Vec<T>> {
        let n = self.u32()? as usize;
        // Each element occupies at least one byte; refuse counts the input cannot hold.
        if n > self.remaining() {
            return Err(DecodeError::InvalidLength { what: "sequence", len: n });
        }
        (0..n).map(|_| T::decode(self)).collect()
    }

    pub fn remaining(&self) -> usize {
        self.buf.len() - self.pos
    }

    pub fn finish(self) -> DecodeResult<()> {
        match self.remaining() {
            0 => Ok(()),
            n => Err(DecodeError::TrailingBytes(n)),
        }
    }
}

pub trait Encode {
    fn encode(&self, enc: &mut Encoder);

    fn to_canonical_bytes(&self) -> Vec<u8> {
        let mut enc = Encoder::new();
        self.encode(&mut enc);
        enc.finish()
    }
}

pub trait Decode: Sized {
    fn decode(dec: &mut Decoder<'_>) -> DecodeResult<Self>;

    /// Decode a complete value; trailing bytes are rejected.
    fn from_canonical_bytes(bytes: &[u8]) -> DecodeResult<Self> {
        let mut dec = Decoder::new(bytes);
        let value = Self::decode(&mut dec)?;
        dec.finish()?;
        Ok(value)
    }
}

impl Encode for u64 {
    fn encode(&self, enc: &mut Encoder) {
        enc.u64(*self);
    }
}

impl Decode for u64 {
    fn decode(dec: &mut Decoder<'_>) -> DecodeResult<Self> {
        dec.u64()
    }
}

impl Encode for String {
    fn encode(&self, enc: &mut Encoder) {
        enc.str(self);
    }
}

impl Decode for String {
    fn decode(dec: &mut Decoder<'_>) -> DecodeResult<Self> {
        dec.string()
    }
}
