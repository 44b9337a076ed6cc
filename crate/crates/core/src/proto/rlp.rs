//! Recursive length prefix serialization, canonical form only.

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum RlpError {
    #[error("non-canonical encoding")]
    NonCanonical,
    #[error("truncated input")]
    Truncated,
    #[error("trailing bytes after item")]
    Trailing,
    #[error("expected {0}")]
    Unexpected(&'static str),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Item {
    Bytes(Vec<u8>),
    List(Vec<Item>),
}

impl Item {
    pub fn bytes(b: impl Into<Vec<u8>>) -> Item {
        Item::Bytes(b.into())
    }

    /// Big-endian integer without leading zeros (zero is the empty string).
    pub fn uint(n: u64) -> Item {
        let be = n.to_be_bytes();
        let skip = be.iter().take_while(|&&b| b == 0).count();
        Item::Bytes(be[skip..].to_vec())
    }

    pub fn as_bytes(&self) -> Result<&[u8], RlpError> {
        match self {
            Item::Bytes(b) => Ok(b),
            Item::List(_) => Err(RlpError::Unexpected("byte string")),
        }
    }

    pub fn as_list(&self) -> Result<&[Item], RlpError> {
        match self {
            Item::List(l) => Ok(l),
            Item::Bytes(_) => Err(RlpError::Unexpected("list")),
        }
    }

    pub fn as_uint(&self) -> Result<u64, RlpError> {
        let b = self.as_bytes()?;
        if b.len() > 8 {
            return Err(RlpError::Unexpected("integer of at most 8 bytes"));
        }
        if b.first() == Some(&0) {
            return Err(RlpError::NonCanonical);
        }
        Ok(b.iter().fold(0u64, |acc, &x| (acc << 8) | x as u64))
    }
}

fn put_length(out: &mut Vec<u8>, len: usize, short_base: u8, long_base: u8) {
    if len < 56 {
        out.push(short_base + len as u8);
    } else {
        let be = (len as u64).to_be_bytes();
        let skip = be.iter().take_while(|&&b| b == 0).count();
        out.push(long_base + (8 - skip) as u8);
        out.extend_from_slice(&be[skip..]);
    }
}

pub fn encode_into(item: &Item, out: &mut Vec<u8>) {
    match item {
        Item::Bytes(b) if b.len() == 1 && b[0] < 0x80 => out.push(b[0]),
        Item::Bytes(b) => {
            put_length(out, b.len(), 0x80, 0xB7);
            out.extend_from_slice(b);
        }
        Item::List(items) => {
            let mut body = Vec::new();
            for i in items {
                encode_into(i, &mut body);
            }
            put_length(out, body.len(), 0xC0, 0xF7);
            out.extend_from_slice(&body);
        }
    }
}

pub fn encode(item: &Item) -> Vec<u8> {
    let mut out = Vec::new();
    encode_into(item, &mut out);
    out
}

fn read_long_len(bytes: &[u8], len_of_len: usize) -> Result<usize, RlpError> {
    let raw = bytes.get(1..1 + len_of_len).ok_or(RlpError::Truncated)?;
    if raw[0] == 0 {
        return Err(RlpError::NonCanonical);
    }
    if len_of_len > 8 {
        return Err(RlpError::Truncated);
    }
    let len = raw.iter().fold(0u64, |acc, &x| (acc << 8) | x as u64);
    if len < 56 {
        return Err(RlpError::NonCanonical);
    }
    usize::try_from(len).map_err(|_| RlpError::Truncated)
}

/// Decodes the item at the front of `bytes`, returning it and the bytes used.
pub fn decode_prefix(bytes: &[u8]) -> Result<(Item, usize), RlpError> {
    let first = *bytes.first().ok_or(RlpError::Truncated)?;
    let (is_list, header, len) = match first {
        0x00..=0x7F => return Ok((Item::Bytes(vec![first]), 1)),
        0x80..=0xB7 => {
            let len = (first - 0x80) as usize;
            if len == 1 && bytes.get(1).is_some_and(|&b| b < 0x80) {
                return Err(RlpError::NonCanonical);
            }
            (false, 1, len)
        }
        0xB8..=0xBF => {
            let lol = (first - 0xB7) as usize;
            (false, 1 + lol, read_long_len(bytes, lol)?)
        }
        0xC0..=0xF7 => (true, 1, (first - 0xC0) as usize),
        0xF8..=0xFF => {
            let lol = (first - 0xF7) as usize;
            (true, 1 + lol, read_long_len(bytes, lol)?)
        }
    };
    let end = header.checked_add(len).ok_or(RlpError::Truncated)?;
    let body = bytes.get(header..end).ok_or(RlpError::Truncated)?;
    if !is_list {
        return Ok((Item::Bytes(body.to_vec()), end));
    }
    let mut items = Vec::new();
    let mut rest = body;
    while !rest.is_empty() {
        let (item, used) = decode_prefix(rest)?;
        items.push(item);
        rest = &rest[used..];
    }
    Ok((Item::List(items), end))
}

pub fn decode(bytes: &[u8]) -> Result<Item, RlpError> {
    let (item, used) = decode_prefix(bytes)?;
    if used != bytes.len() {
        return Err(RlpError::Trailing);
    }
    Ok(item)
}
