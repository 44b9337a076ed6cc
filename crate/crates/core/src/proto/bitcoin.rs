//! Wire codec for the message protocol shared by Bitcoin and its forks
//! (Bitcoin Cash, Dash, Dogecoin, Litecoin, Zcash).
//!
//! A frame is `magic ‖ command ‖ length ‖ checksum ‖ payload` where the
//! checksum is the first four bytes of `SHA-256(SHA-256(payload))`.

use std::fmt;
use std::net::Ipv4Addr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

/// Largest accepted payload (32 MiB).
pub const MAX_PAYLOAD: usize = 32 * 1024 * 1024;
pub const HEADER_LEN: usize = 24;
/// Size of one `net_addr` entry inside an `addr` payload (with timestamp).
pub const ADDR_ENTRY_LEN: usize = 30;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CodecError {
    #[error("payload of {0} bytes exceeds the 32 MiB limit")]
    Oversize(usize),
    #[error("bad magic: expected {expected}, found {found}")]
    BadMagic { expected: String, found: String },
    #[error("checksum mismatch")]
    BadChecksum,
    #[error("truncated input")]
    Truncated,
    #[error("non-minimal compact size encoding")]
    NonMinimal,
    #[error("addr message carries {count} entries, limit is {limit}")]
    TooManyAddrs { count: u64, limit: usize },
    #[error("malformed command name")]
    BadCommand,
    #[error("address is not IPv4-mapped")]
    NotIpv4,
    #[error("malformed payload: {0}")]
    Malformed(&'static str),
}

/// Per-chain protocol constants.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChainParams {
    pub name: String,
    #[serde(with = "hex_magic")]
    pub magic: [u8; 4],
    pub default_port: u16,
    pub protocol_version: i32,
    #[serde(default = "default_user_agent")]
    pub user_agent: String,
    #[serde(default)]
    pub services: u64,
    #[serde(default = "default_max_addr")]
    pub max_addr_per_msg: usize,
}

fn default_user_agent() -> String {
    "/p2pscope:0.1.0/".to_string()
}

fn default_max_addr() -> usize {
    1000
}

impl ChainParams {
    pub fn validate(&self) -> Result<(), String> {
        if self.magic == [0; 4] {
            return Err(format!("chain {}: magic must be nonzero", self.name));
        }
        if self.max_addr_per_msg == 0 {
            return Err(format!("chain {}: max_addr_per_msg must be >= 1", self.name));
        }
        Ok(())
    }
}

mod hex_magic {
    use serde::{de::Error, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(magic: &[u8; 4], s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&hex::encode(magic))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<[u8; 4], D::Error> {
        let s = String::deserialize(d)?;
        let bytes = hex::decode(s.trim_start_matches("0x")).map_err(D::Error::custom)?;
        bytes
            .try_into()
            .map_err(|_| D::Error::custom("magic must be exactly 4 bytes"))
    }
}

/// A 12-byte, zero-padded ASCII command name.
#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct Command([u8; 12]);

impl Command {
    pub fn new(name: &str) -> Result<Self, CodecError> {
        let bytes = name.as_bytes();
        if bytes.is_empty() || bytes.len() > 12 || !bytes.iter().all(|b| b.is_ascii_graphic()) {
            return Err(CodecError::BadCommand);
        }
        let mut raw = [0u8; 12];
        raw[..bytes.len()].copy_from_slice(bytes);
        Ok(Command(raw))
    }

    pub fn from_bytes(raw: [u8; 12]) -> Result<Self, CodecError> {
        let len = raw.iter().position(|&b| b == 0).unwrap_or(12);
        if len == 0
            || !raw[..len].iter().all(|b| b.is_ascii_graphic())
            || raw[len..].iter().any(|&b| b != 0)
        {
            return Err(CodecError::BadCommand);
        }
        Ok(Command(raw))
    }

    pub fn as_bytes(&self) -> &[u8; 12] {
        &self.0
    }

    pub fn as_str(&self) -> &str {
        let len = self.0.iter().position(|&b| b == 0).unwrap_or(12);
        // validated ASCII on construction
        std::str::from_utf8(&self.0[..len]).unwrap_or("")
    }
}

impl fmt::Debug for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Command({})", self.as_str())
    }
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WireMessage {
    pub command: Command,
    pub payload: Vec<u8>,
}

impl WireMessage {
    pub fn new(command: &str, payload: Vec<u8>) -> Result<Self, CodecError> {
        Ok(WireMessage {
            command: Command::new(command)?,
            payload,
        })
    }

    pub fn empty(command: &str) -> Self {
        WireMessage::new(command, Vec::new()).expect("static command name")
    }

    pub fn is(&self, command: &str) -> bool {
        self.command.as_str() == command
    }
}

pub fn checksum(payload: &[u8]) -> [u8; 4] {
    let digest = Sha256::digest(Sha256::digest(payload));
    [digest[0], digest[1], digest[2], digest[3]]
}

pub fn encode_message(params: &ChainParams, msg: &WireMessage) -> Result<Vec<u8>, CodecError> {
    if msg.payload.len() > MAX_PAYLOAD {
        return Err(CodecError::Oversize(msg.payload.len()));
    }
    let mut out = Vec::with_capacity(HEADER_LEN + msg.payload.len());
    out.extend_from_slice(&params.magic);
    out.extend_from_slice(msg.command.as_bytes());
    out.extend_from_slice(&(msg.payload.len() as u32).to_le_bytes());
    out.extend_from_slice(&checksum(&msg.payload));
    out.extend_from_slice(&msg.payload);
    Ok(out)
}

/// Parsed fixed-size frame header.
#[derive(Debug, Clone, Copy)]
pub struct FrameHeader {
    pub command: Command,
    pub length: usize,
    pub checksum: [u8; 4],
}

pub fn decode_header(params: &ChainParams, bytes: &[u8]) -> Result<FrameHeader, CodecError> {
    if bytes.len() < HEADER_LEN {
        return Err(CodecError::Truncated);
    }
    if bytes[..4] != params.magic {
        return Err(CodecError::BadMagic {
            expected: hex::encode(params.magic),
            found: hex::encode(&bytes[..4]),
        });
    }
    let mut cmd = [0u8; 12];
    cmd.copy_from_slice(&bytes[4..16]);
    let command = Command::from_bytes(cmd)?;
    let length = u32::from_le_bytes(bytes[16..20].try_into().unwrap()) as usize;
    if length > MAX_PAYLOAD {
        return Err(CodecError::Oversize(length));
    }
    let checksum = bytes[20..24].try_into().unwrap();
    Ok(FrameHeader {
        command,
        length,
        checksum,
    })
}

/// Decodes exactly one frame from the front of `bytes`, returning the message
/// and the number of bytes consumed.
pub fn decode_message(
    params: &ChainParams,
    bytes: &[u8],
) -> Result<(WireMessage, usize), CodecError> {
    let header = decode_header(params, bytes)?;
    let end = HEADER_LEN + header.length;
    if bytes.len() < end {
        return Err(CodecError::Truncated);
    }
    let payload = &bytes[HEADER_LEN..end];
    if checksum(payload) != header.checksum {
        return Err(CodecError::BadChecksum);
    }
    Ok((
        WireMessage {
            command: header.command,
            payload: payload.to_vec(),
        },
        end,
    ))
}

/// Decodes a concatenation of frames.
pub fn decode_stream(params: &ChainParams, mut bytes: &[u8]) -> Result<Vec<WireMessage>, CodecError> {
    let mut out = Vec::new();
    while !bytes.is_empty() {
        let (msg, used) = decode_message(params, bytes)?;
        out.push(msg);
        bytes = &bytes[used..];
    }
    Ok(out)
}

pub fn encode_varint(n: u64, out: &mut Vec<u8>) {
    match n {
        0..=0xFC => out.push(n as u8),
        0xFD..=0xFFFF => {
            out.push(0xFD);
            out.extend_from_slice(&(n as u16).to_le_bytes());
        }
        0x1_0000..=0xFFFF_FFFF => {
            out.push(0xFE);
            out.extend_from_slice(&(n as u32).to_le_bytes());
        }
        _ => {
            out.push(0xFF);
            out.extend_from_slice(&n.to_le_bytes());
        }
    }
}

/// Decodes a compact size integer, returning the value and bytes consumed.
pub fn decode_varint(bytes: &[u8]) -> Result<(u64, usize), CodecError> {
    let first = *bytes.first().ok_or(CodecError::Truncated)?;
    let (width, min) = match first {
        0xFD => (2, 0xFD),
        0xFE => (4, 0x1_0000),
        0xFF => (8, 0x1_0000_0000),
        b => return Ok((b as u64, 1)),
    };
    let raw = bytes.get(1..1 + width).ok_or(CodecError::Truncated)?;
    let mut buf = [0u8; 8];
    buf[..width].copy_from_slice(raw);
    let value = u64::from_le_bytes(buf);
    if value < min {
        return Err(CodecError::NonMinimal);
    }
    Ok((value, 1 + width))
}

/// One entry of an `addr` message.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct NetAddrEntry {
    /// Parsed but not used for link inference.
    pub timestamp: u32,
    pub services: u64,
    pub addr: Ipv4Addr,
    pub port: u16,
}

fn put_net_addr(out: &mut Vec<u8>, services: u64, addr: Ipv4Addr, port: u16) {
    out.extend_from_slice(&services.to_le_bytes());
    out.extend_from_slice(&addr.to_ipv6_mapped().octets());
    out.extend_from_slice(&port.to_be_bytes());
}

fn get_net_addr(bytes: &[u8]) -> Result<(u64, Ipv4Addr, u16), CodecError> {
    if bytes.len() < 26 {
        return Err(CodecError::Truncated);
    }
    let services = u64::from_le_bytes(bytes[..8].try_into().unwrap());
    let ip: [u8; 16] = bytes[8..24].try_into().unwrap();
    if ip[..10] != [0u8; 10] || ip[10..12] != [0xFF, 0xFF] {
        return Err(CodecError::NotIpv4);
    }
    let addr = Ipv4Addr::new(ip[12], ip[13], ip[14], ip[15]);
    let port = u16::from_be_bytes([bytes[24], bytes[25]]);
    Ok((services, addr, port))
}

pub fn encode_addr_payload(entries: &[NetAddrEntry]) -> Vec<u8> {
    let mut out = Vec::with_capacity(9 + entries.len() * ADDR_ENTRY_LEN);
    encode_varint(entries.len() as u64, &mut out);
    for e in entries {
        out.extend_from_slice(&e.timestamp.to_le_bytes());
        put_net_addr(&mut out, e.services, e.addr, e.port);
    }
    out
}

/// Parses an `addr` payload. Entries that are not IPv4-mapped are skipped,
/// since the crawler only probes IPv4 peers.
pub fn decode_addr_payload(
    params: &ChainParams,
    payload: &[u8],
) -> Result<Vec<NetAddrEntry>, CodecError> {
    let (count, mut pos) = decode_varint(payload)?;
    if count > params.max_addr_per_msg as u64 {
        return Err(CodecError::TooManyAddrs {
            count,
            limit: params.max_addr_per_msg,
        });
    }
    let mut out = Vec::with_capacity(count as usize);
    for _ in 0..count {
        let raw = payload
            .get(pos..pos + ADDR_ENTRY_LEN)
            .ok_or(CodecError::Truncated)?;
        let timestamp = u32::from_le_bytes(raw[..4].try_into().unwrap());
        match get_net_addr(&raw[4..]) {
            Ok((services, addr, port)) => out.push(NetAddrEntry {
                timestamp,
                services,
                addr,
                port,
            }),
            Err(CodecError::NotIpv4) => {}
            Err(e) => return Err(e),
        }
        pos += ADDR_ENTRY_LEN;
    }
    Ok(out)
}

/// Payload of the `version` message.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VersionMessage {
    pub version: i32,
    pub services: u64,
    pub timestamp: i64,
    pub receiver: (u64, Ipv4Addr, u16),
    pub sender: (u64, Ipv4Addr, u16),
    pub nonce: u64,
    pub user_agent: String,
    pub start_height: i32,
    pub relay: bool,
}

impl VersionMessage {
    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(110);
        out.extend_from_slice(&self.version.to_le_bytes());
        out.extend_from_slice(&self.services.to_le_bytes());
        out.extend_from_slice(&self.timestamp.to_le_bytes());
        put_net_addr(&mut out, self.receiver.0, self.receiver.1, self.receiver.2);
        put_net_addr(&mut out, self.sender.0, self.sender.1, self.sender.2);
        out.extend_from_slice(&self.nonce.to_le_bytes());
        encode_varint(self.user_agent.len() as u64, &mut out);
        out.extend_from_slice(self.user_agent.as_bytes());
        out.extend_from_slice(&self.start_height.to_le_bytes());
        out.push(self.relay as u8);
        out
    }

    pub fn decode(payload: &[u8]) -> Result<Self, CodecError> {
        if payload.len() < 80 {
            return Err(CodecError::Truncated);
        }
        let version = i32::from_le_bytes(payload[0..4].try_into().unwrap());
        let services = u64::from_le_bytes(payload[4..12].try_into().unwrap());
        let timestamp = i64::from_le_bytes(payload[12..20].try_into().unwrap());
        // Peers sometimes report IPv6 endpoints here; keep them as unspecified.
        let receiver = get_net_addr(&payload[20..46]).unwrap_or((0, Ipv4Addr::UNSPECIFIED, 0));
        let sender = get_net_addr(&payload[46..72]).unwrap_or((0, Ipv4Addr::UNSPECIFIED, 0));
        let nonce = u64::from_le_bytes(payload[72..80].try_into().unwrap());
        let rest = &payload[80..];
        let (ua_len, used) = decode_varint(rest)?;
        let ua_len = usize::try_from(ua_len).map_err(|_| CodecError::Malformed("user agent"))?;
        let ua = rest
            .get(used..used + ua_len)
            .ok_or(CodecError::Truncated)?;
        let user_agent = String::from_utf8_lossy(ua).into_owned();
        let rest = &rest[used + ua_len..];
        let start_height = match rest.get(..4) {
            Some(b) => i32::from_le_bytes(b.try_into().unwrap()),
            None => 0,
        };
        let relay = rest.get(4).map(|&b| b != 0).unwrap_or(true);
        Ok(VersionMessage {
            version,
            services,
            timestamp,
            receiver,
            sender,
            nonce,
            user_agent,
            start_height,
            relay,
        })
    }
}
