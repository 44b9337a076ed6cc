//! Ethereum node discovery (discv4) packets and the client side of the
//! `FindNode`/`Neighbors` exchange used for crawling.
//!
//! Envelope layout: `hash(32) ‖ signature(65) ‖ type(1) ‖ rlp(data)` with
//! `hash = keccak256(signature ‖ type ‖ data)` and the signature a
//! recoverable secp256k1 signature over `keccak256(type ‖ data)`.

use std::collections::{HashMap, VecDeque};
use std::fmt;
use std::io;
use std::net::{Ipv4Addr, SocketAddrV4, UdpSocket};
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use k256::ecdsa::{RecoveryId, Signature, SigningKey, VerifyingKey};
use sha3::{Digest, Keccak256};
use thiserror::Error;

use super::rlp::{self, Item, RlpError};
use crate::transport::{is_timeout, Clock};

pub const MAX_PACKET_SIZE: usize = 1280;
/// Nodes per `Neighbors` reply, and per packet.
pub const MAX_NEIGHBORS: usize = 16;
/// Nodes we put into a single outgoing `Neighbors` packet so it fits in
/// [`MAX_PACKET_SIZE`].
pub const NEIGHBORS_PER_PACKET: usize = 12;
pub const BUCKET_COUNT: usize = 256;
/// Minimum spacing between `FindNode` requests to one peer.
pub const FINDNODE_SPACING: Duration = Duration::from_secs(4);
const HEADER_LEN: usize = 32 + 65 + 1;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum DiscError {
    #[error("packet hash mismatch")]
    BadHash,
    #[error("invalid signature")]
    BadSignature,
    #[error("unknown packet type {0:#04x}")]
    UnknownType(u8),
    #[error("packet expired")]
    Expired,
    #[error("packet too short")]
    TooShort,
    #[error("malformed packet: {0}")]
    Malformed(String),
    #[error("timed out")]
    Timeout,
    #[error("socket error: {0}")]
    Io(String),
}

impl From<RlpError> for DiscError {
    fn from(e: RlpError) -> Self {
        DiscError::Malformed(e.to_string())
    }
}

/// 512-bit node identifier: the uncompressed secp256k1 public key without
/// its 0x04 prefix.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(pub [u8; 64]);

impl NodeId {
    pub fn from_key(key: &VerifyingKey) -> NodeId {
        let point = key.to_encoded_point(false);
        let mut id = [0u8; 64];
        id.copy_from_slice(&point.as_bytes()[1..]);
        NodeId(id)
    }

    pub fn from_slice(b: &[u8]) -> Option<NodeId> {
        b.try_into().ok().map(NodeId)
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }
}

impl fmt::Debug for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "NodeId({}..)", hex::encode(&self.0[..6]))
    }
}

/// XOR of two ids, ordered as a big-endian 512-bit integer.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Debug)]
pub struct Distance(pub [u8; 64]);

impl Distance {
    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|&b| b == 0)
    }

    /// Index of the highest set bit (0..512), or `None` for zero.
    pub fn highest_bit(&self) -> Option<usize> {
        let (i, b) = self.0.iter().enumerate().find(|(_, &b)| b != 0)?;
        Some((63 - i) * 8 + (7 - b.leading_zeros() as usize))
    }
}

pub fn xor_distance(a: &NodeId, b: &NodeId) -> Distance {
    let mut d = [0u8; 64];
    for (out, (x, y)) in d.iter_mut().zip(a.0.iter().zip(b.0.iter())) {
        *out = x ^ y;
    }
    Distance(d)
}

/// Routing-table bucket of `other` as seen from `own`: the log-distance
/// folded onto 256 buckets, two bit positions per bucket. `None` for self.
pub fn bucket_of(own: &NodeId, other: &NodeId) -> Option<usize> {
    xor_distance(own, other).highest_bit().map(|bit| bit / 2)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Endpoint {
    pub ip: Ipv4Addr,
    pub udp: u16,
    pub tcp: u16,
}

impl Endpoint {
    pub fn udp_addr(&self) -> SocketAddrV4 {
        SocketAddrV4::new(self.ip, self.udp)
    }

    fn to_rlp(self) -> Item {
        Item::List(vec![
            Item::bytes(self.ip.octets().to_vec()),
            Item::uint(self.udp as u64),
            Item::uint(self.tcp as u64),
        ])
    }

    /// `Ok(None)` for well-formed endpoints that are not IPv4.
    fn from_rlp(item: &Item) -> Result<Option<Endpoint>, DiscError> {
        let l = item.as_list()?;
        if l.len() < 3 {
            return Err(DiscError::Malformed("endpoint".into()));
        }
        let ip = match l[0].as_bytes()? {
            [a, b, c, d] => Ipv4Addr::new(*a, *b, *c, *d),
            b if b.len() == 16 => {
                let v6 = std::net::Ipv6Addr::from(<[u8; 16]>::try_from(b).unwrap());
                match v6.to_ipv4_mapped() {
                    Some(v4) => v4,
                    None => return Ok(None),
                }
            }
            [] => Ipv4Addr::UNSPECIFIED,
            _ => return Err(DiscError::Malformed("endpoint ip".into())),
        };
        let port = |i: &Item| -> Result<u16, DiscError> {
            u16::try_from(i.as_uint()?).map_err(|_| DiscError::Malformed("port".into()))
        };
        Ok(Some(Endpoint {
            ip,
            udp: port(&l[1])?,
            tcp: port(&l[2])?,
        }))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct NodeRecord {
    pub id: NodeId,
    pub endpoint: Endpoint,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PacketKind {
    Ping = 1,
    Pong = 2,
    FindNode = 3,
    Neighbors = 4,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum DiscPacket {
    Ping {
        from: Endpoint,
        to: Endpoint,
        expiration: u64,
    },
    Pong {
        to: Endpoint,
        ping_hash: [u8; 32],
        expiration: u64,
    },
    FindNode {
        target: NodeId,
        expiration: u64,
    },
    Neighbors {
        nodes: Vec<NodeRecord>,
        expiration: u64,
    },
}

impl DiscPacket {
    pub fn kind(&self) -> PacketKind {
        match self {
            DiscPacket::Ping { .. } => PacketKind::Ping,
            DiscPacket::Pong { .. } => PacketKind::Pong,
            DiscPacket::FindNode { .. } => PacketKind::FindNode,
            DiscPacket::Neighbors { .. } => PacketKind::Neighbors,
        }
    }

    pub fn expiration(&self) -> u64 {
        match self {
            DiscPacket::Ping { expiration, .. }
            | DiscPacket::Pong { expiration, .. }
            | DiscPacket::FindNode { expiration, .. }
            | DiscPacket::Neighbors { expiration, .. } => *expiration,
        }
    }

    fn to_rlp(&self) -> Item {
        match self {
            DiscPacket::Ping {
                from,
                to,
                expiration,
            } => Item::List(vec![
                Item::uint(4),
                from.to_rlp(),
                to.to_rlp(),
                Item::uint(*expiration),
            ]),
            DiscPacket::Pong {
                to,
                ping_hash,
                expiration,
            } => Item::List(vec![
                to.to_rlp(),
                Item::bytes(ping_hash.to_vec()),
                Item::uint(*expiration),
            ]),
            DiscPacket::FindNode { target, expiration } => Item::List(vec![
                Item::bytes(target.0.to_vec()),
                Item::uint(*expiration),
            ]),
            DiscPacket::Neighbors { nodes, expiration } => Item::List(vec![
                Item::List(
                    nodes
                        .iter()
                        .map(|n| {
                            let Item::List(mut ep) = n.endpoint.to_rlp() else {
                                unreachable!()
                            };
                            ep.push(Item::bytes(n.id.0.to_vec()));
                            Item::List(ep)
                        })
                        .collect(),
                ),
                Item::uint(*expiration),
            ]),
        }
    }

    fn from_rlp(kind: u8, item: &Item) -> Result<DiscPacket, DiscError> {
        let l = item.as_list()?;
        let need = |n: usize| {
            if l.len() < n {
                Err(DiscError::Malformed(format!("expected {n} fields")))
            } else {
                Ok(())
            }
        };
        let endpoint = |i: &Item| {
            Endpoint::from_rlp(i)?.ok_or_else(|| DiscError::Malformed("non-IPv4 endpoint".into()))
        };
        // extra trailing fields are allowed for forward compatibility
        match kind {
            1 => {
                need(4)?;
                Ok(DiscPacket::Ping {
                    from: endpoint(&l[1])?,
                    to: endpoint(&l[2])?,
                    expiration: l[3].as_uint()?,
                })
            }
            2 => {
                need(3)?;
                let ping_hash = l[1]
                    .as_bytes()?
                    .try_into()
                    .map_err(|_| DiscError::Malformed("ping hash".into()))?;
                Ok(DiscPacket::Pong {
                    to: endpoint(&l[0])?,
                    ping_hash,
                    expiration: l[2].as_uint()?,
                })
            }
            3 => {
                need(2)?;
                let target = NodeId::from_slice(l[0].as_bytes()?)
                    .ok_or_else(|| DiscError::Malformed("target".into()))?;
                Ok(DiscPacket::FindNode {
                    target,
                    expiration: l[1].as_uint()?,
                })
            }
            4 => {
                need(2)?;
                let raw = l[0].as_list()?;
                if raw.len() > MAX_NEIGHBORS {
                    return Err(DiscError::Malformed(format!(
                        "{} neighbors in one packet",
                        raw.len()
                    )));
                }
                let mut nodes = Vec::with_capacity(raw.len());
                for n in raw {
                    let f = n.as_list()?;
                    if f.len() < 4 {
                        return Err(DiscError::Malformed("neighbor record".into()));
                    }
                    let ep = Endpoint::from_rlp(&Item::List(f[..3].to_vec()))?;
                    let id = NodeId::from_slice(f[3].as_bytes()?)
                        .ok_or_else(|| DiscError::Malformed("node id".into()))?;
                    if let Some(endpoint) = ep {
                        nodes.push(NodeRecord { id, endpoint });
                    }
                }
                Ok(DiscPacket::Neighbors {
                    nodes,
                    expiration: l[1].as_uint()?,
                })
            }
            t => Err(DiscError::UnknownType(t)),
        }
    }
}

fn keccak(parts: &[&[u8]]) -> [u8; 32] {
    let mut h = Keccak256::new();
    for p in parts {
        h.update(p);
    }
    h.finalize().into()
}

/// Serializes and signs a packet.
pub fn seal_packet(key: &SigningKey, pkt: &DiscPacket) -> Vec<u8> {
    let kind = pkt.kind() as u8;
    let data = rlp::encode(&pkt.to_rlp());
    let digest = keccak(&[&[kind], &data]);
    let (sig, recid) = key
        .sign_prehash_recoverable(&digest)
        .expect("32-byte prehash is always signable");
    let mut sig_bytes = [0u8; 65];
    sig_bytes[..64].copy_from_slice(&sig.to_bytes());
    sig_bytes[64] = recid.to_byte();
    let hash = keccak(&[&sig_bytes, &[kind], &data]);
    let mut out = Vec::with_capacity(HEADER_LEN + data.len());
    out.extend_from_slice(&hash);
    out.extend_from_slice(&sig_bytes);
    out.push(kind);
    out.extend_from_slice(&data);
    out
}

/// Verifies and parses a packet, recovering the sender's id. `now_unix` is
/// the current time in seconds used for the expiry check.
pub fn open_packet(bytes: &[u8], now_unix: u64) -> Result<(NodeId, DiscPacket, [u8; 32]), DiscError> {
    if bytes.len() < HEADER_LEN + 1 {
        return Err(DiscError::TooShort);
    }
    let hash: [u8; 32] = bytes[..32].try_into().unwrap();
    if keccak(&[&bytes[32..]]) != hash {
        return Err(DiscError::BadHash);
    }
    let sig_bytes = &bytes[32..97];
    let kind = bytes[97];
    let data = &bytes[98..];
    if !(1..=4).contains(&kind) {
        return Err(DiscError::UnknownType(kind));
    }
    let sig = Signature::from_slice(&sig_bytes[..64]).map_err(|_| DiscError::BadSignature)?;
    let recid = RecoveryId::from_byte(sig_bytes[64]).ok_or(DiscError::BadSignature)?;
    let digest = keccak(&[&[kind], data]);
    let vk = VerifyingKey::recover_from_prehash(&digest, &sig, recid)
        .map_err(|_| DiscError::BadSignature)?;
    let pkt = DiscPacket::from_rlp(kind, &rlp::decode(data)?)?;
    if pkt.expiration() < now_unix {
        return Err(DiscError::Expired);
    }
    Ok((NodeId::from_key(&vk), pkt, hash))
}

pub fn unix_now() -> u64 {
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

/// The `MAX_NEIGHBORS` entries of `known` closest to `target`.
pub fn closest_to(target: &NodeId, known: &[NodeRecord]) -> Vec<NodeRecord> {
    let mut sorted: Vec<_> = known.to_vec();
    sorted.sort_by_key(|n| xor_distance(target, &n.id));
    sorted.truncate(MAX_NEIGHBORS);
    sorted
}

/// Datagram transport, so the client runs over UDP or a simulated network.
pub trait Datagram: Send + Sync {
    fn send_to(&self, buf: &[u8], to: SocketAddrV4) -> io::Result<()>;
    fn recv_from(&self, buf: &mut [u8], timeout: Duration) -> io::Result<(usize, SocketAddrV4)>;
    fn local_endpoint(&self) -> Endpoint;
    /// True when replies are queued before `send_to` returns, so an empty
    /// receive queue means no reply is coming.
    fn is_synchronous(&self) -> bool {
        false
    }
}

impl Datagram for UdpSocket {
    fn send_to(&self, buf: &[u8], to: SocketAddrV4) -> io::Result<()> {
        UdpSocket::send_to(self, buf, to).map(|_| ())
    }

    fn recv_from(&self, buf: &mut [u8], timeout: Duration) -> io::Result<(usize, SocketAddrV4)> {
        self.set_read_timeout(Some(timeout.max(Duration::from_millis(1))))?;
        loop {
            let (n, from) = UdpSocket::recv_from(self, buf)?;
            if let std::net::SocketAddr::V4(v4) = from {
                return Ok((n, v4));
            }
        }
    }

    fn local_endpoint(&self) -> Endpoint {
        let port = self.local_addr().map(|a| a.port()).unwrap_or(0);
        Endpoint {
            ip: Ipv4Addr::UNSPECIFIED,
            udp: port,
            tcp: 0,
        }
    }
}

type Inbox = HashMap<(SocketAddrV4, PacketKind), VecDeque<(NodeId, DiscPacket)>>;

/// Discovery client over one shared socket. Incoming packets are queued by
/// `(sender endpoint, kind)` so many crawl tasks can wait concurrently.
/// Pings are answered automatically, since peers only serve `FindNode`
/// after a mutual endpoint proof.
pub struct DiscClient {
    key: SigningKey,
    sock: Arc<dyn Datagram>,
    clock: Arc<dyn Clock>,
    inbox: Mutex<Inbox>,
    reader: Mutex<()>,
    last_findnode: Mutex<HashMap<SocketAddrV4, Duration>>,
    pub timeout: Duration,
    pub expiry_window: u64,
}

impl DiscClient {
    pub fn new(key: SigningKey, sock: Arc<dyn Datagram>, clock: Arc<dyn Clock>) -> Self {
        DiscClient {
            key,
            sock,
            clock,
            inbox: Mutex::new(HashMap::new()),
            reader: Mutex::new(()),
            last_findnode: Mutex::new(HashMap::new()),
            timeout: Duration::from_millis(500),
            expiry_window: 20,
        }
    }

    pub fn id(&self) -> NodeId {
        NodeId::from_key(self.key.verifying_key())
    }

    fn send(&self, pkt: &DiscPacket, to: SocketAddrV4) -> Result<[u8; 32], DiscError> {
        let bytes = seal_packet(&self.key, pkt);
        self.sock
            .send_to(&bytes, to)
            .map_err(|e| DiscError::Io(e.to_string()))?;
        Ok(bytes[..32].try_into().unwrap())
    }

    fn expiration(&self) -> u64 {
        unix_now() + self.expiry_window
    }

    fn take(&self, from: SocketAddrV4, kind: PacketKind) -> Option<(NodeId, DiscPacket)> {
        self.inbox
            .lock()
            .unwrap()
            .get_mut(&(from, kind))
            .and_then(|q| q.pop_front())
    }

    /// Waits for a packet of `kind` from `from`, dispatching everything else.
    fn recv_matching(
        &self,
        from: SocketAddrV4,
        kind: PacketKind,
        deadline: Instant,
    ) -> Result<(NodeId, DiscPacket), DiscError> {
        let mut buf = vec![0u8; 2048];
        loop {
            if let Some(hit) = self.take(from, kind) {
                return Ok(hit);
            }
            let now = Instant::now();
            if now >= deadline {
                return Err(DiscError::Timeout);
            }
            let _guard = self.reader.lock().unwrap();
            if let Some(hit) = self.take(from, kind) {
                return Ok(hit);
            }
            let wait = (deadline - now).min(Duration::from_millis(50));
            match self.sock.recv_from(&mut buf, wait) {
                Ok((n, sender)) => self.dispatch(&buf[..n], sender),
                Err(e) if is_timeout(&e) => {
                    if self.sock.is_synchronous() {
                        return Err(DiscError::Timeout);
                    }
                }
                Err(e) => return Err(DiscError::Io(e.to_string())),
            }
        }
    }

    fn dispatch(&self, bytes: &[u8], sender: SocketAddrV4) {
        let (id, pkt, hash) = match open_packet(bytes, unix_now()) {
            Ok(x) => x,
            Err(e) => {
                log::debug!("dropping packet from {sender}: {e}");
                return;
            }
        };
        if let DiscPacket::Ping { from, .. } = &pkt {
            let pong = DiscPacket::Pong {
                to: Endpoint {
                    ip: *sender.ip(),
                    udp: sender.port(),
                    tcp: from.tcp,
                },
                ping_hash: hash,
                expiration: self.expiration(),
            };
            if let Err(e) = self.send(&pong, sender) {
                log::debug!("pong to {sender} failed: {e}");
            }
        }
        self.inbox
            .lock()
            .unwrap()
            .entry((sender, pkt.kind()))
            .or_default()
            .push_back((id, pkt));
    }

    /// Ping/pong endpoint proof. Returns the remote's id.
    pub fn ping(&self, peer: SocketAddrV4) -> Result<NodeId, DiscError> {
        let ping = DiscPacket::Ping {
            from: self.sock.local_endpoint(),
            to: Endpoint {
                ip: *peer.ip(),
                udp: peer.port(),
                tcp: peer.port(),
            },
            expiration: self.expiration(),
        };
        let hash = self.send(&ping, peer)?;
        let deadline = Instant::now() + self.timeout;
        loop {
            let (id, pkt) = self.recv_matching(peer, PacketKind::Pong, deadline)?;
            if let DiscPacket::Pong { ping_hash, .. } = pkt {
                if ping_hash == hash {
                    return Ok(id);
                }
            }
        }
    }

    /// Sends `FindNode(target)` and gathers `Neighbors` until 16 nodes arrive
    /// or the wait expires. Successive requests to one peer are spaced at
    /// least [`FINDNODE_SPACING`] apart.
    pub fn crawl_step(&self, peer: SocketAddrV4, target: NodeId) -> Result<Vec<NodeRecord>, DiscError> {
        self.pace(peer);
        let pkt = DiscPacket::FindNode {
            target,
            expiration: self.expiration(),
        };
        self.send(&pkt, peer)?;
        let deadline = Instant::now() + self.timeout;
        let mut nodes = Vec::new();
        while nodes.len() < MAX_NEIGHBORS {
            match self.recv_matching(peer, PacketKind::Neighbors, deadline) {
                Ok((_, DiscPacket::Neighbors { nodes: batch, .. })) => nodes.extend(batch),
                Ok(_) => unreachable!("inbox is keyed by kind"),
                Err(DiscError::Timeout) if !nodes.is_empty() => break,
                Err(e) => return Err(e),
            }
        }
        nodes.truncate(MAX_NEIGHBORS);
        Ok(nodes)
    }

    fn pace(&self, peer: SocketAddrV4) {
        let wait = {
            let last = self.last_findnode.lock().unwrap();
            last.get(&peer).and_then(|&t| {
                let elapsed = self.clock.now().saturating_sub(t);
                FINDNODE_SPACING.checked_sub(elapsed).filter(|d| !d.is_zero())
            })
        };
        if let Some(d) = wait {
            self.clock.sleep(d);
        }
        self.last_findnode
            .lock()
            .unwrap()
            .insert(peer, self.clock.now());
    }
}

pub fn random_target<R: rand::Rng + ?Sized>(rng: &mut R) -> NodeId {
    let mut id = [0u8; 64];
    rng.fill(&mut id[..]);
    NodeId(id)
}
