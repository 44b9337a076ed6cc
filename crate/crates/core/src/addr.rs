use std::fmt;
use std::net::{Ipv4Addr, SocketAddrV4};
use std::str::FromStr;

/// An IPv4 transport endpoint. Node identity in graphs is the address
/// alone; the port is kept for reconnecting.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PeerAddr(pub SocketAddrV4);

impl PeerAddr {
    pub fn new(ip: Ipv4Addr, port: u16) -> Self {
        PeerAddr(SocketAddrV4::new(ip, port))
    }

    pub fn ip(&self) -> Ipv4Addr {
        *self.0.ip()
    }

    pub fn port(&self) -> u16 {
        self.0.port()
    }

    /// Canonical node identity: the dotted-quad address.
    pub fn node_id(&self) -> String {
        self.ip().to_string()
    }

    /// Addresses the crawler will never dial.
    pub fn is_dialable(&self) -> bool {
        !self.ip().is_unspecified() && !self.ip().is_broadcast() && self.port() != 0
    }
}

impl fmt::Display for PeerAddr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl fmt::Debug for PeerAddr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl FromStr for PeerAddr {
    type Err = std::net::AddrParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        SocketAddrV4::from_str(s).map(PeerAddr)
    }
}

impl From<SocketAddrV4> for PeerAddr {
    fn from(a: SocketAddrV4) -> Self {
        PeerAddr(a)
    }
}

/// Strips a `:port` suffix from a raw `ip:port` node id; other ids
/// (pseudonyms, node ids) pass through unchanged.
pub fn collapse_port(id: &str) -> &str {
    match id.rsplit_once(':') {
        Some((ip, port)) if ip.parse::<Ipv4Addr>().is_ok() && port.parse::<u16>().is_ok() => ip,
        _ => id,
    }
}
