//! Connection state machine for Bitcoin-family peers: version handshake,
//! then `getaddr` probing.

use std::io;
use std::net::{Ipv4Addr, SocketAddrV4};
use std::time::{Duration, Instant};

use thiserror::Error;

use super::bitcoin::{
    decode_addr_payload, decode_header, encode_message, checksum, ChainParams, CodecError,
    NetAddrEntry, VersionMessage, WireMessage, HEADER_LEN,
};
use crate::transport::{is_timeout, Conn};

pub const DEFAULT_HANDSHAKE_TIMEOUT: Duration = Duration::from_secs(10);

#[derive(Debug, Error)]
pub enum SessionError {
    #[error("timed out")]
    Timeout,
    #[error("protocol violation: {0}")]
    ProtocolViolation(String),
    #[error("connection closed by peer")]
    Closed,
    #[error(transparent)]
    Codec(#[from] CodecError),
    #[error(transparent)]
    Io(io::Error),
}

impl From<io::Error> for SessionError {
    fn from(err: io::Error) -> Self {
        if is_timeout(&err) {
            SessionError::Timeout
        } else if err.kind() == io::ErrorKind::UnexpectedEof {
            SessionError::Closed
        } else {
            SessionError::Io(err)
        }
    }
}

/// What we learned about the remote during the handshake.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RemoteInfo {
    pub version: i32,
    pub services: u64,
    pub user_agent: String,
    pub start_height: i32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum State {
    Fresh,
    Negotiated,
}

pub struct Session<C> {
    conn: C,
    params: ChainParams,
    remote_addr: SocketAddrV4,
    timeout: Duration,
    state: State,
    remote: Option<RemoteInfo>,
    nonce: u64,
}

impl<C: Conn> Session<C> {
    pub fn new(conn: C, params: ChainParams, remote_addr: SocketAddrV4, timeout: Duration) -> Self {
        Session {
            conn,
            params,
            remote_addr,
            timeout,
            state: State::Fresh,
            remote: None,
            nonce: rand::random(),
        }
    }

    pub fn remote(&self) -> Option<&RemoteInfo> {
        self.remote.as_ref()
    }

    pub fn is_negotiated(&self) -> bool {
        self.state == State::Negotiated
    }

    pub fn send(&mut self, msg: &WireMessage) -> Result<(), SessionError> {
        let frame = encode_message(&self.params, msg)?;
        self.conn.write_all(&frame)?;
        self.conn.flush()?;
        Ok(())
    }

    /// Reads one frame, waiting at most until `deadline`.
    pub fn recv(&mut self, deadline: Instant) -> Result<WireMessage, SessionError> {
        let mut header = [0u8; HEADER_LEN];
        self.read_exact_until(&mut header, deadline)?;
        let h = decode_header(&self.params, &header)?;
        let mut payload = vec![0u8; h.length];
        self.read_exact_until(&mut payload, deadline)?;
        if checksum(&payload) != h.checksum {
            return Err(CodecError::BadChecksum.into());
        }
        Ok(WireMessage {
            command: h.command,
            payload,
        })
    }

    fn read_exact_until(&mut self, mut buf: &mut [u8], deadline: Instant) -> Result<(), SessionError> {
        while !buf.is_empty() {
            let now = Instant::now();
            if now >= deadline {
                return Err(SessionError::Timeout);
            }
            self.conn.set_read_timeout(Some(deadline - now))?;
            match self.conn.read(buf) {
                Ok(0) => return Err(SessionError::Closed),
                Ok(n) => buf = &mut buf[n..],
                Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
                Err(e) => return Err(e.into()),
            }
        }
        Ok(())
    }

    fn our_version(&self) -> VersionMessage {
        let now = std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_secs() as i64)
            .unwrap_or(0);
        VersionMessage {
            version: self.params.protocol_version,
            services: self.params.services,
            timestamp: now,
            receiver: (0, *self.remote_addr.ip(), self.remote_addr.port()),
            sender: (self.params.services, Ipv4Addr::UNSPECIFIED, 0),
            nonce: self.nonce,
            user_agent: self.params.user_agent.clone(),
            start_height: 0,
            relay: false,
        }
    }

    /// Sends `version`, waits for the remote `version` (answering it with
    /// `verack`) and for the remote `verack`.
    pub fn handshake(&mut self) -> Result<&RemoteInfo, SessionError> {
        if self.state != State::Fresh {
            return Err(SessionError::ProtocolViolation("handshake already done".into()));
        }
        let deadline = Instant::now() + self.timeout;
        let version = WireMessage::new("version", self.our_version().encode())?;
        self.send(&version)?;
        let mut got_verack = false;
        while self.remote.is_none() || !got_verack {
            let msg = self.recv(deadline)?;
            match msg.command.as_str() {
                "version" => {
                    if self.remote.is_some() {
                        return Err(SessionError::ProtocolViolation("duplicate version".into()));
                    }
                    let v = VersionMessage::decode(&msg.payload)?;
                    if v.nonce == self.nonce {
                        return Err(SessionError::ProtocolViolation("connected to self".into()));
                    }
                    self.remote = Some(RemoteInfo {
                        version: v.version,
                        services: v.services,
                        user_agent: v.user_agent,
                        start_height: v.start_height,
                    });
                    self.send(&WireMessage::empty("verack"))?;
                }
                "verack" => {
                    if self.remote.is_none() {
                        return Err(SessionError::ProtocolViolation(
                            "verack before version".into(),
                        ));
                    }
                    got_verack = true;
                }
                // feature negotiation (sendaddrv2, wtxidrelay, ...) is ignored
                _ => {}
            }
        }
        self.state = State::Negotiated;
        Ok(self.remote.as_ref().unwrap())
    }

    /// Sends one `getaddr` and collects the reply.
    ///
    /// A one-entry `addr` carrying the remote's own address is a
    /// self-announcement, not a reply, so collection keeps waiting after it.
    /// Returns what was gathered when the wait expires; a wait that gathers
    /// nothing at all is a timeout.
    pub fn get_addrs(&mut self, wait: Duration) -> Result<Vec<NetAddrEntry>, SessionError> {
        if self.state != State::Negotiated {
            return Err(SessionError::ProtocolViolation("getaddr before handshake".into()));
        }
        self.send(&WireMessage::empty("getaddr"))?;
        let deadline = Instant::now() + wait;
        let mut collected = Vec::new();
        let mut saw_addr = false;
        loop {
            let msg = match self.recv(deadline) {
                Ok(m) => m,
                Err(SessionError::Timeout) if saw_addr => return Ok(collected),
                Err(e) => return Err(e),
            };
            if !msg.is("addr") {
                continue;
            }
            saw_addr = true;
            let entries = decode_addr_payload(&self.params, &msg.payload)?;
            let self_announce =
                entries.len() == 1 && entries[0].addr == *self.remote_addr.ip();
            collected.extend(entries);
            if !self_announce {
                return Ok(collected);
            }
        }
    }

    pub fn into_inner(self) -> C {
        self.conn
    }
}
