use std::io::{self, Write};
use std::net::{Ipv4Addr, SocketAddrV4, TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::Arc;
use std::thread::{self, JoinHandle};
use std::time::Duration;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use super::{GroundTruth, HarnessError};
use crate::proto::bitcoin::{
    checksum, decode_header, encode_addr_payload, encode_message, ChainParams, NetAddrEntry, VersionMessage,
    WireMessage, HEADER_LEN,
};
use crate::transport::{duplex, Conn, Dialer};

/// Idle connections are dropped after this long.
const IDLE: Duration = Duration::from_secs(30);

/// Protocol behaviour of every simulated node.
pub struct FakePeers {
    truth: GroundTruth,
    params: ChainParams,
    conns: Vec<AtomicU64>,
}

impl FakePeers {
    pub fn new(truth: GroundTruth, params: ChainParams) -> Self {
        let conns = (0..truth.node_count()).map(|_| AtomicU64::new(0)).collect();
        FakePeers { truth, params, conns }
    }

    pub fn truth(&self) -> &GroundTruth {
        &self.truth
    }

    /// Replies are resampled per request from an RNG keyed by the topology
    /// seed, the node and the node's connection counter.
    fn rng_for(&self, node: u32) -> ChaCha8Rng {
        let conn = self.conns[node as usize].fetch_add(1, Ordering::SeqCst);
        let mut h = Sha256::new();
        h.update(self.truth.seed.to_le_bytes());
        h.update(node.to_le_bytes());
        h.update(conn.to_le_bytes());
        ChaCha8Rng::from_seed(h.finalize().into())
    }

    pub fn sample_reply(&self, node: u32, rng: &mut ChaCha8Rng) -> Vec<NetAddrEntry> {
        let outs = &self.truth.out[node as usize];
        let k = self.truth.reply_size(node);
        sample(rng, outs.len(), k)
            .into_iter()
            .map(|i| {
                let a = self.truth.addr(outs[i]);
                NetAddrEntry {
                    timestamp: 1_600_000_000,
                    services: 1,
                    addr: a.ip(),
                    port: a.port(),
                }
            })
            .collect()
    }

    fn send<C: Write>(&self, conn: &mut C, msg: &WireMessage) -> io::Result<()> {
        let frame = encode_message(&self.params, msg).map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e))?;
        conn.write_all(&frame)?;
        conn.flush()
    }

    /// Answers `version`, `verack` and `getaddr` until the remote hangs up.
    pub fn serve<C: Conn>(&self, node: u32, mut conn: C) -> io::Result<()> {
        let mut rng = self.rng_for(node);
        conn.set_read_timeout(Some(IDLE))?;
        let me = self.truth.addr(node);
        loop {
            let mut header = [0u8; HEADER_LEN];
            match conn.read_exact(&mut header) {
                Ok(()) => {}
                Err(e) if e.kind() == io::ErrorKind::UnexpectedEof => return Ok(()),
                Err(e) => return Err(e),
            }
            let h = decode_header(&self.params, &header).map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e))?;
            let mut payload = vec![0u8; h.length];
            conn.read_exact(&mut payload)?;
            if checksum(&payload) != h.checksum {
                return Err(io::ErrorKind::InvalidData.into());
            }
            match h.command.as_str() {
                "version" => {
                    let v = VersionMessage {
                        version: self.params.protocol_version,
                        services: 1,
                        timestamp: 1_600_000_000,
                        receiver: (0, Ipv4Addr::UNSPECIFIED, 0),
                        sender: (1, me.ip(), me.port()),
                        nonce: rng.random(),
                        user_agent: "/simpeer:0.1/".into(),
                        start_height: 0,
                        relay: false,
                    };
                    self.send(&mut conn, &WireMessage::new("version", v.encode()).unwrap())?;
                    self.send(&mut conn, &WireMessage::empty("verack"))?;
                }
                "getaddr" => {
                    let entries = self.sample_reply(node, &mut rng);
                    self.send(&mut conn, &WireMessage::new("addr", encode_addr_payload(&entries)).unwrap())?;
                }
                _ => {}
            }
        }
    }
}

/// In-process dialer: every dial spawns a fake peer on one end of a duplex
/// pipe.
pub struct SimDialer {
    peers: Arc<FakePeers>,
}

impl SimDialer {
    pub fn new(peers: FakePeers) -> Self {
        SimDialer { peers: Arc::new(peers) }
    }
}

impl Dialer for SimDialer {
    fn dial(&self, addr: SocketAddrV4, _timeout: Duration) -> io::Result<Box<dyn Conn>> {
        let truth = self.peers.truth();
        let node = truth
            .node_of(*addr.ip())
            .filter(|&v| addr.port() == truth.port && !truth.unreachable[v as usize])
            .ok_or(io::ErrorKind::ConnectionRefused)?;
        let (client, server) = duplex();
        let peers = self.peers.clone();
        thread::spawn(move || {
            if let Err(e) = peers.serve(node, server) {
                log::debug!("fake peer {node}: {e}");
            }
        });
        Ok(Box::new(client))
    }
}

/// Fake peers listening on `127.x.y.z` addresses that share one port.
pub struct LoopbackNet {
    stop: Arc<AtomicBool>,
    addrs: Vec<SocketAddrV4>,
    threads: Vec<JoinHandle<()>>,
}

impl LoopbackNet {
    /// Binds one listener per reachable node. The port is chosen by the OS
    /// for the first node and reused for the rest; `truth.port` is updated.
    pub fn spawn(truth: &mut GroundTruth, params: ChainParams) -> Result<Self, HarnessError> {
        truth.net = 127;
        let up: Vec<u32> = (0..truth.node_count() as u32)
            .filter(|&v| !truth.unreachable[v as usize])
            .collect();
        let mut listeners = Vec::with_capacity(up.len());
        truth.port = 0;
        for &v in &up {
            let l = TcpListener::bind(SocketAddrV4::new(truth.addr(v).ip(), truth.port))
                .map_err(HarnessError::PortExhaustion)?;
            if truth.port == 0 {
                truth.port = l.local_addr().map_err(HarnessError::PortExhaustion)?.port();
            }
            listeners.push((v, l));
        }
        let peers = Arc::new(FakePeers::new(truth.clone(), params));
        let stop = Arc::new(AtomicBool::new(false));
        let mut addrs = Vec::new();
        let mut threads = Vec::new();
        for (v, l) in listeners {
            addrs.push(SocketAddrV4::new(truth.addr(v).ip(), truth.port));
            let (peers, stop) = (peers.clone(), stop.clone());
            threads.push(thread::spawn(move || {
                for stream in l.incoming() {
                    if stop.load(Ordering::SeqCst) {
                        break;
                    }
                    let Ok(s) = stream else { continue };
                    let _ = s.set_nodelay(true);
                    let peers = peers.clone();
                    thread::spawn(move || {
                        let _ = peers.serve(v, s);
                    });
                }
            }));
        }
        Ok(LoopbackNet { stop, addrs, threads })
    }

    pub fn addrs(&self) -> &[SocketAddrV4] {
        &self.addrs
    }
}

impl Drop for LoopbackNet {
    fn drop(&mut self) {
        self.stop.store(true, Ordering::SeqCst);
        // wake every blocked accept
        for a in &self.addrs {
            let _ = TcpStream::connect_timeout(&(*a).into(), Duration::from_millis(200));
        }
        for t in self.threads.drain(..) {
            let _ = t.join();
        }
    }
}
