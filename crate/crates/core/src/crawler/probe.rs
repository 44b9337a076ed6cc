use std::sync::Arc;
use std::time::Duration;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::addr::PeerAddr;
use crate::config::Identity;
use crate::proto::bitcoin::ChainParams;
use crate::proto::discv4::{random_target, DiscClient, DiscError};
use crate::proto::session::{Session, SessionError};
use crate::transport::Dialer;

#[derive(Debug, Error)]
pub enum ProbeError {
    #[error("connect: {0}")]
    Connect(std::io::Error),
    #[error(transparent)]
    Session(#[from] SessionError),
    #[error(transparent)]
    Disc(#[from] DiscError),
}

/// A peer learned from a reply, with an optional snapshot identity that
/// replaces the address (Ethereum node ids).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Discovered {
    pub addr: PeerAddr,
    pub label: Option<String>,
}

impl From<PeerAddr> for Discovered {
    fn from(addr: PeerAddr) -> Self {
        Discovered { addr, label: None }
    }
}

/// One request/response exchange with a peer.
pub trait Prober: Send + Sync {
    fn probe(&self, peer: PeerAddr) -> Result<Vec<Discovered>, ProbeError>;

    /// Snapshot identity of a peer learned while probing it.
    fn label_of(&self, _peer: PeerAddr) -> Option<String> {
        None
    }
}

/// Bitcoin-family prober: connect, handshake, then `getaddr_per_conn`
/// rounds of `getaddr`.
pub struct BitcoinProber {
    pub params: ChainParams,
    pub dialer: Arc<dyn Dialer>,
    pub connect_timeout: Duration,
    pub handshake_timeout: Duration,
    pub addr_wait: Duration,
    pub getaddr_per_conn: usize,
}

impl Prober for BitcoinProber {
    fn probe(&self, peer: PeerAddr) -> Result<Vec<Discovered>, ProbeError> {
        let conn = self
            .dialer
            .dial(peer.0, self.connect_timeout)
            .map_err(ProbeError::Connect)?;
        let mut session = Session::new(conn, self.params.clone(), peer.0, self.handshake_timeout);
        session.handshake()?;
        let mut out = Vec::new();
        for i in 0..self.getaddr_per_conn.max(1) {
            match session.get_addrs(self.addr_wait) {
                Ok(entries) => out.extend(
                    entries
                        .into_iter()
                        .map(|e| Discovered::from(PeerAddr::new(e.addr, e.port))),
                ),
                // later requests are opportunistic; keep what the first gave
                Err(_) if i > 0 => break,
                Err(e) => return Err(e.into()),
            }
        }
        Ok(out)
    }
}

/// discv4 prober: endpoint proof, then `FindNode` towards
/// `targets_per_peer` random targets.
pub struct EthProber {
    pub client: Arc<DiscClient>,
    pub targets_per_peer: usize,
    pub identity: Identity,
    /// Seeds target selection so reruns ask the same questions.
    pub seed: u64,
    ids: std::sync::Mutex<std::collections::BTreeMap<PeerAddr, String>>,
}

impl EthProber {
    pub fn new(client: Arc<DiscClient>, targets_per_peer: usize, identity: Identity, seed: u64) -> Self {
        EthProber {
            client,
            targets_per_peer,
            identity,
            seed,
            ids: Default::default(),
        }
    }

    fn rng_for(&self, peer: PeerAddr) -> ChaCha8Rng {
        let mut h = Sha256::new();
        h.update(self.seed.to_le_bytes());
        h.update(peer.to_string().as_bytes());
        ChaCha8Rng::from_seed(h.finalize().into())
    }
}

impl Prober for EthProber {
    fn probe(&self, peer: PeerAddr) -> Result<Vec<Discovered>, ProbeError> {
        let id = self.client.ping(peer.0)?;
        if self.identity == Identity::NodeId {
            self.ids.lock().unwrap().insert(peer, id.to_hex());
        }
        let mut rng = self.rng_for(peer);
        let mut out = Vec::new();
        for i in 0..self.targets_per_peer.max(1) {
            let target = random_target(&mut rng);
            match self.client.crawl_step(peer.0, target) {
                Ok(nodes) => out.extend(nodes.into_iter().map(|n| Discovered {
                    addr: PeerAddr(n.endpoint.udp_addr()),
                    label: (self.identity == Identity::NodeId).then(|| n.id.to_hex()),
                })),
                Err(_) if i > 0 => continue,
                Err(e) => return Err(e.into()),
            }
        }
        Ok(out)
    }

    fn label_of(&self, peer: PeerAddr) -> Option<String> {
        self.ids.lock().unwrap().get(&peer).cloned()
    }
}
