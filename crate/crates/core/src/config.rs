//! Crawl configuration (TOML).
//!
//! ```toml
//! interval_secs = 7200
//! workers = 500
//! connect_timeout_ms = 5000
//! out_dir = "snapshots"
//! pseudonym_key_file = "/secure/key.bin"
//!
//! [[chains]]
//! name = "bitcoin"
//! seeds = ["203.0.113.5:8333"]
//! getaddr_per_conn = 2
//! ```
//!
//! Chains named like a shipped default (`config/chains.toml`) inherit its
//! magic, port and protocol version; any key may be overridden.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::Deserialize;
use thiserror::Error;

use crate::addr::PeerAddr;
use crate::proto::bitcoin::ChainParams;
use crate::proto::discv4::NodeId;

const SHIPPED_CHAINS: &str = include_str!("../config/chains.toml");

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Read {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("invalid config: {0}")]
    Parse(String),
    #[error("chain {0}: {1}")]
    Chain(String, String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Protocol {
    Bitcoin,
    Discv4,
}

/// How Ethereum peers are named in snapshots.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Identity {
    #[default]
    Ip,
    NodeId,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawChain {
    name: String,
    protocol: Option<Protocol>,
    magic: Option<String>,
    port: Option<u16>,
    protocol_version: Option<i32>,
    user_agent: Option<String>,
    services: Option<u64>,
    #[serde(default)]
    seeds: Vec<String>,
    max_addr: Option<usize>,
    getaddr_per_conn: Option<usize>,
    targets_per_peer: Option<usize>,
    identity: Option<Identity>,
}

impl RawChain {
    fn overlay(mut self, over: RawChain) -> RawChain {
        macro_rules! take {
            ($($f:ident),*) => { $( if over.$f.is_some() { self.$f = over.$f; } )* };
        }
        take!(
            protocol,
            magic,
            port,
            protocol_version,
            user_agent,
            services,
            max_addr,
            getaddr_per_conn,
            targets_per_peer,
            identity
        );
        if !over.seeds.is_empty() {
            self.seeds = over.seeds;
        }
        self
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    #[serde(default)]
    chains: Vec<RawChain>,
    interval_secs: Option<u64>,
    workers: Option<usize>,
    connect_timeout_ms: Option<u64>,
    handshake_timeout_ms: Option<u64>,
    addr_wait_ms: Option<u64>,
    out_dir: Option<PathBuf>,
    pseudonym_key_file: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Seed {
    pub addr: PeerAddr,
    pub node_id: Option<NodeId>,
}

#[derive(Debug, Clone)]
pub struct ChainConfig {
    pub name: String,
    pub protocol: Protocol,
    /// Wire constants; for discv4 chains only `name` and `default_port` matter.
    pub params: ChainParams,
    pub seeds: Vec<Seed>,
    pub getaddr_per_conn: usize,
    pub targets_per_peer: usize,
    pub identity: Identity,
}

#[derive(Debug, Clone)]
pub struct CrawlConfig {
    pub chains: Vec<ChainConfig>,
    pub interval_secs: u64,
    pub workers: usize,
    pub connect_timeout_ms: u64,
    pub handshake_timeout_ms: u64,
    pub addr_wait_ms: u64,
    pub out_dir: PathBuf,
    pub pseudonym_key_file: Option<PathBuf>,
}

fn shipped() -> BTreeMap<String, RawChain> {
    #[derive(Deserialize)]
    struct File {
        chains: Vec<RawChain>,
    }
    let file: File = toml::from_str(SHIPPED_CHAINS).expect("shipped chain table parses");
    file.chains.into_iter().map(|c| (c.name.clone(), c)).collect()
}

/// Wire parameters of the shipped Bitcoin-family chains.
pub fn default_chain_params() -> Vec<ChainParams> {
    shipped()
        .into_values()
        .filter(|c| c.protocol != Some(Protocol::Discv4))
        .map(|c| resolve_params(&c).expect("shipped chain table is valid"))
        .collect()
}

pub fn chain_params(name: &str) -> Option<ChainParams> {
    default_chain_params().into_iter().find(|p| p.name == name)
}

fn resolve_params(c: &RawChain) -> Result<ChainParams, String> {
    let protocol = c.protocol.unwrap_or(Protocol::Bitcoin);
    let magic = match (&c.magic, protocol) {
        (Some(m), _) => {
            let b = hex::decode(m.trim_start_matches("0x")).map_err(|e| e.to_string())?;
            <[u8; 4]>::try_from(b).map_err(|_| "magic must be 4 bytes".to_string())?
        }
        (None, Protocol::Discv4) => [0xE7, 0x11, 0x0D, 0x15],
        (None, Protocol::Bitcoin) => return Err("missing magic".into()),
    };
    let params = ChainParams {
        name: c.name.clone(),
        magic,
        default_port: c.port.ok_or("missing port")?,
        protocol_version: c.protocol_version.unwrap_or(0),
        user_agent: c
            .user_agent
            .clone()
            .unwrap_or_else(|| "/p2pscope:0.1.0/".into()),
        services: c.services.unwrap_or(0),
        max_addr_per_msg: c.max_addr.unwrap_or(1000),
    };
    params.validate()?;
    Ok(params)
}

fn parse_seed(s: &str, default_port: u16) -> Result<Seed, String> {
    let (node_id, rest) = match s.strip_prefix("enode://") {
        Some(r) => {
            let (id, at) = r.split_once('@').ok_or("enode url without '@'")?;
            let bytes = hex::decode(id).map_err(|e| e.to_string())?;
            let id = NodeId::from_slice(&bytes).ok_or("enode id must be 64 bytes")?;
            (Some(id), at.split('?').next().unwrap_or(at))
        }
        None => (None, s),
    };
    let addr = match rest.parse::<PeerAddr>() {
        Ok(a) => a,
        Err(_) => {
            let ip = rest
                .parse()
                .map_err(|_| format!("seed {s:?} is not an IPv4 address"))?;
            PeerAddr::new(ip, default_port)
        }
    };
    Ok(Seed { addr, node_id })
}

impl CrawlConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let raw: RawConfig = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        if raw.chains.is_empty() {
            return Err(ConfigError::Parse("no chains configured".into()));
        }
        let defaults = shipped();
        let mut chains = Vec::new();
        for rc in raw.chains {
            let name = rc.name.clone();
            let merged = match defaults.get(&name) {
                Some(base) => base.clone().overlay(rc),
                None => rc,
            };
            let err = |m: String| ConfigError::Chain(name.clone(), m);
            let protocol = merged.protocol.unwrap_or(Protocol::Bitcoin);
            let params = resolve_params(&merged).map_err(err)?;
            if merged.seeds.is_empty() {
                return Err(err("seed list is empty".into()));
            }
            let seeds = merged
                .seeds
                .iter()
                .map(|s| parse_seed(s, params.default_port))
                .collect::<Result<Vec<_>, _>>()
                .map_err(err)?;
            let getaddr_per_conn = merged.getaddr_per_conn.unwrap_or(2);
            if getaddr_per_conn == 0 {
                return Err(err("getaddr_per_conn must be >= 1".into()));
            }
            chains.push(ChainConfig {
                name: name.clone(),
                protocol,
                params,
                seeds,
                getaddr_per_conn,
                targets_per_peer: merged.targets_per_peer.unwrap_or(16).max(1),
                identity: merged.identity.unwrap_or_default(),
            });
        }
        let cfg = CrawlConfig {
            chains,
            interval_secs: raw.interval_secs.unwrap_or(7200),
            workers: raw.workers.unwrap_or(500),
            connect_timeout_ms: raw.connect_timeout_ms.unwrap_or(5000),
            handshake_timeout_ms: raw.handshake_timeout_ms.unwrap_or(10_000),
            addr_wait_ms: raw.addr_wait_ms.unwrap_or(10_000),
            out_dir: raw.out_dir.unwrap_or_else(|| PathBuf::from("snapshots")),
            pseudonym_key_file: raw.pseudonym_key_file,
        };
        if cfg.interval_secs == 0 {
            return Err(ConfigError::Parse("interval_secs must be > 0".into()));
        }
        if cfg.workers == 0 {
            return Err(ConfigError::Parse("workers must be > 0".into()));
        }
        Ok(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shipped_defaults_cover_seven_chains() {
        assert_eq!(shipped().len(), 7);
        assert_eq!(default_chain_params().len(), 6);
        let btc = chain_params("bitcoin").unwrap();
        assert_eq!(btc.magic, [0xF9, 0xBE, 0xB4, 0xD9]);
        assert_eq!(btc.max_addr_per_msg, 1000);
    }

    #[test]
    fn inherits_and_overrides() {
        let cfg = CrawlConfig::parse(
            r#"
            interval_secs = 60
            [[chains]]
            name = "litecoin"
            seeds = ["10.0.0.1", "10.0.0.2:9000"]
            getaddr_per_conn = 3
            [[chains]]
            name = "ethereum"
            seeds = ["enode://aabbccddeeff00112233445566778899aabbccddeeff00112233445566778899aabbccddeeff00112233445566778899aabbccddeeff0011223344556677889@10.0.0.3:30303"]
            "#,
        );
        // the enode id above is 65 bytes: rejected
        assert!(cfg.is_err());

        let cfg = CrawlConfig::parse(
            r#"
            [[chains]]
            name = "litecoin"
            seeds = ["10.0.0.1", "10.0.0.2:9000"]
            getaddr_per_conn = 3
            "#,
        )
        .unwrap();
        let ltc = &cfg.chains[0];
        assert_eq!(ltc.params.default_port, 9333);
        assert_eq!(ltc.seeds[0].addr, "10.0.0.1:9333".parse().unwrap());
        assert_eq!(ltc.seeds[1].addr, "10.0.0.2:9000".parse().unwrap());
        assert_eq!(ltc.getaddr_per_conn, 3);
        assert_eq!(cfg.interval_secs, 7200);
        assert_eq!(cfg.workers, 500);
    }

    #[test]
    fn empty_seed_list_is_a_config_error() {
        let err = CrawlConfig::parse("[[chains]]\nname = \"bitcoin\"\n").unwrap_err();
        assert!(matches!(err, ConfigError::Chain(_, _)));
    }

    #[test]
    fn unknown_chain_needs_magic() {
        let err = CrawlConfig::parse(
            "[[chains]]\nname = \"newcoin\"\nport = 1\nseeds = [\"10.0.0.1\"]\n",
        )
        .unwrap_err();
        assert!(err.to_string().contains("magic"));
    }
}
