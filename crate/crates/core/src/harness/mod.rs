//! Simulated overlays of protocol-speaking fake peers with a known
//! topology, used to score the crawler.

mod peer;

pub use peer::{FakePeers, LoopbackNet, SimDialer};

use std::collections::{BTreeMap, BTreeSet};
use std::net::Ipv4Addr;
use std::str::FromStr;
use std::sync::atomic::AtomicBool;
use std::sync::Arc;
use std::time::Duration;

use chrono::{DateTime, TimeZone, Utc};
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::addr::{collapse_port, PeerAddr};
use crate::config::chain_params;
use crate::crawler::{snapshot_cycle, BitcoinProber, ChainCrawler, CycleConfig, TickPolicy};
use crate::graph::gen;
use crate::snapstore::EdgeSetSnapshot;
use crate::transport::{Dialer, TcpDialer};

pub const DEFAULT_ADVERTISE_CAP: usize = 1000;
pub const SIM_PORT: u16 = 8333;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("bad topology spec: {0}")]
    Spec(String),
    #[error("cannot generate topology: {0}")]
    Generate(String),
    #[error("no free loopback port: {0}")]
    PortExhaustion(std::io::Error),
    #[error("crawl failed: {0}")]
    Crawl(String),
}

#[derive(Debug, Clone, PartialEq)]
pub enum Generator {
    ErdosRenyi { n: usize, p: f64 },
    RandomRegular { n: usize, k: usize },
    Preferential { n: usize, m: usize },
    Explicit { n: usize, edges: Vec<(u32, u32)> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimTopology {
    pub generator: Generator,
    pub seed: u64,
    pub advertise_fraction: f64,
    pub advertise_cap: usize,
    /// Share of peers that refuse every connection.
    pub unreachable_fraction: f64,
}

/// Parses `kind:key=value,...`.
///
/// Kinds: `er` (n, p), `rr` (n, k), `pa` (n, m) and `explicit` (edges).
/// Explicit edges are `;`-separated, `a>b` for one direction and `a-b` for
/// both, e.g. `explicit:edges=0-1;1-2`. Common keys: `seed`, `adv`, `cap`,
/// `down`.
impl FromStr for SimTopology {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self, HarnessError> {
        let err = |m: String| HarnessError::Spec(m);
        let (kind, rest) = s.split_once(':').unwrap_or((s, ""));
        let mut kv: BTreeMap<&str, &str> = BTreeMap::new();
        for part in rest.split(',').filter(|p| !p.is_empty()) {
            let (k, v) = part.split_once('=').ok_or_else(|| err(format!("{part:?} is not key=value")))?;
            kv.insert(k.trim(), v.trim());
        }
        fn get<T: FromStr>(kv: &mut BTreeMap<&str, &str>, key: &str) -> Result<Option<T>, HarnessError> {
            kv.remove(key)
                .map(|v| v.parse().map_err(|_| HarnessError::Spec(format!("bad value for {key}: {v:?}"))))
                .transpose()
        }
        let need = |v: Option<usize>, key: &str| v.ok_or_else(|| err(format!("{kind} needs {key}")));
        let generator = match kind {
            "er" => Generator::ErdosRenyi {
                n: need(get(&mut kv, "n")?, "n")?,
                p: get(&mut kv, "p")?.ok_or_else(|| err("er needs p".into()))?,
            },
            "rr" => Generator::RandomRegular {
                n: need(get(&mut kv, "n")?, "n")?,
                k: need(get(&mut kv, "k")?, "k")?,
            },
            "pa" => Generator::Preferential {
                n: need(get(&mut kv, "n")?, "n")?,
                m: need(get(&mut kv, "m")?, "m")?,
            },
            "explicit" => {
                let text = kv.remove("edges").ok_or_else(|| err("explicit needs edges".into()))?;
                let mut edges = Vec::new();
                for e in text.split(';').filter(|e| !e.is_empty()) {
                    let (a, b, both) = match (e.split_once('>'), e.split_once('-')) {
                        (Some((a, b)), _) => (a, b, false),
                        (None, Some((a, b))) => (a, b, true),
                        _ => return Err(err(format!("bad edge {e:?}"))),
                    };
                    let a: u32 = a.trim().parse().map_err(|_| err(format!("bad edge {e:?}")))?;
                    let b: u32 = b.trim().parse().map_err(|_| err(format!("bad edge {e:?}")))?;
                    edges.push((a, b));
                    if both {
                        edges.push((b, a));
                    }
                }
                let n = edges.iter().map(|&(a, b)| a.max(b) as usize + 1).max().unwrap_or(0);
                Generator::Explicit { n, edges }
            }
            _ => return Err(err(format!("unknown generator {kind:?}"))),
        };
        let topo = SimTopology {
            generator,
            seed: get(&mut kv, "seed")?.unwrap_or(0),
            advertise_fraction: get(&mut kv, "adv")?.unwrap_or(1.0),
            advertise_cap: get(&mut kv, "cap")?.unwrap_or(DEFAULT_ADVERTISE_CAP),
            unreachable_fraction: get(&mut kv, "down")?.unwrap_or(0.0),
        };
        if let Some(k) = kv.keys().next() {
            return Err(err(format!("unknown key {k:?}")));
        }
        if !(topo.advertise_fraction > 0.0 && topo.advertise_fraction <= 1.0) {
            return Err(err("adv must be in (0, 1]".into()));
        }
        if !(0.0..1.0).contains(&topo.unreachable_fraction) {
            return Err(err("down must be in [0, 1)".into()));
        }
        Ok(topo)
    }
}

/// The simulated overlay: directed out-neighbor lists plus addressing.
#[derive(Debug, Clone)]
pub struct GroundTruth {
    pub out: Vec<Vec<u32>>,
    pub unreachable: Vec<bool>,
    pub advertise_fraction: f64,
    pub advertise_cap: usize,
    pub seed: u64,
    /// First octet block of the address plan (`10` in memory, `127` on loopback).
    pub net: u8,
    pub port: u16,
}

impl GroundTruth {
    pub fn node_count(&self) -> usize {
        self.out.len()
    }

    pub fn edge_count(&self) -> usize {
        self.out.iter().map(Vec::len).sum()
    }

    pub fn addr(&self, node: u32) -> PeerAddr {
        let v = node + 1;
        let second = if self.net == 127 { 1 + (v >> 16) as u8 } else { (v >> 16) as u8 };
        PeerAddr::new(Ipv4Addr::new(self.net, second, (v >> 8) as u8, v as u8), self.port)
    }

    pub fn node_of(&self, ip: Ipv4Addr) -> Option<u32> {
        let o = ip.octets();
        if o[0] != self.net {
            return None;
        }
        let second = if self.net == 127 { o[1].checked_sub(1)? } else { o[1] };
        let v = ((second as u32) << 16) | ((o[2] as u32) << 8) | o[3] as u32;
        (v >= 1 && (v as usize) <= self.out.len()).then(|| v - 1)
    }

    /// Snapshot-independent name of a node.
    pub fn label(node: u32) -> String {
        format!("n{node:06}")
    }

    /// Size of one `addr` reply from `node`.
    pub fn reply_size(&self, node: u32) -> usize {
        let deg = self.out[node as usize].len();
        // the epsilon keeps products like 0.1·30 from rounding up past an integer
        ((self.advertise_fraction * deg as f64 - 1e-9).ceil() as usize)
            .min(self.advertise_cap)
            .min(deg)
    }
}

impl SimTopology {
    pub fn node_count(&self) -> usize {
        match &self.generator {
            Generator::ErdosRenyi { n, .. }
            | Generator::RandomRegular { n, .. }
            | Generator::Preferential { n, .. }
            | Generator::Explicit { n, .. } => *n,
        }
    }

    pub fn build(&self) -> Result<GroundTruth, HarnessError> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let n = self.node_count();
        if n == 0 || n >= 1 << 23 {
            return Err(HarnessError::Generate(format!("node count {n} out of range")));
        }
        let out = match &self.generator {
            Generator::ErdosRenyi { n, p } => gen::gnp_directed(*n, *p, &mut rng),
            Generator::RandomRegular { n, k } => gen::symmetric_digraph(
                &gen::random_regular(*n, *k, &mut rng)
                    .ok_or_else(|| HarnessError::Generate(format!("no {k}-regular graph on {n} nodes")))?,
            ),
            Generator::Preferential { n, m } => {
                if *m == 0 || m >= n {
                    return Err(HarnessError::Generate("pa needs 0 < m < n".into()));
                }
                gen::symmetric_digraph(&gen::barabasi_albert(*n, *m, &mut rng))
            }
            Generator::Explicit { n, edges } => {
                let mut sets = vec![BTreeSet::new(); *n];
                for &(a, b) in edges {
                    if a != b {
                        sets[a as usize].insert(b);
                    }
                }
                sets.into_iter().map(|s| s.into_iter().collect()).collect()
            }
        };
        let mut unreachable = vec![false; n];
        let down = (self.unreachable_fraction * n as f64).floor() as usize;
        if down > 0 {
            // node 0 stays up so there is always a seed
            for i in sample(&mut rng, n - 1, down.min(n - 1)) {
                unreachable[i + 1] = true;
            }
        }
        Ok(GroundTruth {
            out,
            unreachable,
            advertise_fraction: self.advertise_fraction,
            advertise_cap: self.advertise_cap,
            seed: self.seed,
            net: 10,
            port: SIM_PORT,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RecallReport {
    pub true_nodes: usize,
    pub found_nodes: usize,
    pub node_recall: f64,
    pub true_edges: usize,
    pub found_edges: usize,
    pub correct_edges: usize,
    pub edge_recall: f64,
    /// Recall over edges whose source accepts connections.
    pub edge_recall_reachable: f64,
    pub edge_precision: f64,
    /// Snapshot ids that map to no simulated node.
    pub unknown_ids: usize,
}

fn ratio(a: usize, b: usize) -> f64 {
    if b == 0 {
        1.0
    } else {
        a as f64 / b as f64
    }
}

/// Scores a snapshot (raw `ip:port` ids or node labels) against the truth.
pub fn measure_recall(snap: &EdgeSetSnapshot, truth: &GroundTruth) -> RecallReport {
    let resolve = |id: &str| -> Option<u32> {
        if let Some(rest) = id.strip_prefix('n') {
            if let Ok(v) = rest.parse::<u32>() {
                return ((v as usize) < truth.node_count()).then_some(v);
            }
        }
        collapse_port(id).parse().ok().and_then(|ip| truth.node_of(ip))
    };
    let mut unknown = 0;
    let mut nodes = BTreeSet::new();
    let mut found = BTreeSet::new();
    for id in snap.node_ids() {
        match resolve(id) {
            Some(v) => {
                nodes.insert(v);
            }
            None => unknown += 1,
        }
    }
    for (src, dsts) in &snap.records {
        let Some(a) = resolve(src) else { continue };
        for d in dsts {
            if let Some(b) = resolve(d) {
                found.insert((a, b));
            }
        }
    }
    let found_raw: usize = snap.records.values().map(BTreeSet::len).sum();
    let mut correct = 0;
    let mut correct_reachable = 0;
    let mut reachable_edges = 0;
    for (a, outs) in truth.out.iter().enumerate() {
        let up = !truth.unreachable[a];
        for &b in outs {
            let hit = found.contains(&(a as u32, b));
            correct += hit as usize;
            if up {
                reachable_edges += 1;
                correct_reachable += hit as usize;
            }
        }
    }
    RecallReport {
        true_nodes: truth.node_count(),
        found_nodes: nodes.len(),
        node_recall: ratio(nodes.len(), truth.node_count()),
        true_edges: truth.edge_count(),
        found_edges: found_raw,
        correct_edges: correct,
        edge_recall: ratio(correct, truth.edge_count()),
        edge_recall_reachable: ratio(correct_reachable, reachable_edges),
        edge_precision: ratio(correct, found_raw),
        unknown_ids: unknown,
    }
}

/// Rewrites raw address ids to node labels, so snapshots from different
/// transports compare equal and carry no addresses.
pub fn relabel(snap: &EdgeSetSnapshot, truth: &GroundTruth) -> EdgeSetSnapshot {
    let name = |id: &str| -> String {
        collapse_port(id)
            .parse()
            .ok()
            .and_then(|ip| truth.node_of(ip))
            .map(GroundTruth::label)
            .unwrap_or_else(|| "unknown".to_string())
    };
    let mut out = EdgeSetSnapshot::new(snap.chain.clone(), snap.timestamp);
    out.meta = snap.meta.clone();
    for (src, dsts) in &snap.records {
        out.records
            .entry(name(src))
            .or_default()
            .extend(dsts.iter().map(|d| name(d)));
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SimTransport {
    #[default]
    InMemory,
    LoopbackTcp,
}

impl FromStr for SimTransport {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self, HarnessError> {
        match s {
            "in_memory" | "memory" | "mem" => Ok(SimTransport::InMemory),
            "loopback_tcp" | "loopback" | "tcp" => Ok(SimTransport::LoopbackTcp),
            _ => Err(HarnessError::Spec(format!("unknown transport {s:?}"))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SimCrawlOptions {
    pub rounds: u64,
    pub getaddr_per_conn: usize,
    pub workers: usize,
    pub ticks: usize,
    /// Number of seed peers, taken as the lowest-numbered reachable nodes.
    pub seeds: usize,
    pub transport: SimTransport,
    pub start: DateTime<Utc>,
    pub interval: Duration,
}

impl Default for SimCrawlOptions {
    fn default() -> Self {
        SimCrawlOptions {
            rounds: 2,
            getaddr_per_conn: 2,
            workers: 16,
            ticks: 1,
            seeds: 1,
            transport: SimTransport::InMemory,
            start: Utc.with_ymd_and_hms(2020, 1, 1, 0, 0, 0).unwrap(),
            interval: Duration::from_secs(7200),
        }
    }
}

#[derive(Debug)]
pub struct SimCrawl {
    pub truth: GroundTruth,
    /// One relabelled snapshot per tick.
    pub snapshots: Vec<EdgeSetSnapshot>,
    pub recall: Vec<RecallReport>,
}

/// Spawns the fake network, crawls it and scores every snapshot.
pub fn crawl_simnet(topo: &SimTopology, opts: &SimCrawlOptions) -> Result<SimCrawl, HarnessError> {
    let mut truth = topo.build()?;
    let params = chain_params("bitcoin").expect("bitcoin is shipped");
    let mut _loopback = None;
    let dialer: Arc<dyn Dialer> = match opts.transport {
        SimTransport::InMemory => Arc::new(SimDialer::new(FakePeers::new(truth.clone(), params.clone()))),
        SimTransport::LoopbackTcp => {
            truth.net = 127;
            let net = LoopbackNet::spawn(&mut truth, params.clone())?;
            _loopback = Some(net);
            Arc::new(TcpDialer)
        }
    };
    let prober = BitcoinProber {
        params,
        dialer,
        connect_timeout: Duration::from_secs(5),
        handshake_timeout: Duration::from_secs(10),
        addr_wait: Duration::from_secs(10),
        getaddr_per_conn: opts.getaddr_per_conn,
    };
    let seeds: Vec<PeerAddr> = (0..truth.node_count() as u32)
        .filter(|&v| !truth.unreachable[v as usize])
        .take(opts.seeds.max(1))
        .map(|v| truth.addr(v))
        .collect();
    let crawler = ChainCrawler::new("simnet", Arc::new(prober), seeds, opts.workers)
        .map_err(|e| HarnessError::Crawl(e.to_string()))?;
    let cfg = CycleConfig {
        interval: opts.interval,
        policy: TickPolicy::Rounds(opts.rounds),
        ticks: Some(opts.ticks),
        start: opts.start,
    };
    let mut snapshots = Vec::new();
    snapshot_cycle(&[crawler], &cfg, &AtomicBool::new(false), |snap| {
        snapshots.push(relabel(&snap, &truth));
        Ok(String::new())
    });
    let recall = snapshots.iter().map(|s| measure_recall(s, &truth)).collect();
    Ok(SimCrawl {
        truth,
        snapshots,
        recall,
    })
}

/// Ground truth as a snapshot with node labels.
pub fn truth_snapshot(truth: &GroundTruth, chain: &str, ts: DateTime<Utc>) -> EdgeSetSnapshot {
    let mut s = EdgeSetSnapshot::new(chain, ts);
    for (a, outs) in truth.out.iter().enumerate() {
        s.records.insert(
            GroundTruth::label(a as u32),
            outs.iter().map(|&b| GroundTruth::label(b)).collect(),
        );
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spec_grammar() {
        let t: SimTopology = "er:n=500,p=0.02,seed=7,adv=0.8".parse().unwrap();
        assert_eq!(t.generator, Generator::ErdosRenyi { n: 500, p: 0.02 });
        assert_eq!((t.seed, t.advertise_fraction, t.advertise_cap), (7, 0.8, 1000));
        let e: SimTopology = "explicit:edges=0-1;1>2".parse().unwrap();
        assert_eq!(e.generator, Generator::Explicit { n: 3, edges: vec![(0, 1), (1, 0), (1, 2)] });
        assert!("er:n=5".parse::<SimTopology>().is_err());
        assert!("er:n=5,p=0.1,adv=0".parse::<SimTopology>().is_err());
        assert!("er:n=5,p=0.1,bogus=1".parse::<SimTopology>().is_err());
    }

    #[test]
    fn address_plan_round_trips() {
        let mut t = "explicit:edges=0>69999".parse::<SimTopology>().unwrap().build().unwrap();
        for net in [10, 127] {
            t.net = net;
            for v in [0u32, 255, 256, 65535, 65536, 69999] {
                assert_eq!(t.node_of(t.addr(v).ip()), Some(v));
            }
        }
    }

    #[test]
    fn recall_bookkeeping() {
        let topo: SimTopology = "explicit:edges=0>1;1>2;2>0;3>0".parse().unwrap();
        let mut truth = topo.build().unwrap();
        truth.unreachable[3] = true;
        let mut snap = EdgeSetSnapshot::new("x", Utc.timestamp_opt(0, 0).unwrap());
        snap.records.insert("n000000".into(), ["n000001".to_string()].into());
        snap.records.insert("n000001".into(), ["n000002".to_string(), "n000000".to_string()].into());
        let r = measure_recall(&snap, &truth);
        assert_eq!(r.correct_edges, 2);
        assert_eq!(r.edge_recall, 0.5);
        assert!((r.edge_recall_reachable - 2.0 / 3.0).abs() < 1e-15);
        assert!((r.edge_precision - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(r.node_recall, 0.75);
    }
}
