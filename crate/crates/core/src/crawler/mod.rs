//! Recursive peer discovery with `pending`/`tried`/`edges` bookkeeping and
//! synchronized snapshot dumps across chains.

mod probe;

pub use probe::{BitcoinProber, EthProber, ProbeError, Prober, Discovered};

use std::collections::{BTreeMap, BTreeSet};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Condvar, Mutex};
use std::thread;
use std::time::{Duration, Instant};

use chrono::{DateTime, Utc};
use thiserror::Error;

use crate::addr::PeerAddr;
use crate::snapstore::{EdgeSetSnapshot, SnapshotMeta};

#[derive(Debug, Error)]
pub enum CrawlError {
    #[error("configuration error: {0}")]
    Config(String),
}

/// Discovery state of one chain.
///
/// A peer is claimed by moving it from `pending` to `tried`, so the two sets
/// never intersect and every `edges` key is always in one of them.
#[derive(Debug, Default, Clone)]
pub struct CrawlState {
    pending: BTreeSet<PeerAddr>,
    tried: BTreeSet<PeerAddr>,
    edges: BTreeMap<PeerAddr, BTreeSet<PeerAddr>>,
    labels: BTreeMap<PeerAddr, String>,
    round: u64,
    in_flight: usize,
}

impl CrawlState {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn pending(&self) -> &BTreeSet<PeerAddr> {
        &self.pending
    }

    pub fn tried(&self) -> &BTreeSet<PeerAddr> {
        &self.tried
    }

    pub fn edges(&self) -> &BTreeMap<PeerAddr, BTreeSet<PeerAddr>> {
        &self.edges
    }

    pub fn round(&self) -> u64 {
        self.round
    }

    pub fn is_empty(&self) -> bool {
        self.pending.is_empty() && self.tried.is_empty() && self.edges.is_empty()
    }

    pub fn seed(&mut self, seeds: &[PeerAddr]) -> Result<(), CrawlError> {
        if seeds.is_empty() {
            return Err(CrawlError::Config("empty seed list".into()));
        }
        for s in seeds {
            if s.is_dialable() && !self.tried.contains(s) {
                self.pending.insert(*s);
            }
        }
        Ok(())
    }

    /// Atomically moves the next pending peer to `tried`.
    pub fn claim(&mut self) -> Option<PeerAddr> {
        let peer = self.pending.pop_first()?;
        self.tried.insert(peer);
        Some(peer)
    }

    /// Records `origin`'s reply; new peers become pending and the advertised
    /// list is unioned into `edges[origin]`.
    pub fn record_reply(&mut self, origin: PeerAddr, peers: &[PeerAddr]) {
        if !self.pending.contains(&origin) {
            self.tried.insert(origin);
        }
        let entry = self.edges.entry(origin).or_default();
        for &p in peers {
            if p == origin || !p.is_dialable() {
                continue;
            }
            entry.insert(p);
            if !self.tried.contains(&p) {
                self.pending.insert(p);
            }
        }
    }

    pub fn set_label(&mut self, peer: PeerAddr, label: String) {
        self.labels.insert(peer, label);
    }

    /// Starts the next round once `pending` has drained.
    pub fn finish_round(&mut self) {
        debug_assert!(self.pending.is_empty());
        self.pending = std::mem::take(&mut self.tried);
        self.round += 1;
    }

    fn label(&self, p: &PeerAddr) -> String {
        self.labels.get(p).cloned().unwrap_or_else(|| p.to_string())
    }

    pub fn to_snapshot(&self, chain: &str, ts: DateTime<Utc>) -> EdgeSetSnapshot {
        let mut snap = EdgeSetSnapshot::new(chain, ts);
        for (src, dsts) in &self.edges {
            let set = snap.records.entry(self.label(src)).or_default();
            set.extend(dsts.iter().map(|d| self.label(d)));
        }
        snap.meta = SnapshotMeta {
            crawler_version: Some(env!("CARGO_PKG_VERSION").to_string()),
            rounds: Some(self.round),
        };
        snap
    }

    /// Empties every set; returns the peers that had been tried or were
    /// still pending.
    pub fn clear(&mut self) -> BTreeSet<PeerAddr> {
        let mut known = std::mem::take(&mut self.tried);
        known.append(&mut self.pending);
        self.edges.clear();
        self.labels.clear();
        self.round = 0;
        known
    }
}

#[derive(Debug, Default, Clone, PartialEq, Eq)]
pub struct RoundReport {
    pub round: u64,
    pub probed: usize,
    pub succeeded: usize,
    pub failed: usize,
    /// True when the round ended early on a stop request or deadline.
    pub interrupted: bool,
}

/// Crawls one chain with a pool of workers.
pub struct ChainCrawler {
    pub name: String,
    pub state: Mutex<CrawlState>,
    wake: Condvar,
    prober: Arc<dyn Prober>,
    seeds: Vec<PeerAddr>,
    pub workers: usize,
}

impl ChainCrawler {
    pub fn new(
        name: impl Into<String>,
        prober: Arc<dyn Prober>,
        seeds: Vec<PeerAddr>,
        workers: usize,
    ) -> Result<Self, CrawlError> {
        let mut state = CrawlState::new();
        state.seed(&seeds)?;
        Ok(ChainCrawler {
            name: name.into(),
            state: Mutex::new(state),
            wake: Condvar::new(),
            prober,
            seeds,
            workers: workers.max(1),
        })
    }

    /// Drains `pending` with concurrent workers, then moves `tried` back to
    /// `pending` for the next round. Per-peer failures are logged and never
    /// abort the round. Workers stop claiming peers once `stop` is set or
    /// `deadline` passes.
    pub fn run_round(&self, stop: &AtomicBool, deadline: Option<Instant>) -> RoundReport {
        let round = self.state.lock().unwrap().round;
        let report = Mutex::new(RoundReport {
            round,
            ..Default::default()
        });
        let halted = || stop.load(Ordering::Relaxed) || deadline.is_some_and(|d| Instant::now() >= d);
        thread::scope(|scope| {
            for _ in 0..self.workers {
                scope.spawn(|| loop {
                    let peer = {
                        let mut st = self.state.lock().unwrap();
                        loop {
                            if halted() {
                                report.lock().unwrap().interrupted = true;
                                break None;
                            }
                            if let Some(p) = st.claim() {
                                st.in_flight += 1;
                                break Some(p);
                            }
                            if st.in_flight == 0 {
                                break None;
                            }
                            st = self
                                .wake
                                .wait_timeout(st, Duration::from_millis(100))
                                .unwrap()
                                .0;
                        }
                    };
                    let Some(peer) = peer else {
                        self.wake.notify_all();
                        return;
                    };
                    let result = self.prober.probe(peer);
                    let mut st = self.state.lock().unwrap();
                    st.in_flight -= 1;
                    let mut rep = report.lock().unwrap();
                    rep.probed += 1;
                    match result {
                        Ok(found) => {
                            rep.succeeded += 1;
                            let addrs: Vec<_> = found.iter().map(|d| d.addr).collect();
                            for d in &found {
                                if let Some(l) = &d.label {
                                    st.set_label(d.addr, l.clone());
                                }
                            }
                            if let Some(l) = self.prober.label_of(peer) {
                                st.set_label(peer, l);
                            }
                            st.record_reply(peer, &addrs);
                        }
                        Err(e) => {
                            rep.failed += 1;
                            log::debug!("{}: {peer} failed: {e}", self.name);
                        }
                    }
                    drop(rep);
                    drop(st);
                    self.wake.notify_all();
                });
            }
        });
        let mut report = report.into_inner().unwrap();
        let mut st = self.state.lock().unwrap();
        if st.pending.is_empty() {
            st.finish_round();
        } else {
            report.interrupted = true;
        }
        report
    }

    /// Dump-and-reset: returns the snapshot and reseeds from the peers known
    /// so far plus the configured seeds.
    pub fn dump(&self, ts: DateTime<Utc>) -> EdgeSetSnapshot {
        let mut st = self.state.lock().unwrap();
        let snap = st.to_snapshot(&self.name, ts);
        let known: Vec<_> = st.clear().into_iter().chain(self.seeds.iter().copied()).collect();
        st.seed(&known).expect("configured seeds are non-empty");
        snap
    }
}

/// When a tick ends.
#[derive(Debug, Clone, Copy)]
pub enum TickPolicy {
    /// Crawl for a fixed number of rounds, then dump (simulations).
    Rounds(u64),
    /// Crawl until the interval elapses, then dump (live crawling).
    WallClock,
}

#[derive(Debug, Clone)]
pub struct CycleConfig {
    pub interval: Duration,
    pub policy: TickPolicy,
    /// Stop after this many ticks; `None` runs until `stop` is set.
    pub ticks: Option<usize>,
    /// Timestamp of the first tick under [`TickPolicy::Rounds`]; later ticks
    /// add `interval`. Live runs stamp ticks with the wall clock.
    pub start: DateTime<Utc>,
}

#[derive(Debug)]
pub struct TickReport {
    pub timestamp: DateTime<Utc>,
    /// Per-chain dump outcome: `Ok(path-or-label)` or the failure text.
    pub dumps: BTreeMap<String, Result<String, String>>,
}

/// Runs crawl ticks over all chains. Every chain crawls in its own thread;
/// at each tick the threads join (the barrier), each chain's edge set is
/// dumped under one shared timestamp, and all sets are reset. A failing dump
/// only marks that chain's snapshot as absent.
pub fn snapshot_cycle<F>(
    chains: &[ChainCrawler],
    cfg: &CycleConfig,
    stop: &AtomicBool,
    mut sink: F,
) -> Vec<TickReport>
where
    F: FnMut(EdgeSetSnapshot) -> Result<String, String>,
{
    let mut reports = Vec::new();
    let mut tick = 0usize;
    let mut last_ts: Option<DateTime<Utc>> = None;
    while cfg.ticks.is_none_or(|t| tick < t) && !stop.load(Ordering::Relaxed) {
        let deadline = Instant::now() + cfg.interval;
        thread::scope(|scope| {
            for chain in chains {
                scope.spawn(move || match cfg.policy {
                    TickPolicy::Rounds(n) => {
                        for _ in 0..n {
                            if chain.run_round(stop, None).interrupted {
                                break;
                            }
                        }
                    }
                    TickPolicy::WallClock => {
                        while Instant::now() < deadline && !stop.load(Ordering::Relaxed) {
                            let rep = chain.run_round(stop, Some(deadline));
                            log::info!(
                                "{} round {}: {} probed, {} ok",
                                chain.name,
                                rep.round,
                                rep.probed,
                                rep.succeeded
                            );
                            if rep.probed == 0 && !rep.interrupted {
                                // nothing reachable; avoid spinning until the deadline
                                thread::sleep(Duration::from_millis(200).min(cfg.interval));
                            }
                        }
                    }
                });
            }
        });
        let mut ts = match cfg.policy {
            TickPolicy::Rounds(_) => cfg.start + chrono::Duration::from_std(cfg.interval * tick as u32).unwrap(),
            TickPolicy::WallClock => Utc::now().with_nanosecond_zeroed(),
        };
        if let Some(prev) = last_ts {
            if ts <= prev {
                ts = prev + chrono::Duration::seconds(1);
            }
        }
        last_ts = Some(ts);
        let mut dumps = BTreeMap::new();
        for chain in chains {
            let snap = chain.dump(ts);
            let outcome = sink(snap);
            if let Err(e) = &outcome {
                log::error!("{}: dump failed, snapshot absent: {e}", chain.name);
            }
            dumps.insert(chain.name.clone(), outcome);
        }
        reports.push(TickReport {
            timestamp: ts,
            dumps,
        });
        tick += 1;
    }
    reports
}

trait SecondResolution {
    fn with_nanosecond_zeroed(self) -> Self;
}

impl SecondResolution for DateTime<Utc> {
    fn with_nanosecond_zeroed(self) -> Self {
        use chrono::Timelike;
        self.with_nanosecond(0).unwrap_or(self)
    }
}
