//! Session reconstruction over a chain's snapshot sequence.

use std::collections::{BTreeMap, BTreeSet};

use chrono::{DateTime, Utc};
use serde::Serialize;
use thiserror::Error;

use crate::addr::collapse_port;
use crate::snapstore::EdgeSetSnapshot;
use crate::stats::{jaccard, spearman, Correlation, StatsError};

#[derive(Debug, Error, PartialEq)]
pub enum ChurnError {
    #[error("need at least {need} snapshots, have {have}")]
    TooFewSnapshots { need: usize, have: usize },
    #[error("need at least {need} nodes, have {have}")]
    TooFewNodes { need: usize, have: usize },
    #[error("snapshots mix chains")]
    MixedChains,
    #[error(transparent)]
    Stats(#[from] StatsError),
}

/// Reachability of every node across a chain's snapshots. A node is
/// reachable at t iff it is a record source in that snapshot.
#[derive(Debug, Clone, PartialEq)]
pub struct PresenceMatrix {
    pub chain: String,
    pub timestamps: Vec<DateTime<Utc>>,
    pub nodes: Vec<String>,
    /// `out_degree[node][t]`, `None` when unreachable.
    pub out_degree: Vec<Vec<Option<usize>>>,
}

impl PresenceMatrix {
    pub fn from_snapshots(snaps: &[EdgeSetSnapshot]) -> Result<Self, ChurnError> {
        let chains: BTreeSet<&str> = snaps.iter().map(|s| s.chain.as_str()).collect();
        if chains.len() > 1 {
            return Err(ChurnError::MixedChains);
        }
        let mut order: Vec<&EdgeSetSnapshot> = snaps.iter().collect();
        order.sort_by_key(|s| s.timestamp);
        order.dedup_by_key(|s| s.timestamp);
        let mut per_t: Vec<BTreeMap<String, usize>> = Vec::new();
        let mut nodes = BTreeSet::new();
        for s in &order {
            let mut m: BTreeMap<String, BTreeSet<&str>> = BTreeMap::new();
            for (src, dsts) in &s.records {
                let a = collapse_port(src);
                let e = m.entry(a.to_string()).or_default();
                e.extend(dsts.iter().map(|d| collapse_port(d)).filter(|&d| d != a));
            }
            nodes.extend(m.keys().cloned());
            per_t.push(m.into_iter().map(|(k, v)| (k, v.len())).collect());
        }
        let nodes: Vec<String> = nodes.into_iter().collect();
        let out_degree = nodes
            .iter()
            .map(|n| per_t.iter().map(|m| m.get(n).copied()).collect())
            .collect();
        Ok(PresenceMatrix {
            chain: chains.into_iter().next().unwrap_or_default().to_string(),
            timestamps: order.iter().map(|s| s.timestamp).collect(),
            nodes,
            out_degree,
        })
    }

    /// Builds from a boolean matrix (`rows[node][t]`) with unit degrees.
    pub fn from_bits(rows: &[Vec<bool>], timestamps: Vec<DateTime<Utc>>) -> Self {
        PresenceMatrix {
            chain: String::new(),
            nodes: (0..rows.len()).map(|i| format!("n{i:06}")).collect(),
            out_degree: rows
                .iter()
                .map(|r| r.iter().map(|&b| b.then_some(1)).collect())
                .collect(),
            timestamps,
        }
    }

    pub fn present(&self, node: usize, t: usize) -> bool {
        self.out_degree[node][t].is_some()
    }

    pub fn all_columns(&self) -> Vec<usize> {
        (0..self.timestamps.len()).collect()
    }

    /// Seconds represented by column `t`: the gap to the next snapshot, or
    /// the previous gap for the last one.
    fn span(&self, t: usize) -> i64 {
        let ts = &self.timestamps;
        if t + 1 < ts.len() {
            (ts[t + 1] - ts[t]).num_seconds()
        } else if t > 0 {
            (ts[t] - ts[t - 1]).num_seconds()
        } else {
            0
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Session {
    pub node: usize,
    /// Column index where the run starts.
    pub start: usize,
    pub length: usize,
    pub duration_secs: i64,
}

/// Maximal runs of reachability over `cols` (ascending column indices). A
/// jump in `cols` ends a run, so excluded snapshots are never bridged.
pub fn sessions(m: &PresenceMatrix, cols: &[usize]) -> Vec<Session> {
    let mut out = Vec::new();
    for node in 0..m.nodes.len() {
        let mut run: Option<Session> = None;
        let mut prev: Option<usize> = None;
        for &t in cols {
            let contiguous = prev.is_some_and(|p| p + 1 == t);
            if !contiguous {
                out.extend(run.take());
            }
            if m.present(node, t) {
                match run.as_mut() {
                    Some(r) => {
                        r.length += 1;
                        r.duration_secs += m.span(t);
                    }
                    None => {
                        run = Some(Session {
                            node,
                            start: t,
                            length: 1,
                            duration_secs: m.span(t),
                        })
                    }
                }
            } else {
                out.extend(run.take());
            }
            prev = Some(t);
        }
        out.extend(run);
    }
    out
}

/// Drops excluded timestamps and cuts the rest into `k` contiguous blocks;
/// the first `len % k` blocks get one extra snapshot.
pub fn split_periods(
    timestamps: &[DateTime<Utc>],
    k: usize,
    exclude: &[DateTime<Utc>],
) -> Result<Vec<Vec<usize>>, ChurnError> {
    let kept: Vec<usize> = (0..timestamps.len())
        .filter(|&i| !exclude.contains(&timestamps[i]))
        .collect();
    if k == 0 || kept.len() < k {
        return Err(ChurnError::TooFewSnapshots {
            need: k.max(1),
            have: kept.len(),
        });
    }
    let (base, extra) = (kept.len() / k, kept.len() % k);
    let mut out = Vec::with_capacity(k);
    let mut pos = 0;
    for i in 0..k {
        let size = base + usize::from(i < extra);
        out.push(kept[pos..pos + size].to_vec());
        pos += size;
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum DegreeRule {
    #[default]
    Mean,
    Max,
}

/// Per node with at least one session in `cols`: total uptime in seconds
/// and its aggregated out-degree over reachable snapshots.
pub fn uptime_and_degree(m: &PresenceMatrix, cols: &[usize], rule: DegreeRule) -> BTreeMap<String, (f64, f64)> {
    let mut uptime: BTreeMap<usize, i64> = BTreeMap::new();
    for s in sessions(m, cols) {
        *uptime.entry(s.node).or_default() += s.duration_secs;
    }
    uptime
        .into_iter()
        .map(|(node, up)| {
            let degs: Vec<f64> = cols
                .iter()
                .filter_map(|&t| m.out_degree[node][t])
                .map(|d| d as f64)
                .collect();
            let deg = match rule {
                DegreeRule::Mean => degs.iter().sum::<f64>() / degs.len() as f64,
                DegreeRule::Max => degs.iter().copied().fold(0.0, f64::max),
            };
            (m.nodes[node].clone(), (up as f64, deg))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UptimeCorrelation {
    pub all: Correlation,
    pub low: Option<Correlation>,
    pub high: Option<Correlation>,
    pub n_nodes: usize,
}

/// Spearman correlation of uptime against degree, overall and within the
/// low/high halves split at the median degree.
pub fn degree_uptime_correlation(
    m: &PresenceMatrix,
    cols: &[usize],
    rule: DegreeRule,
) -> Result<UptimeCorrelation, ChurnError> {
    let ud = uptime_and_degree(m, cols, rule);
    let pairs: Vec<(f64, f64)> = ud.values().copied().collect();
    correlate(&pairs)
}

pub fn correlate(pairs: &[(f64, f64)]) -> Result<UptimeCorrelation, ChurnError> {
    let (up, deg): (Vec<f64>, Vec<f64>) = pairs.iter().copied().unzip();
    let all = spearman(&up, &deg)?;
    let mut sorted = deg.clone();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let median = if sorted.len() % 2 == 1 {
        sorted[sorted.len() / 2]
    } else {
        (sorted[sorted.len() / 2 - 1] + sorted[sorted.len() / 2]) / 2.0
    };
    let half = |high: bool| {
        let (u, d): (Vec<f64>, Vec<f64>) = pairs.iter().filter(|p| (p.1 > median) == high).copied().unzip();
        spearman(&u, &d).ok()
    };
    Ok(UptimeCorrelation {
        all,
        low: half(false),
        high: half(true),
        n_nodes: pairs.len(),
    })
}

/// Jaccard similarity between the top `top_frac` nodes by degree and the
/// nodes whose uptime reaches the smallest uptime among them.
pub fn uptime_degree_jaccard(ud: &BTreeMap<String, (f64, f64)>, top_frac: f64) -> Result<f64, ChurnError> {
    if ud.len() < 10 {
        return Err(ChurnError::TooFewNodes { need: 10, have: ud.len() });
    }
    let mut by_deg: Vec<(&String, f64, f64)> = ud.iter().map(|(n, &(u, d))| (n, u, d)).collect();
    by_deg.sort_by(|a, b| b.2.partial_cmp(&a.2).unwrap().then(a.0.cmp(b.0)));
    let k = ((ud.len() as f64 * top_frac).ceil() as usize).clamp(1, ud.len());
    let top: BTreeSet<&String> = by_deg[..k].iter().map(|x| x.0).collect();
    let threshold = by_deg[..k].iter().map(|x| x.1).fold(f64::INFINITY, f64::min);
    let up: BTreeSet<&String> = ud.iter().filter(|(_, &(u, _))| u >= threshold).map(|(n, _)| n).collect();
    Ok(jaccard(&top, &up)?)
}

/// Empirical CCDF `(x, P(X ≥ x))` over distinct values.
pub fn ccdf(values: &[f64]) -> Vec<(f64, f64)> {
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = v.len() as f64;
    let mut out = Vec::new();
    for (i, &x) in v.iter().enumerate() {
        if out.last().is_none_or(|&(px, _)| px != x) {
            out.push((x, (v.len() - i) as f64 / n));
        }
    }
    out
}
