//! Nodes and edges shared between chains, and whether overlapping nodes
//! differ structurally from the rest.

use std::collections::{BTreeMap, BTreeSet};

use chrono::{DateTime, Utc};
use serde::Serialize;
use thiserror::Error;

use crate::addr::collapse_port;
use crate::snapstore::EdgeSetSnapshot;
use crate::stats::{ks_2samp, KsOutcome};

#[derive(Debug, Error, PartialEq)]
pub enum OverlapError {
    #[error("need snapshots of at least two chains at one timestamp")]
    SingleChain,
}

/// Node identity used to match nodes across chains.
pub fn node_key(id: &str) -> &str {
    collapse_port(id)
}

fn node_set(s: &EdgeSetSnapshot) -> BTreeSet<String> {
    s.node_ids().into_iter().map(|n| node_key(n).to_string()).collect()
}

fn edge_set(s: &EdgeSetSnapshot) -> BTreeSet<(String, String)> {
    let mut out = BTreeSet::new();
    for (src, dsts) in &s.records {
        let a = node_key(src);
        for d in dsts {
            let b = node_key(d);
            if a != b {
                let (x, y) = if a < b { (a, b) } else { (b, a) };
                out.insert((x.to_string(), y.to_string()));
            }
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OverlapPartition {
    pub chain: String,
    pub timestamp: DateTime<Utc>,
    pub exclusive: BTreeSet<String>,
    pub overlapping: BTreeSet<String>,
}

/// Splits each chain's nodes at one timestamp into those also present in
/// another chain and the rest.
pub fn partition(snaps: &[&EdgeSetSnapshot]) -> Result<Vec<OverlapPartition>, OverlapError> {
    let chains: BTreeSet<&str> = snaps.iter().map(|s| s.chain.as_str()).collect();
    if chains.len() < 2 {
        return Err(OverlapError::SingleChain);
    }
    let sets: Vec<BTreeSet<String>> = snaps.iter().map(|s| node_set(s)).collect();
    let mut owners: BTreeMap<&str, BTreeSet<&str>> = BTreeMap::new();
    for (s, set) in snaps.iter().zip(&sets) {
        for n in set {
            owners.entry(n.as_str()).or_default().insert(s.chain.as_str());
        }
    }
    Ok(snaps
        .iter()
        .zip(&sets)
        .map(|(s, set)| {
            let (overlapping, exclusive) = set
                .iter()
                .cloned()
                .partition(|n| owners[n.as_str()].len() > 1);
            OverlapPartition {
                chain: s.chain.clone(),
                timestamp: s.timestamp,
                exclusive,
                overlapping,
            }
        })
        .collect())
}

/// Histogram of entities by the number of distinct chains they were ever
/// seen in; buckets `2`, `3`, `4`, `>=5`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct OverlapTable {
    pub nodes: BTreeMap<String, usize>,
    pub edges: BTreeMap<String, usize>,
}

fn bucket(k: usize) -> Option<&'static str> {
    match k {
        0 | 1 => None,
        2 => Some("2"),
        3 => Some("3"),
        4 => Some("4"),
        _ => Some(">=5"),
    }
}

pub fn aggregate_overlaps(snaps: &[EdgeSetSnapshot]) -> OverlapTable {
    let mut node_chains: BTreeMap<String, BTreeSet<&str>> = BTreeMap::new();
    let mut edge_chains: BTreeMap<(String, String), BTreeSet<&str>> = BTreeMap::new();
    for s in snaps {
        for n in node_set(s) {
            node_chains.entry(n).or_default().insert(&s.chain);
        }
        for e in edge_set(s) {
            edge_chains.entry(e).or_default().insert(&s.chain);
        }
    }
    let empty = || -> BTreeMap<String, usize> {
        ["2", "3", "4", ">=5"].iter().map(|k| (k.to_string(), 0)).collect()
    };
    let (mut nodes, mut edges) = (empty(), empty());
    for c in node_chains.values() {
        if let Some(b) = bucket(c.len()) {
            *nodes.get_mut(b).unwrap() += 1;
        }
    }
    for c in edge_chains.values() {
        if let Some(b) = bucket(c.len()) {
            *edges.get_mut(b).unwrap() += 1;
        }
    }
    OverlapTable { nodes, edges }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RatioPoint {
    pub chain: String,
    pub timestamp: DateTime<Utc>,
    pub overlapping: usize,
    pub total: usize,
    pub ratio: f64,
}

/// `|G′|/|S|` for every snapshot. A chain alone at its timestamp has ratio 0.
pub fn overlap_ratio_series(snaps: &[EdgeSetSnapshot]) -> Vec<RatioPoint> {
    let mut by_ts: BTreeMap<DateTime<Utc>, Vec<&EdgeSetSnapshot>> = BTreeMap::new();
    for s in snaps {
        by_ts.entry(s.timestamp).or_default().push(s);
    }
    let mut out = Vec::new();
    for group in by_ts.values() {
        let parts = match partition(group) {
            Ok(p) => p,
            Err(_) => group
                .iter()
                .map(|s| OverlapPartition {
                    chain: s.chain.clone(),
                    timestamp: s.timestamp,
                    exclusive: node_set(s),
                    overlapping: BTreeSet::new(),
                })
                .collect(),
        };
        for p in parts {
            let total = p.exclusive.len() + p.overlapping.len();
            out.push(RatioPoint {
                ratio: if total == 0 { 0.0 } else { p.overlapping.len() as f64 / total as f64 },
                chain: p.chain,
                timestamp: p.timestamp,
                overlapping: p.overlapping.len(),
                total,
            });
        }
    }
    out.sort_by(|a, b| (&a.chain, a.timestamp).cmp(&(&b.chain, b.timestamp)));
    out
}

pub const KS_P: f64 = 0.05;
pub const KS_D: f64 = 0.1;

/// A KS result counts as a significant difference when `p < 0.05` and
/// `D > 0.1`.
pub fn is_significant(k: &KsOutcome) -> bool {
    k.p < KS_P && k.d > KS_D
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Dominance {
    OverlappingHigher,
    OverlappingLower,
    Neither,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroupSignificance {
    pub tested: usize,
    pub significant: usize,
    pub fraction: f64,
    pub skipped: usize,
    pub dominance: Dominance,
}

/// Mean of `F_exclusive − F_overlapping` over the pooled sample points;
/// positive when the overlapping group's CDF lies lower.
fn cdf_gap(excl: &[f64], over: &[f64]) -> f64 {
    let mut e = excl.to_vec();
    let mut o = over.to_vec();
    e.sort_by(|a, b| a.partial_cmp(b).unwrap());
    o.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let cdf = |s: &[f64], x: f64| s.partition_point(|&v| v <= x) as f64 / s.len() as f64;
    let pooled: Vec<f64> = e.iter().chain(&o).copied().collect();
    pooled.iter().map(|&x| cdf(&e, x) - cdf(&o, x)).sum::<f64>() / pooled.len() as f64
}

/// KS-tests one metric across snapshots, each given as (exclusive values,
/// overlapping values). Snapshots with an empty group are skipped.
pub fn group_significance(groups: &[(Vec<f64>, Vec<f64>)]) -> GroupSignificance {
    let mut tested = 0;
    let mut significant = 0;
    let mut skipped = 0;
    let mut gaps = Vec::new();
    for (excl, over) in groups {
        if excl.is_empty() || over.is_empty() {
            skipped += 1;
            continue;
        }
        let k = ks_2samp(excl, over).expect("both groups nonempty");
        tested += 1;
        if is_significant(&k) {
            significant += 1;
        }
        gaps.push(cdf_gap(excl, over));
    }
    gaps.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let median = if gaps.is_empty() {
        0.0
    } else if gaps.len() % 2 == 1 {
        gaps[gaps.len() / 2]
    } else {
        (gaps[gaps.len() / 2 - 1] + gaps[gaps.len() / 2]) / 2.0
    };
    GroupSignificance {
        tested,
        significant,
        fraction: if tested == 0 { 0.0 } else { significant as f64 / tested as f64 },
        skipped,
        dominance: if median > 0.0 {
            Dominance::OverlappingHigher
        } else if median < 0.0 {
            Dominance::OverlappingLower
        } else {
            Dominance::Neither
        },
    }
}

pub const DEFAULT_METRICS: [&str; 5] = ["in_degree", "out_degree", "betweenness", "local_clustering", "pagerank"];

/// Per chain and metric: share of snapshots where overlapping and
/// exclusive nodes differ significantly.
pub fn ks_overlap_report(
    snaps: &[EdgeSetSnapshot],
    metrics: &[&str],
    opts: &crate::graph::AnalyzeOptions,
) -> BTreeMap<String, BTreeMap<String, GroupSignificance>> {
    use rayon::prelude::*;
    let mut by_ts: BTreeMap<DateTime<Utc>, Vec<&EdgeSetSnapshot>> = BTreeMap::new();
    for s in snaps {
        by_ts.entry(s.timestamp).or_default().push(s);
    }
    let jobs: Vec<(&EdgeSetSnapshot, BTreeSet<String>)> = by_ts
        .values()
        .filter_map(|g| partition(g).ok().map(|p| (g.clone(), p)))
        .flat_map(|(g, parts)| g.into_iter().zip(parts.into_iter().map(|p| p.overlapping)))
        .collect();
    // (chain, metric) -> groups, in timestamp order
    let results: Vec<(String, Vec<(String, (Vec<f64>, Vec<f64>))>)> = jobs
        .par_iter()
        .map(|(snap, over)| {
            let g = crate::graph::build_graph(snap);
            let per_metric = match crate::graph::analyze(&g, opts) {
                Ok((_, nodes)) => metrics
                    .iter()
                    .filter_map(|&m| {
                        let col = nodes.column(m)?;
                        let (mut e, mut o) = (Vec::new(), Vec::new());
                        for (v, id) in g.ids().iter().enumerate() {
                            if over.contains(id) {
                                o.push(col[v]);
                            } else {
                                e.push(col[v]);
                            }
                        }
                        Some((m.to_string(), (e, o)))
                    })
                    .collect(),
                Err(e) => {
                    log::warn!("{} {}: skipped: {e}", snap.chain, snap.timestamp);
                    Vec::new()
                }
            };
            (snap.chain.clone(), per_metric)
        })
        .collect();
    let mut grouped: BTreeMap<String, BTreeMap<String, Vec<(Vec<f64>, Vec<f64>)>>> = BTreeMap::new();
    for (chain, per_metric) in results {
        for (m, g) in per_metric {
            grouped.entry(chain.clone()).or_default().entry(m).or_default().push(g);
        }
    }
    grouped
        .into_iter()
        .map(|(c, ms)| (c, ms.into_iter().map(|(m, g)| (m, group_significance(&g))).collect()))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::TimeZone;

    fn snap(chain: &str, ts: i64, rec: &[(&str, &[&str])]) -> EdgeSetSnapshot {
        let mut s = EdgeSetSnapshot::new(chain, Utc.timestamp_opt(ts, 0).unwrap());
        for (k, v) in rec {
            s.records.insert(k.to_string(), v.iter().map(|x| x.to_string()).collect());
        }
        s
    }

    #[test]
    fn partition_examples() {
        let a = snap("a", 0, &[("X", &["A1"])]);
        let b = snap("b", 0, &[("X", &["B1"])]);
        let c = snap("c", 0, &[("X", &[])]);
        let p = partition(&[&a, &b, &c]).unwrap();
        for part in &p {
            assert!(part.overlapping.contains("X"));
            assert!(part.exclusive.is_disjoint(&part.overlapping));
        }
        assert!(p[0].exclusive.contains("A1"));
        assert_eq!(partition(&[&a]), Err(OverlapError::SingleChain));
    }

    #[test]
    fn edges_are_unordered() {
        let a = snap("a", 0, &[("u", &["v"])]);
        let b = snap("b", 0, &[("v", &["u"])]);
        let t = aggregate_overlaps(&[a, b]);
        assert_eq!(t.edges["2"], 1);
        assert_eq!(t.nodes["2"], 2);
    }

    #[test]
    fn ratios() {
        let a = snap("a", 0, &[("x", &["y"])]);
        let b = snap("b", 0, &[("x", &["y"])]);
        let c = snap("c", 60, &[("z", &[])]);
        let r = overlap_ratio_series(&[a, b, c]);
        assert_eq!(r.len(), 3);
        assert_eq!(r[0].ratio, 1.0);
        assert_eq!(r[2].ratio, 0.0);
    }

    #[test]
    fn skips_empty_groups() {
        let g = group_significance(&[(vec![1.0], vec![]), (vec![1.0, 2.0], vec![5.0, 6.0])]);
        assert_eq!((g.tested, g.skipped), (1, 1));
        assert_eq!(g.dominance, Dominance::OverlappingHigher);
    }
}
