//! Static node-removal attacks and spectral edge cuts.

mod spectral;

pub use spectral::{cut_of, fiedler_cut, fiedler_vector, laplacian_matvec, SpectralCut};

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{
    betweenness, build_graph, component_labels, diameter_of, restrict, AnalyzeOptions, OverlayGraph,
    UndirectedAdj,
};
use crate::overlap::{node_key, partition};
use crate::snapstore::EdgeSetSnapshot;
use crate::stats::minmax_normalize;

#[derive(Debug, Error, PartialEq)]
pub enum ResilienceError {
    #[error("no overlapping nodes at this timestamp")]
    NoOverlap,
    #[error("graph is disconnected")]
    Disconnected,
    #[error("need at least {0} nodes")]
    TooSmall(usize),
    #[error("eigensolver did not converge after {0} iterations")]
    NonConvergence(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    OutDegree,
    Betweenness,
    Random(u64),
}

impl Strategy {
    pub fn name(self) -> String {
        match self {
            Strategy::OutDegree => "out_degree".into(),
            Strategy::Betweenness => "betweenness".into(),
            Strategy::Random(s) => format!("random:{s}"),
        }
    }
}

impl std::str::FromStr for Strategy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "out_degree" | "degree" => Ok(Strategy::OutDegree),
            "betweenness" => Ok(Strategy::Betweenness),
            "random" => Ok(Strategy::Random(0)),
            _ => s
                .strip_prefix("random:")
                .and_then(|v| v.parse().ok())
                .map(Strategy::Random)
                .ok_or_else(|| format!("unknown strategy {s:?}")),
        }
    }
}

/// Sorts node indices by descending score; ties keep index order, which
/// is lexicographic by id.
fn descending(scores: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    idx
}

/// Static removal priority computed once on the intact graph.
pub fn rank_nodes(g: &OverlayGraph, strategy: Strategy, opts: &AnalyzeOptions) -> Vec<usize> {
    match strategy {
        Strategy::OutDegree => {
            let d: Vec<f64> = g.out_degrees().into_iter().map(|d| d as f64).collect();
            descending(&d)
        }
        Strategy::Betweenness => {
            let b = betweenness(g, opts.betweenness_exact_threshold, opts.betweenness_pivots, opts.seed);
            descending(&b.raw)
        }
        Strategy::Random(seed) => {
            let mut idx: Vec<usize> = (0..g.node_count()).collect();
            idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
            idx
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default)]
pub struct PercolateOptions {
    pub max_frac: f64,
    /// `None` picks 1 up to 10k nodes, else `⌈0.001·N⌉`.
    pub stride: Option<usize>,
    pub diameter_sweeps: usize,
    pub seed: u64,
}

impl Default for PercolateOptions {
    fn default() -> Self {
        PercolateOptions {
            max_frac: 0.12,
            stride: None,
            diameter_sweeps: 4,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AttackStep {
    pub removed: usize,
    pub frac_removed: f64,
    pub lcc_size: usize,
    pub n_components: usize,
    /// Approximate diameter of the remaining largest component.
    pub approx_diameter: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AttackTrace {
    pub strategy: String,
    pub n_nodes: usize,
    pub initial_lcc: usize,
    pub steps: Vec<AttackStep>,
    /// Fewest removals with LCC at most half its initial size.
    pub nodes_to_50: Option<usize>,
    /// Removed fraction at which the LCC first drops to 1% of its initial size.
    pub f_c: Option<f64>,
    /// False when the order ran out before `max_frac`.
    pub complete: bool,
}

impl AttackTrace {
    pub fn to_tsv(&self) -> String {
        let mut s = String::from("frac\tlcc\tn_comp\tdiam\n");
        for st in &self.steps {
            let _ = writeln!(s, "{}\t{}\t{}\t{}", st.frac_removed, st.lcc_size, st.n_components, st.approx_diameter);
        }
        s
    }
}

pub fn default_stride(n: usize) -> usize {
    if n <= 10_000 {
        1
    } else {
        n.div_ceil(1000)
    }
}

/// LCC size, component count and LCC diameter of the alive subgraph.
fn measure(adj: &UndirectedAdj, alive: &[bool], sweeps: usize, seed: u64) -> (usize, usize, u32) {
    let members: Vec<usize> = (0..adj.len()).filter(|&v| alive[v]).collect();
    if members.is_empty() {
        return (0, 0, 0);
    }
    let sub = restrict(adj, &members);
    let (label, k) = component_labels(&sub);
    let mut sizes = vec![0usize; k];
    for &l in &label {
        sizes[l] += 1;
    }
    let best = (0..k).max_by_key(|&c| (sizes[c], std::cmp::Reverse(c))).unwrap();
    let lcc: Vec<usize> = (0..sub.len()).filter(|&v| label[v] == best).collect();
    let diam = diameter_of(&restrict(&sub, &lcc), sweeps, seed).unwrap_or(0);
    (sizes[best], k, diam)
}

/// Removes nodes in `order`, recording the remaining structure every
/// `stride` removals and after the last one.
pub fn percolate(g: &OverlayGraph, order: &[usize], strategy: &str, opts: &PercolateOptions) -> AttackTrace {
    let n = g.node_count();
    let adj = g.undirected();
    let budget = (opts.max_frac * n as f64).floor() as usize;
    let k = budget.min(order.len());
    let stride = opts.stride.unwrap_or_else(|| default_stride(n)).max(1);
    let mut alive = vec![true; n];
    let record = |removed: usize, alive: &[bool]| {
        let (lcc, comps, diam) = measure(&adj, alive, opts.diameter_sweeps, opts.seed);
        AttackStep {
            removed,
            frac_removed: removed as f64 / n as f64,
            lcc_size: lcc,
            n_components: comps,
            approx_diameter: diam,
        }
    };
    let mut steps = vec![record(0, &alive)];
    for (i, &v) in order[..k].iter().enumerate() {
        alive[v] = false;
        let removed = i + 1;
        if removed % stride == 0 || removed == k {
            steps.push(record(removed, &alive));
        }
    }
    let initial = steps[0].lcc_size;
    let first = |limit: f64| steps.iter().find(|s| (s.lcc_size as f64) <= limit);
    AttackTrace {
        strategy: strategy.to_string(),
        n_nodes: n,
        initial_lcc: initial,
        nodes_to_50: first(0.5 * initial as f64).map(|s| s.removed),
        f_c: first(0.01 * initial as f64).map(|s| s.frac_removed),
        complete: k == budget,
        steps,
    }
}

/// Raw betweenness per node key for one snapshot.
pub fn chain_betweenness(snap: &EdgeSetSnapshot, opts: &AnalyzeOptions) -> BTreeMap<String, f64> {
    let g = build_graph(snap);
    let b = betweenness(&g, opts.betweenness_exact_threshold, opts.betweenness_pivots, opts.seed);
    g.ids().iter().cloned().zip(b.raw).collect()
}

/// Global removal order of the overlapping nodes at one timestamp: each
/// node scores the maximum of its per-chain min-max normalized
/// betweenness. Ties go to the smaller id.
pub fn overlap_attack_order(
    snaps: &[&EdgeSetSnapshot],
    betweenness: &BTreeMap<String, BTreeMap<String, f64>>,
) -> Result<Vec<String>, ResilienceError> {
    let parts = partition(snaps).map_err(|_| ResilienceError::NoOverlap)?;
    let candidates: BTreeSet<&String> = parts.iter().flat_map(|p| p.overlapping.iter()).collect();
    if candidates.is_empty() {
        return Err(ResilienceError::NoOverlap);
    }
    let mut score: BTreeMap<&str, f64> = BTreeMap::new();
    for (chain, per_node) in betweenness {
        let mut keyed: BTreeMap<&str, f64> = BTreeMap::new();
        for (id, &b) in per_node {
            let e = keyed.entry(node_key(id)).or_insert(f64::NEG_INFINITY);
            *e = e.max(b);
        }
        let vals: Vec<f64> = keyed.values().copied().collect();
        let norm = minmax_normalize(&vals);
        let part = parts.iter().find(|p| &p.chain == chain);
        for ((id, _), nv) in keyed.iter().zip(norm) {
            if part.is_some_and(|p| p.overlapping.contains(*id)) {
                let e = score.entry(id).or_insert(f64::NEG_INFINITY);
                *e = e.max(nv);
            }
        }
    }
    let mut out: Vec<(&str, f64)> = candidates
        .iter()
        .map(|c| (c.as_str(), score.get(c.as_str()).copied().unwrap_or(0.0)))
        .collect();
    out.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(b.0)));
    Ok(out.into_iter().map(|(k, _)| k.to_string()).collect())
}

/// Maps a global key order onto one graph, skipping absent nodes.
pub fn order_for(g: &OverlayGraph, keys: &[String]) -> Vec<usize> {
    keys.iter().filter_map(|k| g.index_of(k)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::{prop_assert, prop_assert_eq, proptest};
    use rand::SeedableRng;
    use crate::graph::gen;
    use chrono::TimeZone;

    fn star(n: usize) -> OverlayGraph {
        let mut out = vec![Vec::new(); n];
        out[0] = (1..n as u32).collect();
        OverlayGraph::from_adjacency(&out)
    }

    #[test]
    fn rankings() {
        let g = star(6);
        let o = AnalyzeOptions::default();
        assert_eq!(rank_nodes(&g, Strategy::OutDegree, &o)[0], 0);
        let path = OverlayGraph::from_adjacency(&[vec![1], vec![2], vec![]]);
        assert_eq!(rank_nodes(&path, Strategy::Betweenness, &o)[0], 1);
        let a = rank_nodes(&g, Strategy::Random(7), &o);
        assert_eq!(a, rank_nodes(&g, Strategy::Random(7), &o));
        let mut sorted = a.clone();
        sorted.sort_unstable();
        assert_eq!(sorted, (0..6).collect::<Vec<_>>());
        assert_eq!("random:7".parse::<Strategy>().unwrap(), Strategy::Random(7));
    }

    #[test]
    fn star_collapses_after_hub() {
        let g = star(11);
        let t = percolate(&g, &[0], "hub", &PercolateOptions { max_frac: 0.1, ..Default::default() });
        assert_eq!(t.steps[0].lcc_size, 11);
        assert_eq!(t.steps[0].n_components, 1);
        assert_eq!(t.steps[1].lcc_size, 1);
        assert_eq!(t.steps[1].n_components, 10);
        assert_eq!(t.nodes_to_50, Some(1));
    }

    #[test]
    fn cut_vertex_splits_cliques() {
        // two 10-cliques, both joined to node 20
        let mut adj: UndirectedAdj = vec![Vec::new(); 21];
        for base in [0u32, 10] {
            for i in base..base + 10 {
                for j in base..base + 10 {
                    if i != j {
                        adj[i as usize].push(j);
                    }
                }
                adj[i as usize].push(20);
                adj[20].push(i);
            }
        }
        let g = OverlayGraph::from_adjacency(&adj);
        let t = percolate(&g, &[20], "cut", &PercolateOptions { max_frac: 0.05, ..Default::default() });
        assert_eq!(t.steps.last().unwrap().n_components, 2);
        assert_eq!(t.steps.last().unwrap().lcc_size, 10);
    }

    #[test]
    fn stride_trace_is_subsequence() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let g = OverlayGraph::from_adjacency(&gen::gnp_directed(200, 0.02, &mut rng));
        let order = rank_nodes(&g, Strategy::OutDegree, &AnalyzeOptions::default());
        let base = PercolateOptions { max_frac: 0.3, ..Default::default() };
        let full = percolate(&g, &order, "d", &PercolateOptions { stride: Some(1), ..base });
        let coarse = percolate(&g, &order, "d", &PercolateOptions { stride: Some(7), ..base });
        for st in &coarse.steps {
            assert_eq!(&full.steps[st.removed], st);
        }
        assert!(full.steps.windows(2).all(|w| w[1].lcc_size <= w[0].lcc_size));
        assert_eq!(coarse.steps.last().unwrap().removed, 60);
    }

    fn snap(chain: &str, edges: &[(&str, &str)]) -> EdgeSetSnapshot {
        let mut s = EdgeSetSnapshot::new(chain, chrono::Utc.timestamp_opt(0, 0).unwrap());
        for (a, b) in edges {
            s.records.entry(a.to_string()).or_default().insert(b.to_string());
        }
        s
    }

    #[test]
    fn overlap_order_uses_max_normalized_score() {
        let a = snap("A", &[("x", "o1"), ("o1", "y"), ("y", "o2")]);
        let b = snap("B", &[("p", "o2"), ("o2", "q"), ("q", "o1")]);
        let mut bet = BTreeMap::new();
        bet.insert("A".to_string(), BTreeMap::from([("x".into(), 0.0), ("o1".into(), 0.9), ("y".into(), 1.0), ("o2".into(), 0.0)]));
        bet.insert("B".to_string(), BTreeMap::from([("p".into(), 0.0), ("o2".into(), 0.2), ("q".into(), 1.0), ("o1".into(), 0.0)]));
        let order = overlap_attack_order(&[&a, &b], &bet).unwrap();
        assert_eq!(order, vec!["o1".to_string(), "o2".to_string()]);
        let lone = snap("C", &[("u", "v")]);
        assert_eq!(overlap_attack_order(&[&a, &lone], &bet), Err(ResilienceError::NoOverlap));
    }

    proptest! {
        #[test]
        fn order_is_a_permutation_and_lcc_never_grows(n in 5usize..60, p in 0.02f64..0.3, seed in 0u64..1000, which in 0usize..3) {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let g = OverlayGraph::from_adjacency(&gen::gnp_directed(n, p, &mut rng));
            let s = [Strategy::OutDegree, Strategy::Betweenness, Strategy::Random(seed)][which];
            let order = rank_nodes(&g, s, &AnalyzeOptions::default());
            let mut sorted = order.clone();
            sorted.sort_unstable();
            prop_assert_eq!(sorted, (0..n).collect::<Vec<_>>());
            let opts = PercolateOptions { max_frac: 1.0, stride: Some(1), ..Default::default() };
            let t = percolate(&g, &order, &s.name(), &opts);
            prop_assert!(t.steps.windows(2).all(|w| w[1].lcc_size <= w[0].lcc_size));
        }
    }
}
