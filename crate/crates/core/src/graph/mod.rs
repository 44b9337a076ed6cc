//! Directed overlay graphs built from snapshots, and their structural
//! metrics. Undirected metrics run on the symmetric projection.

mod centrality;
pub mod gen;
mod metrics;
mod report;
mod smallworld;

pub use centrality::{betweenness, pagerank, Betweenness};
pub use metrics::{
    approx_diameter, assortativity, avg_shortest_path, bfs_distances, clustering, component_labels,
    components, diameter_of, restrict,
    exact_diameter, largest_component, lcc_projection, out_in_ratio, reciprocity, triangles, Clustering, Components,
    OutInRatio,
};
pub use report::{analyze, AnalyzeOptions, MetricReport, NodeMetrics};
pub use smallworld::{small_world_omega, OmegaBaseline, OmegaReport};

use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

use crate::addr::collapse_port;
use crate::snapstore::EdgeSetSnapshot;

#[derive(Debug, Error, PartialEq)]
pub enum GraphError {
    #[error("graph is empty")]
    EmptyGraph,
    #[error("degenerate input: {0}")]
    Degenerate(&'static str),
    #[error("no convergence after {0} iterations")]
    NonConvergence(usize),
    #[error("random baseline stayed disconnected after {0} attempts")]
    DisconnectedRandomSample(usize),
}

/// Undirected adjacency lists, sorted and duplicate-free.
pub type UndirectedAdj = Vec<Vec<u32>>;

/// Simple digraph (no self-loops, no parallel edges) over lexicographically
/// indexed node ids.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct OverlayGraph {
    ids: Vec<String>,
    out: Vec<Vec<u32>>,
    inn: Vec<Vec<u32>>,
    n_edges: usize,
}

impl OverlayGraph {
    /// Builds from arbitrary id pairs; self-loops are dropped.
    pub fn from_edges<I, S>(nodes: impl IntoIterator<Item = S>, edges: I) -> Self
    where
        I: IntoIterator<Item = (S, S)>,
        S: AsRef<str>,
    {
        let mut set: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
        for n in nodes {
            set.entry(n.as_ref().to_string()).or_default();
        }
        for (a, b) in edges {
            let (a, b) = (a.as_ref().to_string(), b.as_ref().to_string());
            set.entry(b.clone()).or_default();
            if a != b {
                set.entry(a).or_default().insert(b);
            } else {
                set.entry(a).or_default();
            }
        }
        let ids: Vec<String> = set.keys().cloned().collect();
        let index: BTreeMap<&str, u32> = ids
            .iter()
            .enumerate()
            .map(|(i, s)| (s.as_str(), i as u32))
            .collect();
        let mut out = vec![Vec::new(); ids.len()];
        let mut inn = vec![Vec::new(); ids.len()];
        let mut n_edges = 0;
        for (src, dsts) in &set {
            let s = index[src.as_str()];
            for d in dsts {
                let t = index[d.as_str()];
                out[s as usize].push(t);
                inn[t as usize].push(s);
                n_edges += 1;
            }
        }
        // out lists come sorted from the BTreeSet; in lists by source order
        OverlayGraph {
            ids,
            out,
            inn,
            n_edges,
        }
    }

    /// Builds from index adjacency (`out[i]` = successors of node i) with
    /// ids `0..n` rendered zero-padded so lexicographic order is numeric.
    pub fn from_adjacency(out: &[Vec<u32>]) -> Self {
        let width = out.len().max(1).to_string().len();
        let name = |i: usize| format!("{i:0width$}");
        let nodes: Vec<String> = (0..out.len()).map(name).collect();
        let edges: Vec<(String, String)> = out
            .iter()
            .enumerate()
            .flat_map(|(i, s)| s.iter().map(move |&j| (name(i), name(j as usize))))
            .collect();
        Self::from_edges(nodes, edges)
    }

    pub fn node_count(&self) -> usize {
        self.ids.len()
    }

    pub fn edge_count(&self) -> usize {
        self.n_edges
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.ids.binary_search_by(|s| s.as_str().cmp(id)).ok()
    }

    pub fn out_neighbors(&self, v: usize) -> &[u32] {
        &self.out[v]
    }

    pub fn in_neighbors(&self, v: usize) -> &[u32] {
        &self.inn[v]
    }

    pub fn out_degrees(&self) -> Vec<usize> {
        self.out.iter().map(Vec::len).collect()
    }

    pub fn in_degrees(&self) -> Vec<usize> {
        self.inn.iter().map(Vec::len).collect()
    }

    pub fn has_edge(&self, a: usize, b: usize) -> bool {
        self.out[a].binary_search(&(b as u32)).is_ok()
    }

    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.out
            .iter()
            .enumerate()
            .flat_map(|(i, s)| s.iter().map(move |&j| (i, j as usize)))
    }

    /// Symmetric projection.
    pub fn undirected(&self) -> UndirectedAdj {
        (0..self.node_count())
            .map(|v| {
                let mut n: Vec<u32> = self.out[v].iter().chain(&self.inn[v]).copied().collect();
                n.sort_unstable();
                n.dedup();
                n
            })
            .collect()
    }

    /// `|E| / (N(N−1))`.
    pub fn density(&self) -> f64 {
        let n = self.node_count() as f64;
        if n < 2.0 {
            return 0.0;
        }
        self.n_edges as f64 / (n * (n - 1.0))
    }

    /// Subgraph induced by nodes where `keep` is true, ids preserved.
    pub fn induced(&self, keep: &[bool]) -> OverlayGraph {
        let nodes = (0..self.node_count()).filter(|&v| keep[v]).map(|v| self.ids[v].as_str());
        let edges = self
            .edges()
            .filter(|&(a, b)| keep[a] && keep[b])
            .map(|(a, b)| (self.ids[a].as_str(), self.ids[b].as_str()));
        OverlayGraph::from_edges(nodes, edges)
    }
}

/// Snapshot to digraph: nodes are all sources and all advertised peers,
/// raw `ip:port` ids collapse to the address.
pub fn build_graph(snap: &EdgeSetSnapshot) -> OverlayGraph {
    let nodes = snap.records.keys().map(|s| collapse_port(s));
    let edges = snap
        .records
        .iter()
        .flat_map(|(s, ds)| ds.iter().map(move |d| (collapse_port(s), collapse_port(d))));
    OverlayGraph::from_edges(nodes, edges)
}

/// Number of undirected edges in a projection.
pub fn undirected_edge_count(adj: &UndirectedAdj) -> usize {
    adj.iter().map(Vec::len).sum::<usize>() / 2
}
